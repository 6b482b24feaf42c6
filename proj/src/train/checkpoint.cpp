#include "pmkg/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pmkg/error.hpp"

namespace pmkg {

namespace {

constexpr char kMagic[] = "PMKG1";
constexpr std::size_t kMagicSize = 5;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_ += s; }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return bytes(u32()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail_data("truncated-checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t vocabulary_hash(const Kg& kg) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= 0xffu;  // separator
    h *= 1099511628211ull;
  };
  for (const auto& n : kg.entities().names()) mix(n);
  mix("\t");
  for (const auto& n : kg.relations().names()) mix(n);
  return h;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::string(kMagic, kMagicSize));
  w.u64(ckpt.step);
  w.f64(ckpt.best_valid_mrr);
  w.text(ckpt.config_text);
  w.u64(ckpt.entity_count);
  w.u64(ckpt.relation_count);
  w.u64(ckpt.vocabulary_hash);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.text(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto s : t.shape()) w.u64(s);
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(kMagicSize) != std::string(kMagic, kMagicSize)) fail_data("bad-checkpoint", "missing PMKG1 header");
  Checkpoint c;
  c.step = r.u64();
  c.best_valid_mrr = r.f64();
  c.config_text = r.text();
  c.entity_count = r.u64();
  c.relation_count = r.u64();
  c.vocabulary_hash = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 2) fail_data("bad-checkpoint", name + " has rank " + std::to_string(rank));
    Tensor::Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& s : shape) {
      s = r.u64();
      if (s == 0 || s > (std::uint64_t{1} << 40)) fail_data("bad-checkpoint", name + " has a bad extent");
      total *= s;
    }
    if (total > (std::uint64_t{1} << 40)) fail_data("bad-checkpoint", name + " is too large");
    std::vector<double> values(total);
    for (auto& v : values) v = r.f64();
    c.params.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) fail_data("bad-checkpoint", "trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("unwritable-file", path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail_data("unwritable-file", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("unreadable-file", path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

void check_vocabulary(const Checkpoint& ckpt, const Kg& kg) {
  if (ckpt.entity_count != kg.entity_count() || ckpt.relation_count != kg.relation_count() ||
      ckpt.vocabulary_hash != vocabulary_hash(kg)) {
    fail_data("vocabulary-mismatch", "checkpoint was trained on a different entity/relation vocabulary");
  }
}

}  // namespace pmkg
