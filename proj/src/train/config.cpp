#include "pmkg/train/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "pmkg/error.hpp"

namespace pmkg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_size(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail_usage("bad-value", key + " = '" + v + "'");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail_usage("bad-value", key + " = '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_usage("bad-value", key + " = '" + v + "'");
}

std::string real_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Get>
Field size_field(Get at) {
  return {[at](TrainConfig& c, const std::string& k, const std::string& v) { at(c) = to_size(k, v); },
          [at](const TrainConfig& c) { return std::to_string(at(c)); }};
}

template <typename Get>
Field real_field(Get at) {
  return {[at](TrainConfig& c, const std::string& k, const std::string& v) { at(c) = to_real(k, v); },
          [at](const TrainConfig& c) { return real_text(at(c)); }};
}

template <typename E, typename Get>
Field enum_field(Get at, E (*parse)(const std::string&)) {
  return {[at, parse](TrainConfig& c, const std::string&, const std::string& v) { at(c) = parse(v); },
          [at](const TrainConfig& c) { return to_string(at(c)); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      {"dim", size_field([](auto& c) -> auto& { return c.model.dim; })},
      {"key_dim", size_field([](auto& c) -> auto& { return c.model.key_dim; })},
      {"pool_size", size_field([](auto& c) -> auto& { return c.model.pool_size; })},
      {"slope", real_field([](auto& c) -> auto& { return c.model.slope; })},
      {"temperature", real_field([](auto& c) -> auto& { return c.model.temperature; })},
      {"pool_negatives", size_field([](auto& c) -> auto& { return c.model.pool_negatives; })},
      {"pool_weight", real_field([](auto& c) -> auto& { return c.model.pool_weight; })},
      {"margin", real_field([](auto& c) -> auto& { return c.model.margin; })},
      {"dropout", real_field([](auto& c) -> auto& { return c.model.dropout; })},
      {"attention_score", enum_field(
                              [](auto& c) -> auto& { return c.model.attention_score; },
                              parse_attention_score)},
      {"attention_query", enum_field(
                              [](auto& c) -> auto& { return c.model.attention_query; },
                              parse_attention_query)},
      {"fusion_prompt", enum_field(
                            [](auto& c) -> auto& { return c.model.fusion_prompt; },
                            parse_fusion_prompt_mode)},
      {"projection_interpretation",
       enum_field(
           [](auto& c) -> auto& { return c.model.projection; },
           parse_projection_interpretation)},
      {"ablation", enum_field([](auto& c) -> auto& { return c.model.ablation; },
                                        parse_ablation)},
      {"second_order",
       Field{[](TrainConfig& c, const std::string& k, const std::string& v) { c.model.second_order = to_bool(k, v); },
             [](const TrainConfig& c) { return std::string(c.model.second_order ? "true" : "false"); }}},
      {"batch_size", size_field([](auto& c) -> auto& { return c.batch_size; })},
      {"learning_rate", real_field([](auto& c) -> auto& { return c.learning_rate; })},
      {"steps", size_field([](auto& c) -> auto& { return c.max_steps; })},
      {"eval_interval", size_field([](auto& c) -> auto& { return c.eval_interval; })},
      {"shots", size_field([](auto& c) -> auto& { return c.shots; })},
      {"queries", size_field([](auto& c) -> auto& { return c.queries; })},
      {"neighbor_cap", size_field([](auto& c) -> auto& { return c.neighbor_cap; })},
      {"seed", size_field([](auto& c) -> auto& { return c.seed; })},
      {"inner_lr",
       Field{[](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "auto") {
                 c.inner_lr.reset();
               } else {
                 c.inner_lr = to_real(k, v);
               }
             },
             [](const TrainConfig& c) { return c.inner_lr ? real_text(*c.inner_lr) : std::string("auto"); }}},
  };
  return table;
}

}  // namespace

ModelConfig TrainConfig::resolved_model() const {
  ModelConfig m = model;
  m.inner_lr = inner_lr.value_or(0.5 * learning_rate);
  return m;
}

void TrainConfig::validate() const {
  resolved_model().validate();
  auto bad = [](const std::string& what) { fail_usage("bad-config", what); };
  if (batch_size == 0) bad("batch_size must be positive");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (eval_interval == 0) bad("eval_interval must be positive");
  if (shots == 0) bad("shots must be at least 1");
  if (queries == 0) bad("queries must be at least 1");
  if (neighbor_cap == 0) bad("neighbor_cap must be at least 1");
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) fail_usage("unknown-key", key);
  it->second.set(config, key, value);
}

void apply_config_text(TrainConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail_usage("malformed-config", origin + ":" + std::to_string(number) + " expected key = value");
    }
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(TrainConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_usage("unreadable-config", path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(config, buffer.str(), path.string());
}

std::string to_config_text(const TrainConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace pmkg
