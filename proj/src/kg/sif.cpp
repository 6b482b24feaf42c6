#include "pmkg/kg/sif.hpp"

#include <Eigen/Dense>
#include <fstream>
#include <sstream>

#include "pmkg/error.hpp"

namespace pmkg {

double sif_weight(double a, double probability) { return a / (a + probability); }

SifResult sif_embed(const std::vector<std::vector<std::string>>& entity_tokens, const WordVectors& words,
                    const std::unordered_map<std::string, double>& word_probability, double a) {
  if (!(a > 0.0)) fail_usage("bad-sif-weight", "a must be positive");
  if (entity_tokens.empty()) fail_data("no-entities", "nothing to embed");
  const std::size_t n = entity_tokens.size();
  const std::size_t d = words.dim;
  if (d == 0) fail_data("empty-word-vectors");

  SifResult result;
  Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t non_empty = 0;
  std::vector<bool> empty(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t used = 0;
    for (const auto& token : entity_tokens[i]) {
      const auto freq = word_probability.find(token);
      if (freq == word_probability.end()) fail_data("missing-frequency", token);
      const auto vec = words.vectors.find(token);
      if (vec == words.vectors.end()) continue;
      const double w = sif_weight(a, freq->second);
      for (std::size_t c = 0; c < d; ++c) stacked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) += w * vec->second[c];
      ++used;
    }
    if (used == 0) {
      result.warnings.push_back("entity " + std::to_string(i) + " has no known tokens; using the zero vector");
      empty[i] = true;
      continue;
    }
    stacked.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(used);
    ++non_empty;
  }
  if (non_empty == 0) fail_data("all-entities-empty", "no entity has a token with a word vector");

  // First right singular vector of the stacked matrix = top eigenvector of VᵀV.
  const Eigen::MatrixXd gram = stacked.transpose() * stacked;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  const Eigen::VectorXd u = solver.eigenvectors().col(static_cast<Eigen::Index>(d) - 1);
  stacked -= (stacked * u) * u.transpose();

  result.embeddings = Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = stacked(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      result.embeddings.at(i, c) = v;
      norm += v * v;
    }
    if (norm <= 1e-24 && !empty[i]) {
      result.warnings.push_back("entity " + std::to_string(i) + " collapsed to zero after component removal");
    }
  }
  return result;
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_entity_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("unreadable-file", path.string());
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail_data("malformed-tokens", path.string() + ":" + std::to_string(number) + " expected name<TAB>tokens");
    }
    std::istringstream fields(line.substr(tab + 1));
    std::vector<std::string> tokens;
    std::string token;
    while (fields >> token) tokens.push_back(token);
    out.emplace_back(line.substr(0, tab), std::move(tokens));
  }
  return out;
}

WordVectors read_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("unreadable-file", path.string());
  WordVectors out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof() || values.empty() || (out.dim != 0 && values.size() != out.dim)) {
      fail_data("malformed-vectors", path.string() + ":" + std::to_string(number));
    }
    out.dim = values.size();
    out.vectors[word] = std::move(values);
  }
  return out;
}

std::unordered_map<std::string, double> read_word_probabilities(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("unreadable-file", path.string());
  std::unordered_map<std::string, double> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string word;
    double p = 0.0;
    if (!(fields >> word)) continue;
    if (!(fields >> p) || p < 0.0) {
      fail_data("malformed-frequencies", path.string() + ":" + std::to_string(number));
    }
    out[word] = p;
  }
  return out;
}

}  // namespace pmkg
