#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmkg/numerics/tensor.hpp"

namespace pmkg {

struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

struct SifResult {
  Tensor embeddings;  // entities × dim
  std::vector<std::string> warnings;
};

inline constexpr double kDefaultSifWeight = 1e-3;

// Smooth-inverse-frequency embedding: weighted average of known word vectors
// with weights a / (a + p(w)), followed by removal of the projection onto the
// first singular vector of the stacked averages. Tokens without a vector are
// skipped; every token must have a frequency.
SifResult sif_embed(const std::vector<std::vector<std::string>>& entity_tokens,
                    const WordVectors& words,
                    const std::unordered_map<std::string, double>& word_probability,
                    double a = kDefaultSifWeight);

double sif_weight(double a, double probability);

// name<TAB>space-separated tokens
std::vector<std::pair<std::string, std::vector<std::string>>> read_entity_tokens(
    const std::filesystem::path& path);
// word v1 ... vd
WordVectors read_word_vectors(const std::filesystem::path& path);
// word<whitespace>probability
std::unordered_map<std::string, double> read_word_probabilities(const std::filesystem::path& path);

}  // namespace pmkg
