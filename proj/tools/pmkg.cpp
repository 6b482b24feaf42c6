#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pmkg/error.hpp"
#include "pmkg/kg/dataset.hpp"
#include "pmkg/kg/sif.hpp"
#include "pmkg/kg/synthetic.hpp"
#include "pmkg/log.hpp"
#include "pmkg/train/gradcheck_model.hpp"
#include "pmkg/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace pmkg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckFailed = 3;

std::size_t worker_threads() {
  const char* env = std::getenv("PMKG_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (*end != '\0' || n == 0) fail_usage("bad-threads", std::string("PMKG_THREADS=") + env);
  return n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("unwritable-file", path.string());
  out << text;
  if (!out) fail_data("unwritable-file", path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail_data("unwritable-path", dir.string());
}

DatasetOptions dataset_options(const TrainConfig& config) { return {config.neighbor_cap, config.seed}; }

// ---- gen-synthetic

struct GenArgs {
  SyntheticSpec spec;
  fs::path out;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* cmd = app.add_subcommand("gen-synthetic", "Write a synthetic dataset with planted type patterns");
  auto& s = a.spec;
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--seed", s.seed, "Generator seed")->capture_default_str();
  cmd->add_option("--types", s.types)->capture_default_str();
  cmd->add_option("--entities-per-type", s.entities_per_type)->capture_default_str();
  cmd->add_option("--relations", s.relations, "Few-shot relations in all splits")->capture_default_str();
  cmd->add_option("--triples-per-relation", s.triples_per_relation)->capture_default_str();
  cmd->add_option("--valid-relations", s.valid_relations)->capture_default_str();
  cmd->add_option("--test-relations", s.test_relations)->capture_default_str();
  cmd->add_option("--background-relations", s.background_relations)->capture_default_str();
  cmd->add_option("--background-triples", s.background_triples_per_relation)->capture_default_str();
  cmd->add_flag("--typed-background", s.background_typed, "Background relations respect entity types");
  cmd->add_option("--dim", s.dim)->capture_default_str();
  cmd->add_option("--candidates", s.candidates)->capture_default_str();
  cmd->add_option("--semantic-noise", s.semantic_noise)->capture_default_str();
  cmd->add_option("--pattern-share", s.pattern_share, "Part of each translation shared within a type pattern")
      ->capture_default_str();
  cmd->add_option("--held-out-share", s.held_out_share,
                  "Share of each type's entities reserved for valid/test relations")
      ->capture_default_str();
}

int run_gen(const GenArgs& a) {
  const SyntheticDataset data = generate_synthetic_kg(a.spec);
  write_synthetic(data, a.out);
  const Dataset expected = to_dataset(data);
  const Dataset reloaded = load_dataset(a.out);
  if (!(reloaded.train == expected.train && reloaded.valid == expected.valid && reloaded.test == expected.test &&
        reloaded.candidates == expected.candidates && reloaded.kg.entities() == expected.kg.entities() &&
        reloaded.kg.relations() == expected.kg.relations())) {
    fail_data("reload-mismatch", "the written dataset does not read back identically");
  }
  std::cout << "wrote " << a.out.string() << ": " << data.entities.size() << " entities, "
            << data.relations.size() << " relations, " << data.background.size() << " background triples\n";
  return 0;
}

// ---- train

struct TrainArgs {
  fs::path data;
  fs::path out;
  fs::path config_file;
  std::vector<std::string> settings;
  std::optional<std::size_t> steps;
  std::optional<std::string> ablate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> projection;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Meta-train on a dataset directory");
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--out", a.out, "Run directory (checkpoint, log, report)")->required();
  cmd->add_option("--config", a.config_file, "key = value config file");
  cmd->add_option("--set", a.settings, "key=value override, repeatable");
  cmd->add_option("--steps", a.steps);
  cmd->add_option("--ablate", a.ablate, "none, semantic, pool, fusion-prompt or pool-tuning");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--projection-interpretation", a.projection);
}

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig config;
  if (!a.config_file.empty()) apply_config_file(config, a.config_file);
  for (const auto& s : a.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail_usage("bad-setting", "expected key=value, got '" + s + "'");
    apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.steps) apply_setting(config, "steps", std::to_string(*a.steps));
  if (a.ablate) apply_setting(config, "ablation", *a.ablate);
  if (a.seed) apply_setting(config, "seed", std::to_string(*a.seed));
  if (a.projection) apply_setting(config, "projection_interpretation", *a.projection);
  config.validate();
  return config;
}

int run_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  make_dir(a.out);
  write_text(a.out / "run-config.txt", to_config_text(config));
  const Dataset dataset = load_dataset(a.data, dataset_options(config));

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(config, dataset, {worker_threads(), a.out / "train_log.csv"});
  const EvalReport test = evaluate(result.best, dataset, dataset.test, config.shots, eval_seed(config));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_checkpoint(a.out / "model.ckpt", result.checkpoint);
  const std::string report = report_json(config, result, test);
  write_text(a.out / "report.json", report);
  std::cout << report;
  log_info("training took " + std::to_string(seconds) + " s");
  return 0;
}

// ---- eval

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::optional<std::size_t> shots;
  fs::path out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Rank candidates for a split with a trained checkpoint");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--split", a.split)->check(CLI::IsMember({"train", "valid", "test"}))->capture_default_str();
  cmd->add_option("--shots", a.shots, "Support size K (default: the training value)");
  cmd->add_option("--out", a.out, "Also write the metrics JSON here");
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  TrainConfig config;
  apply_config_text(config, ckpt.config_text, a.checkpoint.string());
  const Dataset dataset = load_dataset(a.data, dataset_options(config));
  check_vocabulary(ckpt, dataset.kg);

  const auto& tasks = a.split == "train" ? dataset.train : a.split == "valid" ? dataset.valid : dataset.test;
  const Model model{config.resolved_model(), ckpt.params};
  const EvalReport report = evaluate(model, dataset, tasks, a.shots.value_or(config.shots), eval_seed(config));
  const std::string json = metrics_json(report, a.split);
  if (!a.out.empty()) write_text(a.out, json);
  std::cout << json;
  return 0;
}

// ---- gradcheck

struct GradArgs {
  std::size_t dim = 4;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool second_order = false;
};

void add_gradcheck(CLI::App& app, GradArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full episode gradient");
  cmd->add_option("--dim", a.dim)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--eps", a.eps, "Central-difference step")->capture_default_str();
  cmd->add_option("--tolerance", a.tolerance)->capture_default_str();
  cmd->add_flag("--second-order", a.second_order);
}

int run_gradcheck(const GradArgs& a) {
  if (a.dim == 0 || !(a.eps > 0.0)) fail_usage("bad-option", "dim and eps must be positive");
  const auto start = std::chrono::steady_clock::now();
  const auto p = make_gradcheck_problem(a.dim, a.seed, a.second_order);
  const auto groups = gradcheck_model(p.model, p.dataset.kg, p.episode, p.batch_prompts, a.eps);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& g : groups) {
    std::printf("%-20s max_rel_err %.3e  checked %zu  skipped %zu  worst %s\n", g.group.c_str(),
                g.max_relative_error, g.checked, g.skipped, g.worst_parameter.c_str());
  }
  const bool ok = gradcheck_passes(groups, a.tolerance);
  std::printf("%s (tolerance %.1e, %.1f s)\n", ok ? "PASS" : "FAIL", a.tolerance, seconds);
  return ok ? 0 : kExitCheckFailed;
}

// ---- embed-sif

struct SifArgs {
  fs::path tokens, vectors, freqs, out;
  double a = kDefaultSifWeight;
};

void add_sif(CLI::App& app, SifArgs& a) {
  auto* cmd = app.add_subcommand("embed-sif", "Build semantic entity embeddings from word vectors");
  cmd->add_option("--tokens", a.tokens, "name<TAB>tokens per line")->required();
  cmd->add_option("--vectors", a.vectors, "word v1 v2 ... per line")->required();
  cmd->add_option("--freqs", a.freqs, "word probability per line")->required();
  cmd->add_option("--out", a.out, "Embedding file to write")->required();
  cmd->add_option("--a", a.a, "Weight parameter a")->capture_default_str();
}

int run_sif(const SifArgs& a) {
  const auto named = read_entity_tokens(a.tokens);
  Vocabulary vocab;
  std::vector<std::vector<std::string>> tokens;
  for (const auto& [name, toks] : named) {
    if (vocab.find(name) != nullptr) fail_data("duplicate-entity", name);
    vocab.intern(name);
    tokens.push_back(toks);
  }
  const SifResult result = sif_embed(tokens, read_word_vectors(a.vectors), read_word_probabilities(a.freqs), a.a);
  for (const auto& w : result.warnings) log_warn(w);
  write_embeddings(a.out, vocab, {EmbeddingKind::semantic_entity, result.embeddings});
  std::cout << "wrote " << vocab.size() << " embeddings to " << a.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompted meta-learning for few-shot knowledge graph completion"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  GenArgs gen;
  TrainArgs tr;
  EvalArgs ev;
  GradArgs gc;
  SifArgs sif;
  add_gen(app, gen);
  add_train(app, tr);
  add_eval(app, ev);
  add_gradcheck(app, gc);
  add_sif(app, sif);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (verbose) log_level() = LogLevel::info;
  if (quiet) log_level() = LogLevel::quiet;

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-synthetic") return run_gen(gen);
    if (name == "train") return run_train(tr);
    if (name == "eval") return run_eval(ev);
    if (name == "gradcheck") return run_gradcheck(gc);
    return run_sif(sif);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
