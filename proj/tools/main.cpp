// vcloze: generate knob-controlled visual cloze datasets and measure their bias.
//
// Every flag mirrors a key of the optional --config JSON file (dashes become
// underscores); flags given on the command line override the file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcloze/corpus.hpp"
#include "vcloze/diagnostics.hpp"
#include "vcloze/digest.hpp"
#include "vcloze/embedding_space.hpp"
#include "vcloze/errors.hpp"
#include "vcloze/qa_generator.hpp"
#include "vcloze/records.hpp"
#include "vcloze/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vcloze;

namespace {

constexpr const char* kOutDirEnv = "VCLOZE_OUT_DIR";

struct RunConfig {
  std::string corpus;
  std::string embeddings;
  std::string vocabulary;
  std::string out_dir;
  std::vector<std::string> datasets;
  std::string task = "cloze";
  std::string mode = "knobs";
  std::string knobs = "0,0,0";
  std::size_t n_q = 4;
  std::size_t n_a = 4;
  std::size_t k_c = 100;
  double k3_prob = 0.5;
  std::size_t min_steps = 5;
  std::uint64_t seed = 0;
  double valid_fraction = 0.2;
  std::size_t threads = 1;
  bool normalize = false;
  int epochs = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::size_t bins = 20;
  std::string solver;
  std::string histogram_csv;
  bool legacy = true;
  SynthParams synth;

  KnobConfig knob_config() const {
    KnobConfig k;
    parse_knob_tuple(knobs, k);
    k.n_q = n_q;
    k.n_a = n_a;
    k.k_c = k_c;
    k.k3_prob = k3_prob;
    k.min_steps = min_steps;
    k.seed = seed;
    k.validate();
    return k;
  }

  ProbeOptions probe_options() const { return {epochs, learning_rate, l2, true}; }
};

template <class T>
void take(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) field = it->get<T>();
}

void apply_config_file(const fs::path& path, RunConfig& c) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": expected a JSON object");
  static const std::vector<std::string> known = {
      "corpus", "embeddings", "vocabulary", "out_dir", "datasets", "task", "mode", "knobs",
      "n_q", "n_a", "k_c", "k3_prob", "min_steps", "seed", "valid_fraction", "threads",
      "normalize", "epochs", "learning_rate", "l2", "bins", "solver", "histogram_csv", "legacy",
      "n_recipes", "steps_lo", "steps_hi", "dim", "recipe_spread", "within_spread", "drift",
      "n_families", "member_spread"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError(path.string() + ": unknown key '" + key + "'");
    }
  }
  try {
    take(j, "corpus", c.corpus);
    take(j, "embeddings", c.embeddings);
    take(j, "vocabulary", c.vocabulary);
    take(j, "out_dir", c.out_dir);
    take(j, "datasets", c.datasets);
    take(j, "task", c.task);
    take(j, "mode", c.mode);
    if (auto it = j.find("knobs"); it != j.end()) {
      if (it->is_array()) {
        std::string s;
        for (const auto& v : *it) s += (s.empty() ? "" : ",") + std::to_string(v.get<int>());
        c.knobs = s;
      } else {
        c.knobs = it->get<std::string>();
      }
    }
    take(j, "n_q", c.n_q);
    take(j, "n_a", c.n_a);
    take(j, "k_c", c.k_c);
    take(j, "k3_prob", c.k3_prob);
    take(j, "min_steps", c.min_steps);
    take(j, "seed", c.seed);
    take(j, "valid_fraction", c.valid_fraction);
    take(j, "threads", c.threads);
    take(j, "normalize", c.normalize);
    take(j, "epochs", c.epochs);
    take(j, "learning_rate", c.learning_rate);
    take(j, "l2", c.l2);
    take(j, "bins", c.bins);
    take(j, "solver", c.solver);
    take(j, "histogram_csv", c.histogram_csv);
    take(j, "legacy", c.legacy);
    take(j, "n_recipes", c.synth.n_recipes);
    take(j, "steps_lo", c.synth.steps_lo);
    take(j, "steps_hi", c.synth.steps_hi);
    take(j, "dim", c.synth.dim);
    take(j, "recipe_spread", c.synth.recipe_spread);
    take(j, "within_spread", c.synth.within_spread);
    take(j, "drift", c.synth.drift);
    take(j, "n_families", c.synth.n_families);
    take(j, "member_spread", c.synth.member_spread);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// --- Option groups -----------------------------------------------------------

void add_inputs(CLI::App& sub, RunConfig& c, bool need_corpus) {
  auto* opt = sub.add_option("--corpus", c.corpus, "corpus JSONL");
  if (need_corpus) opt->description("corpus JSONL (required)");
  sub.add_option("--embeddings", c.embeddings, "embedding file (M3CE binary or JSON)");
  sub.add_flag("--normalize,!--no-normalize", c.normalize, "scale embeddings to unit norm");
}

void add_knobs(CLI::App& sub, RunConfig& c) {
  sub.add_option("--task", c.task, "cloze, coherence, ordering or all");
  sub.add_option("--mode", c.mode, "knobs or legacy");
  sub.add_option("--knobs", c.knobs, "knob tuple k1,k2,k3");
  sub.add_option("--n-q", c.n_q, "question slots");
  sub.add_option("--n-a", c.n_a, "answer choices");
  sub.add_option("--k-c", c.k_c, "neighbors in the distance ring");
  sub.add_option("--k3-prob", c.k3_prob, "probability of applying knob 3");
  sub.add_option("--min-steps", c.min_steps, "minimum recipe length");
  sub.add_option("--seed", c.seed, "random seed");
  sub.add_option("--valid-fraction", c.valid_fraction, "share of recipes in the valid split");
  sub.add_option("--threads", c.threads, "worker threads");
}

void add_probe(CLI::App& sub, RunConfig& c) {
  sub.add_option("--epochs", c.epochs, "probe epochs");
  sub.add_option("--learning-rate", c.learning_rate, "probe learning rate");
  sub.add_option("--l2", c.l2, "probe L2 penalty");
  sub.add_option("--bins", c.bins, "histogram bins");
}

// --- Shared helpers ----------------------------------------------------------

fs::path require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("--") + what + " is required");
  if (!fs::exists(path)) throw ValidationError(std::string(what) + " file not found: " + path);
  return path;
}

fs::path output_dir(const RunConfig& c) {
  fs::path dir = c.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    dir = env && *env ? env : "vcloze_out";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

EmbeddingStore load_store(const RunConfig& c) {
  auto store = load_embeddings(require_file(c.embeddings, "embeddings"));
  if (c.normalize) store.normalize();
  return store;
}

std::vector<Task> selected_tasks(const std::string& name) {
  if (name == "all") return {Task::cloze, Task::coherence, Task::ordering};
  return {task_from_string(name)};
}

// Datasets named by --dataset, or generated from the corpus. For cloze in
// knob mode the legacy contrast dataset comes first unless --no-legacy.
std::vector<Dataset> input_datasets(const RunConfig& c, const EmbeddingStore* store,
                                    bool with_legacy) {
  std::vector<Dataset> out;
  if (!c.datasets.empty()) {
    for (const auto& path : c.datasets) {
      out.push_back(dataset_from_records(load_jsonl(require_file(path, "dataset")), c.knob_config()));
    }
    return out;
  }
  const Corpus corpus = load_corpus(require_file(c.corpus, "corpus"));
  const KnobConfig knobs = c.knob_config();
  const Mode mode = mode_from_string(c.mode);
  const GenerationOptions gen{c.threads};
  for (Task t : selected_tasks(c.task)) {
    if (with_legacy && t == Task::cloze && mode == Mode::knobs) {
      out.push_back(generate_legacy_cloze(corpus, *store, knobs, gen));
    }
    out.push_back(generate(t, mode, corpus, *store, knobs, gen));
  }
  return out;
}

std::string label_of(const Dataset& ds) { return ds.label(); }

// --- Commands ------------------------------------------------------------------

int cmd_generate(const RunConfig& c) {
  const fs::path corpus_path = require_file(c.corpus, "corpus");
  const fs::path emb_path = require_file(c.embeddings, "embeddings");
  const KnobConfig knobs = c.knob_config();
  const Mode mode = mode_from_string(c.mode);
  const auto tasks = selected_tasks(c.task);
  const Corpus corpus = load_corpus(corpus_path);
  EmbeddingStore store = load_store(c);

  // Everything is built in memory first so a failure leaves no files behind.
  std::vector<std::pair<std::string, std::string>> files;
  json counts = json::object();
  json fallbacks = json::object();
  for (Task t : tasks) {
    const Dataset ds = generate(t, mode, corpus, store, knobs, {c.threads});
    const auto [train, valid] = split_dataset(ds, c.valid_fraction);
    const std::string label = label_of(ds);
    files.emplace_back(label + "_train.jsonl", to_jsonl(train.records));
    files.emplace_back(label + "_valid.jsonl", to_jsonl(valid.records));
    counts[std::string(to_string(t))] = {{"train", train.records.size()},
                                         {"valid", valid.records.size()}};
    fallbacks[std::string(to_string(t))] = fallback_count(ds);
  }

  json config = to_json(knobs);
  config["mode"] = to_string(mode);
  config["task"] = c.task;
  config["valid_fraction"] = c.valid_fraction;
  config["normalize"] = c.normalize;
  json file_digests = json::object();
  for (const auto& [name, body] : files) file_digests[name] = sha256_hex(body);
  const json manifest = {{"config", config},
                         {"seed", knobs.seed},
                         {"corpus_sha256", sha256_file(corpus_path)},
                         {"embeddings_sha256", sha256_file(emb_path)},
                         {"counts", counts},
                         {"fallback_counts", fallbacks},
                         {"files", file_digests}};

  const fs::path dir = output_dir(c);
  for (const auto& [name, body] : files) write_file_atomic(dir / name, body);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

int cmd_stats(const RunConfig& c) {
  json out = json::object();
  if (!c.corpus.empty() || c.datasets.empty()) {
    const Corpus corpus = load_corpus(require_file(c.corpus, "corpus"));
    json cj;
    if (!c.vocabulary.empty()) {
      const auto st = corpus_stats(corpus, load_vocabulary(require_file(c.vocabulary, "vocabulary")));
      cj = {{"in_vocab_ratio", st.in_vocab_ratio},
            {"in_vocab_count", st.in_vocab_count},
            {"zero_token_denominator", st.zero_token_denominator}};
    }
    std::size_t steps = 0, images = 0, tokens = 0;
    json hist = json::object();
    std::map<std::size_t, std::size_t> h;
    for (const auto& r : corpus.recipes) {
      steps += r.steps.size();
      ++h[r.steps.size()];
      for (const auto& s : r.steps) {
        images += s.image_ids.size();
        tokens += s.tokens.size();
      }
    }
    for (const auto& [k, v] : h) hist[std::to_string(k)] = v;
    cj["recipe_count"] = corpus.recipes.size();
    cj["step_count"] = steps;
    cj["image_count"] = images;
    cj["token_count"] = tokens;
    cj["steps_histogram"] = hist;
    out["corpus"] = cj;

    KnobConfig knobs = c.knob_config();
    json qa = json::object();
    for (Task t : {Task::cloze, Task::coherence, Task::ordering}) {
      json per;
      for (int k1 : {0, 1}) {
        knobs.k1 = k1;
        per["k1=" + std::to_string(k1)] = planned_question_count(corpus, t, Mode::knobs, knobs);
      }
      if (t == Task::cloze) per["legacy"] = planned_question_count(corpus, t, Mode::legacy, knobs);
      qa[std::string(to_string(t))] = per;
    }
    out["qa_counts"] = qa;
  }
  if (!c.datasets.empty()) {
    json ds_stats = json::array();
    for (const auto& path : c.datasets) {
      const Dataset ds = dataset_from_records(load_jsonl(require_file(path, "dataset")));
      std::vector<std::size_t> answers(c.n_a, 0);
      for (const auto& r : ds.records) {
        if (r.answer_index >= answers.size()) answers.resize(r.answer_index + 1, 0);
        ++answers[r.answer_index];
      }
      ds_stats.push_back({{"path", path},
                          {"task", to_string(ds.task)},
                          {"label", ds.label()},
                          {"count", ds.records.size()},
                          {"overlap", overlap_stats(ds).global_mean},
                          {"fallback_count", fallback_count(ds)},
                          {"answer_histogram", answers}});
    }
    out["datasets"] = ds_stats;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_probe(const RunConfig& c) {
  const EmbeddingStore store = load_store(c);
  const auto datasets = input_datasets(c, &store, c.legacy);
  json results = json::array();
  std::vector<double> accs;
  for (const auto& ds : datasets) {
    const auto [train, valid] = split_dataset(ds, c.valid_fraction);
    const auto train_f = extract_distance_features(train, store, c.threads);
    const auto valid_f = extract_distance_features(valid, store, c.threads);
    const ProbeModel model = train_probe(train_f, c.probe_options());
    const double acc = probe_accuracy(model, valid_f);
    accs.push_back(acc);
    results.push_back({{"label", ds.label()},
                       {"records", ds.records.size()},
                       {"train_records", train.records.size()},
                       {"valid_records", valid.records.size()},
                       {"train_accuracy", probe_accuracy(model, train_f)},
                       {"valid_accuracy", acc},
                       {"final_loss", model.final_loss}});
  }
  json out = {{"results", results}};
  if (accs.size() >= 2) out["gap"] = accs[0] - accs[1];
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_solve(const RunConfig& c) {
  const EmbeddingStore store = load_store(c);
  const auto datasets = input_datasets(c, &store, c.legacy);
  json results = json::array();
  for (const auto& ds : datasets) {
    const Solver solver = c.solver.empty() ? default_solver(ds.task) : solver_from_string(c.solver);
    const double acc = evaluate_solver(ds, store, solver);
    const auto sep = separation_report(ds, store, c.bins);
    if (!c.histogram_csv.empty()) {
      fs::path target = c.histogram_csv;
      if (datasets.size() > 1) {
        target = target.parent_path() / (target.stem().string() + "_" + ds.label() + ".csv");
      }
      write_file_atomic(target, histogram_csv(sep));
    }
    results.push_back({{"label", ds.label()},
                       {"solver", to_string(solver)},
                       {"records", ds.records.size()},
                       {"accuracy", acc},
                       {"separation", to_json(sep)}});
  }
  std::cout << json{{"results", results}}.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  const Corpus corpus = load_corpus(require_file(c.corpus, "corpus"));
  const EmbeddingStore store = load_store(c);
  const KnobConfig base = c.knob_config();
  SweepOptions opts;
  opts.valid_fraction = c.valid_fraction;
  opts.probe = c.probe_options();
  opts.bins = c.bins;
  opts.threads = c.threads;
  opts.include_legacy = c.legacy;

  std::vector<std::pair<std::string, std::string>> files;
  std::ostringstream text;
  for (Task t : selected_tasks(c.task)) {
    const auto report = knob_sweep(corpus, store, base, t, opts);
    const std::string name = "sweep_" + std::string(to_string(t));
    const std::string table = format_table(report);
    files.emplace_back(name + ".json", to_json(report).dump(2) + "\n");
    files.emplace_back(name + ".txt", table);
    text << "[" << to_string(t) << "]\n" << table;
  }
  const fs::path dir = output_dir(c);
  for (const auto& [name, body] : files) write_file_atomic(dir / name, body);
  std::cout << text.str();
  return 0;
}

int cmd_synth(const RunConfig& c) {
  const SynthData data = generate_synthetic(c.synth);
  std::ostringstream corpus_text, emb_bytes, vocab_text;
  write_corpus(corpus_text, data.corpus);
  write_embeddings_binary(emb_bytes, data.store);
  std::vector<std::string> words(data.vocabulary.begin(), data.vocabulary.end());
  std::sort(words.begin(), words.end());
  for (const auto& w : words) vocab_text << w << "\n";

  const fs::path dir = output_dir(c);
  write_file_atomic(dir / "corpus.jsonl", corpus_text.str());
  write_file_atomic(dir / "embeddings.m3ce", emb_bytes.str());
  write_file_atomic(dir / "vocab.txt", vocab_text.str());
  const json out = {{"corpus", (dir / "corpus.jsonl").string()},
                    {"embeddings", (dir / "embeddings.m3ce").string()},
                    {"vocabulary", (dir / "vocab.txt").string()},
                    {"recipes", data.corpus.recipes.size()},
                    {"images", data.store.size()},
                    {"corpus_sha256", sha256_hex(corpus_text.str())},
                    {"embeddings_sha256", sha256_hex(emb_bytes.str())}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// Applies --config before CLI11 parses so explicit flags win.
void preload_config(int argc, char** argv, RunConfig& c) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      apply_config_file(argv[i + 1], c);
      return;
    }
    if (arg.rfind("--config=", 0) == 0) {
      apply_config_file(arg.substr(9), c);
      return;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Knob-controlled visual cloze dataset generator and bias diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its keys");
  app.add_option("--out-dir", cfg.out_dir,
                 std::string("output directory (default $") + kOutDirEnv + " or ./vcloze_out)");

  auto* gen = app.add_subcommand("generate", "generate datasets, splits and a manifest");
  add_inputs(*gen, cfg, true);
  add_knobs(*gen, cfg);

  auto* stats = app.add_subcommand("stats", "corpus and dataset statistics as JSON");
  stats->add_option("--corpus", cfg.corpus, "corpus JSONL");
  stats->add_option("--vocabulary", cfg.vocabulary, "newline-delimited vocabulary");
  stats->add_option("--dataset", cfg.datasets, "dataset JSONL (repeatable)");
  add_knobs(*stats, cfg);

  auto* probe = app.add_subcommand("probe", "train the linear distance probe");
  add_inputs(*probe, cfg, false);
  add_knobs(*probe, cfg);
  add_probe(*probe, cfg);
  probe->add_option("--dataset", cfg.datasets, "dataset JSONL instead of generating (repeatable)");
  probe->add_flag("--legacy,!--no-legacy", cfg.legacy, "also run the legacy cloze contrast");

  auto* solve = app.add_subcommand("solve", "run a heuristic solver");
  add_inputs(*solve, cfg, false);
  add_knobs(*solve, cfg);
  add_probe(*solve, cfg);
  solve->add_option("--dataset", cfg.datasets, "dataset JSONL instead of generating (repeatable)");
  solve->add_option("--solver", cfg.solver, "nearest, oddone or minpath (default: by task)");
  solve->add_option("--histogram-csv", cfg.histogram_csv, "write the distance histogram as CSV");
  solve->add_flag("--legacy,!--no-legacy", cfg.legacy, "also run the legacy cloze contrast");

  auto* sweep = app.add_subcommand("sweep", "evaluate all eight knob tuples");
  add_inputs(*sweep, cfg, true);
  add_knobs(*sweep, cfg);
  add_probe(*sweep, cfg);
  sweep->add_flag("--legacy,!--no-legacy", cfg.legacy, "append a legacy row for cloze");

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus and embeddings");
  synth->add_option("--n-recipes", cfg.synth.n_recipes, "recipes");
  synth->add_option("--steps-lo", cfg.synth.steps_lo, "fewest steps per recipe");
  synth->add_option("--steps-hi", cfg.synth.steps_hi, "most steps per recipe");
  synth->add_option("--dim", cfg.synth.dim, "embedding dimension");
  synth->add_option("--recipe-spread", cfg.synth.recipe_spread, "std of family centroids");
  synth->add_option("--within-spread", cfg.synth.within_spread, "std of images around a centroid");
  synth->add_option("--drift", cfg.synth.drift, "per-step drift");
  synth->add_option("--n-families", cfg.synth.n_families, "recipe families");
  synth->add_option("--member-spread", cfg.synth.member_spread, "std of recipes within a family");
  synth->add_option("--seed", cfg.synth.seed, "random seed");

  try {
    preload_config(argc, argv, cfg);
    app.parse(argc, argv);
    if (*gen) return cmd_generate(cfg);
    if (*stats) return cmd_stats(cfg);
    if (*probe) return cmd_probe(cfg);
    if (*solve) return cmd_solve(cfg);
    if (*sweep) return cmd_sweep(cfg);
    if (*synth) return cmd_synth(cfg);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
