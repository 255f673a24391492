#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vcloze/qa_generator.hpp"

namespace vcloze {

// One row of n_a per-choice distances per question.
//   cloze:     distance(choice_i, mean of visible question images)
//   coherence: mean distance of the image at position i to the other images
//   ordering:  sequence_score(choice_i)
struct DistanceFeatures {
  std::size_t width = 0;
  std::vector<double> values;  // row-major, rows() * width
  std::vector<std::size_t> labels;

  std::size_t rows() const { return labels.size(); }
  const double* row(std::size_t i) const { return values.data() + i * width; }
};

DistanceFeatures extract_distance_features(const Dataset& ds, const EmbeddingStore& store,
                                           std::size_t threads = 1);

// --- Probe ------------------------------------------------------------------

struct ProbeOptions {
  int epochs = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  bool standardize = true;  // one scalar shift and scale for all feature entries
};

// Linear softmax classifier: logits = W x' + b with x' = (x - shift) / scale.
struct ProbeModel {
  std::size_t width = 0;
  std::vector<double> weights;  // width x width, row c holds the weights of class c
  std::vector<double> bias;
  double shift = 0.0;
  double scale = 1.0;
  int epochs = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // objective before each update
};

// Mean cross-entropy plus (l2 / 2) * |W|^2 on the standardised features. Fills
// the gradients when the pointers are non-null.
double probe_objective(const ProbeModel& model, const DistanceFeatures& features, double l2,
                       std::vector<double>* grad_w = nullptr, std::vector<double>* grad_b = nullptr);

ProbeModel train_probe(const DistanceFeatures& features, const ProbeOptions& options = {});

// Argmax of the logits, lowest index on ties.
std::vector<std::size_t> probe_predict(const ProbeModel& model, const DistanceFeatures& features);
double probe_accuracy(const ProbeModel& model, const DistanceFeatures& features);

// --- Solvers -----------------------------------------------------------------

enum class Solver { nearest_cloze, oddone_coherence, minpath_ordering };

std::string_view to_string(Solver s);
// Accepts the full name or the short form (nearest, oddone, minpath).
Solver solver_from_string(std::string_view s);
Task solver_task(Solver s);
Solver default_solver(Task t);

std::vector<std::size_t> solver_predictions(const Dataset& ds, const EmbeddingStore& store,
                                            Solver solver);
// Fraction of records answered correctly; 0 for an empty dataset.
double evaluate_solver(const Dataset& ds, const EmbeddingStore& store, Solver solver);

// --- Separation and overlap --------------------------------------------------

struct SeparationReport {
  std::vector<double> edges;  // bins + 1 shared edges
  std::vector<std::size_t> correct_counts;
  std::vector<std::size_t> incorrect_counts;
  double mean_correct = 0.0;
  double mean_incorrect = 0.0;
  double mean_gap = 0.0;     // mean(incorrect) - mean(correct)
  double effect_size = 0.0;  // mean_gap / pooled standard deviation, 0 when that is 0
};

SeparationReport separation_report(const Dataset& ds, const EmbeddingStore& store,
                                   std::size_t bins = 20);
SeparationReport separation_report(const DistanceFeatures& features, std::size_t bins = 20);

struct OverlapStats {
  std::map<std::string, double> per_recipe;  // mean pairwise Jaccard, recipes with >= 2 questions
  double global_mean = 0.0;                  // mean of the per-recipe values
  std::size_t pairs = 0;
};

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
OverlapStats overlap_stats(const Dataset& ds);

// --- Sweep -------------------------------------------------------------------

struct SweepOptions {
  double valid_fraction = 0.2;
  ProbeOptions probe;
  std::size_t bins = 20;
  std::size_t threads = 1;
  bool include_legacy = true;  // cloze only
};

struct SweepRow {
  std::string label;  // "0-1-1" or "legacy"
  Mode mode = Mode::knobs;
  std::array<int, 3> knobs{0, 0, 0};
  std::size_t count = 0;
  double solver_accuracy = 0.0;
  std::optional<double> probe_accuracy;  // held-out split; empty if it could not be trained
  double effect_size = 0.0;
  double overlap = 0.0;
  std::size_t fallback_count = 0;
};

struct SweepReport {
  Task task = Task::cloze;
  Solver solver = Solver::nearest_cloze;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;  // (0,0,0) .. (1,1,1), then legacy when present
};

// Trains on the train split and reports probe accuracy on the valid split.
SweepRow evaluate_dataset(const Dataset& ds, const EmbeddingStore& store,
                          const SweepOptions& options);

SweepReport knob_sweep(const Corpus& corpus, const EmbeddingStore& store, const KnobConfig& base,
                       Task task, const SweepOptions& options = {});

nlohmann::json to_json(const SweepReport& report);
nlohmann::json to_json(const SeparationReport& report);
std::string format_table(const SweepReport& report);
std::string histogram_csv(const SeparationReport& report);

}  // namespace vcloze
