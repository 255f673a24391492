#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcloze/corpus.hpp"
#include "vcloze/embedding_space.hpp"
#include "vcloze/rng.hpp"

namespace vcloze {

enum class Task { cloze, coherence, ordering };

std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

// Dataset construction mode: the knob-controlled generator, or the
// original construction kept for contrast experiments.
enum class Mode { knobs, legacy };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct KnobConfig {
  int k1 = 0;  // question overlap: 0 caps at #steps/2, 1 caps at #steps/3 and drops an extra step
  int k2 = 0;  // negative hardness: 0 samples [0, m-s), 1 samples [m-s, m+s)
  int k3 = 0;  // one negative closer to the question than the answer, with probability k3_prob
  std::size_t n_q = 4;
  std::size_t n_a = 4;
  std::size_t k_c = 100;
  double k3_prob = 0.5;
  std::size_t min_steps = 5;
  std::uint64_t seed = 0;

  // Throws ValidationError on out-of-range values.
  void validate() const;
  std::string tuple_label() const;  // e.g. "1-0-1"
};

// One planned question: ascending step indices and the slot whose step is
// retired from the pool (the cloze placeholder).
struct QuestionPlan {
  std::vector<std::size_t> steps;
  std::size_t pivot = 0;
};

struct NegativeInfo {
  std::string image_id;
  double distance = 0.0;  // to the correct image (cloze) or to the coherent set (coherence)
  Annulus bounds;         // effective band the draw was made from
  Fallback fallback = Fallback::none;
  bool from_knob3 = false;
  bool outside_band = false;  // knob-3 replacement that could not also satisfy the band
};

struct Provenance {
  Mode mode = Mode::knobs;
  std::array<int, 3> knobs{0, 0, 0};
  std::optional<RingStats> ring;
  std::optional<Annulus> band;     // configured knob-2 band before widening
  std::optional<double> tau;       // legacy distance floor
  std::vector<NegativeInfo> negatives;
  bool ring_shortfall = false;
  bool degenerate_band = false;    // m - s <= 0 for the lower band
  bool knob3_applied = false;      // the knob-3 coin came up
  bool knob3_failed = false;       // applied, but the constraint could not be met
  bool uniform_weights_fallback = false;  // ordering weights were all zero

  bool any_fallback() const;
};

struct QuestionRecord {
  Task task = Task::cloze;
  std::string recipe_id;
  std::size_t ordinal = 0;
  std::vector<std::size_t> context_step_indices;
  // Steps the question draws from: n_q for cloze and ordering, n_q - 1 for coherence.
  std::vector<std::size_t> question_steps;
  // cloze: n_q slots with "" at the placeholder; coherence: the n_q images in
  // presentation order; ordering: the images in ascending step order.
  std::vector<std::string> question_images;
  std::optional<std::size_t> placeholder;
  // cloze: one image per choice; coherence: the image at position i;
  // ordering: a permutation of question_images.
  std::vector<std::vector<std::string>> choices;
  std::size_t answer_index = 0;
  Provenance provenance;

  // Visible question images (cloze: all but the placeholder; coherence: the
  // coherent images; ordering: all).
  std::vector<std::string> visible_images() const;
};

struct Dataset {
  Task task = Task::cloze;
  Mode mode = Mode::knobs;
  KnobConfig config;
  std::vector<QuestionRecord> records;

  std::string label() const;  // e.g. "cloze_1-0-1" or "cloze_legacy"
};

struct GenerationOptions {
  std::size_t threads = 1;
};

// --- Knob 1 ----------------------------------------------------------------

// Iteratively draws `slots` distinct steps (sorted) from the pool of steps that
// have images, picks the pivot slot uniformly, retires the pivot step and, for
// k1 = 1, one more uniformly random pool step. Stops when the pool is smaller
// than `slots` or the cap floor(#steps/2) (k1 = 0) / floor(#steps/3) (k1 = 1)
// is reached.
std::vector<QuestionPlan> plan_questions_knob1(const Recipe& recipe, const KnobConfig& knobs,
                                               Rng& rng, std::size_t slots);
inline std::vector<QuestionPlan> plan_questions_knob1(const Recipe& recipe, const KnobConfig& knobs,
                                                      Rng& rng) {
  return plan_questions_knob1(recipe, knobs, rng, knobs.n_q);
}

// Independent draws with no step retirement, capped at floor(#steps/2).
std::vector<QuestionPlan> plan_questions_legacy(const Recipe& recipe, std::size_t slots, Rng& rng);

std::size_t question_cap(std::size_t step_count, int k1);

// --- Knob 2 ----------------------------------------------------------------

struct NegativeSet {
  std::string correct;
  RingStats ring;
  Annulus band;
  bool ring_shortfall = false;
  bool degenerate_band = false;
  std::vector<NegativeInfo> negatives;
};

// The band for a ring: [0, m - s) for k2 = 0, [m - s, m + s) for k2 = 1.
// A lower band with m - s <= 0 becomes [0, s) (a sliver at 0 when s is zero)
// and is reported as degenerate.
std::pair<Annulus, bool> knob2_band(const RingStats& ring, int k2);

// n_a - 1 distinct negatives for `correct`, drawn from the knob-2 band of its
// k_c-NN ring. The source recipe (from the bound store) is excluded.
NegativeSet sample_negatives_knob2(const EmbeddingStore& store, std::string_view correct,
                                   const KnobConfig& knobs, Rng& rng);

// --- Knob 3 ----------------------------------------------------------------

struct Knob3Outcome {
  std::vector<NegativeInfo> negatives;
  bool applied = false;
  bool failed = false;
};

// Cloze knob 3. With probability k3_prob replaces one uniformly chosen negative
// by an eligible image strictly closer to the mean of the visible question
// images than the correct image is, preferring candidates that also lie in the
// knob-2 band. The remaining negatives are not eligible. Other negatives that are also closer are redrawn from the band
// among images that are not, so exactly one negative beats the correct choice.
// When no replacement exists the input is returned with failed set.
Knob3Outcome apply_knob3(const EmbeddingStore& store, std::span<const std::string> question_visible,
                         const NegativeSet& negatives, const KnobConfig& knobs, Rng& rng);

// --- Ordering ----------------------------------------------------------------

// Sum of consecutive distances along the sequence.
double sequence_score(std::span<const std::string> sequence, const EmbeddingStore& store);

// All permutations of 0..n-1 except the identity, in lexicographic order.
std::vector<std::vector<std::size_t>> wrong_permutations(std::size_t n);

// Draws `count` distinct indices into `weights`: uniformly (weighted == false)
// or by successive draws proportional to the weights, renormalising after each
// draw. All-zero weights fall back to uniform and set *degenerate.
std::vector<std::size_t> sample_wrong_orderings(std::span<const double> weights, std::size_t count,
                                                bool weighted, Rng& rng, bool* degenerate = nullptr);

// --- Generators ------------------------------------------------------------

// All generators filter the corpus to knobs.min_steps, bind the store to it
// and emit records sorted by recipe id, then question ordinal. Output depends
// only on (corpus, store, knobs), not on thread count.
Dataset generate_cloze(const Corpus& corpus, const EmbeddingStore& store, const KnobConfig& knobs,
                       const GenerationOptions& options = {});
Dataset generate_coherence(const Corpus& corpus, const EmbeddingStore& store,
                           const KnobConfig& knobs, const GenerationOptions& options = {});
Dataset generate_ordering(const Corpus& corpus, const EmbeddingStore& store,
                          const KnobConfig& knobs, const GenerationOptions& options = {});
// Legacy cloze: overlapping questions, negatives drawn uniformly from
// images at distance >= m + s of the correct choice's ring, no knob 3.
Dataset generate_legacy_cloze(const Corpus& corpus, const EmbeddingStore& store,
                              const KnobConfig& knobs, const GenerationOptions& options = {});

Dataset generate(Task task, Mode mode, const Corpus& corpus, const EmbeddingStore& store,
                 const KnobConfig& knobs, const GenerationOptions& options = {});

// Number of questions generation would emit, from the planners alone (no
// embeddings needed). Matches the generated record count exactly.
std::size_t planned_question_count(const Corpus& corpus, Task task, Mode mode,
                                   const KnobConfig& knobs);

// --- Splits ----------------------------------------------------------------

// Stable recipe-level assignment from a hash of the recipe id.
bool in_valid_split(std::string_view recipe_id, double valid_fraction);

// (train, valid); every recipe's questions land in exactly one split.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double valid_fraction);

}  // namespace vcloze
