#include "vcloze/qa_generator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "vcloze/errors.hpp"

namespace vcloze {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::cloze: return "cloze";
    case Task::coherence: return "coherence";
    case Task::ordering: return "ordering";
  }
  return "cloze";
}

Task task_from_string(std::string_view s) {
  if (s == "cloze") return Task::cloze;
  if (s == "coherence") return Task::coherence;
  if (s == "ordering") return Task::ordering;
  throw ValidationError("unknown task '" + std::string(s) + "'");
}

std::string_view to_string(Mode m) { return m == Mode::legacy ? "legacy" : "knobs"; }

Mode mode_from_string(std::string_view s) {
  if (s == "knobs") return Mode::knobs;
  if (s == "legacy") return Mode::legacy;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

void KnobConfig::validate() const {
  for (int k : {k1, k2, k3}) {
    if (k != 0 && k != 1) throw ValidationError("knob values must be 0 or 1");
  }
  if (n_q < 2) throw ValidationError("n_q must be at least 2");
  if (n_a < 2) throw ValidationError("n_a must be at least 2");
  if (k_c < 2) throw ValidationError("k_c must be at least 2");
  if (!(k3_prob >= 0.0 && k3_prob <= 1.0)) throw ValidationError("k3_prob must lie in [0, 1]");
  if (min_steps < 1) throw ValidationError("min_steps must be at least 1");
}

std::string KnobConfig::tuple_label() const {
  return std::to_string(k1) + "-" + std::to_string(k2) + "-" + std::to_string(k3);
}

bool Provenance::any_fallback() const {
  if (ring_shortfall || degenerate_band || uniform_weights_fallback) return true;
  return std::any_of(negatives.begin(), negatives.end(), [](const NegativeInfo& n) {
    return n.fallback != Fallback::none || n.outside_band;
  });
}

std::vector<std::string> QuestionRecord::visible_images() const {
  std::vector<std::string> out;
  if (task == Task::coherence) {
    for (std::size_t i = 0; i < question_images.size(); ++i) {
      if (i != answer_index) out.push_back(question_images[i]);
    }
    return out;
  }
  for (std::size_t i = 0; i < question_images.size(); ++i) {
    if (placeholder && i == *placeholder) continue;
    out.push_back(question_images[i]);
  }
  return out;
}

std::string Dataset::label() const {
  return std::string(to_string(task)) + "_" +
         (mode == Mode::legacy ? std::string("legacy") : config.tuple_label());
}

// ---------------------------------------------------------------------------
// Knob 1

namespace {

std::vector<std::size_t> steps_with_images(const Recipe& recipe) {
  std::vector<std::size_t> out;
  for (const auto& s : recipe.steps) {
    if (s.has_images()) out.push_back(s.index);
  }
  return out;
}

std::vector<std::size_t> draw_sorted(const std::vector<std::size_t>& pool, std::size_t count,
                                     Rng& rng) {
  std::vector<std::size_t> tmp = pool;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.uniform_index(tmp.size() - i);
    std::swap(tmp[i], tmp[j]);
  }
  tmp.resize(count);
  std::sort(tmp.begin(), tmp.end());
  return tmp;
}

}  // namespace

std::size_t question_cap(std::size_t step_count, int k1) {
  return k1 == 1 ? step_count / 3 : step_count / 2;
}

std::vector<QuestionPlan> plan_questions_knob1(const Recipe& recipe, const KnobConfig& knobs,
                                               Rng& rng, std::size_t slots) {
  std::vector<QuestionPlan> plans;
  if (slots == 0) return plans;
  auto pool = steps_with_images(recipe);
  const std::size_t cap = question_cap(recipe.steps.size(), knobs.k1);
  while (plans.size() < cap && pool.size() >= slots) {
    QuestionPlan plan;
    plan.steps = draw_sorted(pool, slots, rng);
    plan.pivot = rng.uniform_index(slots);
    pool.erase(std::find(pool.begin(), pool.end(), plan.steps[plan.pivot]));
    if (knobs.k1 == 1 && !pool.empty()) {
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(pool.size())));
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<QuestionPlan> plan_questions_legacy(const Recipe& recipe, std::size_t slots, Rng& rng) {
  std::vector<QuestionPlan> plans;
  if (slots == 0) return plans;
  const auto pool = steps_with_images(recipe);
  const std::size_t cap = question_cap(recipe.steps.size(), 0);
  while (plans.size() < cap && pool.size() >= slots) {
    QuestionPlan plan;
    plan.steps = draw_sorted(pool, slots, rng);
    plan.pivot = rng.uniform_index(slots);
    plans.push_back(std::move(plan));
  }
  return plans;
}

// ---------------------------------------------------------------------------
// Knob 2

std::pair<Annulus, bool> knob2_band(const RingStats& ring, int k2) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double m = ring.mean;
  const double s = ring.stddev;
  if (k2 == 0) {
    if (m - s > 0.0) return {Annulus(0.0, m - s), false};
    const double hi = s > 0.0 ? s : std::nextafter(0.0, kInf);
    return {Annulus(0.0, hi), true};
  }
  const double lo = std::max(m - s, 0.0);
  const double hi = s > 0.0 ? m + s : std::nextafter(m, kInf);
  return {Annulus(lo, hi), false};
}

namespace {

std::vector<std::size_t> slots_excluding(const EmbeddingStore& store, std::size_t index) {
  const std::size_t slot = store.recipe_slot(index);
  if (slot == EmbeddingStore::kNoRecipe) return {};
  return {slot};
}

NegativeSet knob2_from_scan(const EmbeddingStore& store, std::size_t correct,
                            std::span<const double> dist, const KnobConfig& knobs, Rng& rng) {
  const auto slots = slots_excluding(store, correct);
  const std::size_t self[] = {correct};
  const auto eligible = eligible_candidates(store, dist, slots, self);
  const auto ring_members = nearest(eligible, knobs.k_c);
  if (ring_members.size() < 2) {
    throw Error("image '" + store.id(correct) + "' has fewer than two eligible neighbors");
  }
  std::vector<double> ring_d;
  ring_d.reserve(ring_members.size());
  for (const auto& c : ring_members) ring_d.push_back(c.distance);

  NegativeSet out;
  out.correct = store.id(correct);
  out.ring = ring_stats(ring_d);
  out.ring_shortfall = ring_members.size() < knobs.k_c;
  std::tie(out.band, out.degenerate_band) = knob2_band(out.ring, knobs.k2);

  std::vector<std::size_t> taken;
  for (std::size_t i = 0; i + 1 < knobs.n_a; ++i) {
    const auto pick = pick_in_annulus(eligible, out.band, taken, rng);
    taken.push_back(pick.index);
    out.negatives.push_back({store.id(pick.index), pick.distance, pick.bounds, pick.fallback,
                             false, false});
  }
  return out;
}

}  // namespace

NegativeSet sample_negatives_knob2(const EmbeddingStore& store, std::string_view correct,
                                   const KnobConfig& knobs, Rng& rng) {
  const std::size_t c = store.index_of(correct);
  const auto dist = distances_from(store, store.vector(c));
  return knob2_from_scan(store, c, dist, knobs, rng);
}

// ---------------------------------------------------------------------------
// Knob 3

Knob3Outcome apply_knob3(const EmbeddingStore& store, std::span<const std::string> question_visible,
                         const NegativeSet& negatives, const KnobConfig& knobs, Rng& rng) {
  Knob3Outcome out;
  out.negatives = negatives.negatives;
  if (knobs.k3 == 0 || out.negatives.empty()) return out;
  if (!rng.bernoulli(knobs.k3_prob)) return out;
  out.applied = true;

  const auto fail = [&] {
    out.failed = true;
    out.negatives = negatives.negatives;
    return out;
  };

  const std::size_t c = store.index_of(negatives.correct);
  const Vector q_mean = mean_embedding(store, question_visible);
  const auto to_question = distances_from(store, q_mean);
  const double correct_to_question = to_question[c];
  const auto slots = slots_excluding(store, c);
  const auto cvec = store.vector(c);

  std::vector<std::size_t> used{c};
  for (const auto& n : out.negatives) used.push_back(store.index_of(n.image_id));

  // The slot being replaced may be refilled with its own image; the others stay excluded.
  const std::size_t slot = rng.uniform_index(out.negatives.size());
  std::vector<std::size_t> keep = used;
  keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(slot + 1));

  std::vector<Candidate> closer;
  std::vector<Candidate> closer_in_band;
  for (const auto& cand : eligible_candidates(store, to_question, slots, keep)) {
    if (!(cand.distance < correct_to_question)) continue;
    const double d_correct = distance(store.vector(cand.index), cvec);
    closer.push_back({cand.index, d_correct});
    if (negatives.band.contains(d_correct)) closer_in_band.push_back({cand.index, d_correct});
  }
  if (closer.empty()) return fail();

  const bool in_band = !closer_in_band.empty();
  const auto& pool = in_band ? closer_in_band : closer;
  const Candidate pick = pool[rng.uniform_index(pool.size())];
  out.negatives[slot] = {store.id(pick.index), pick.distance, negatives.band, Fallback::none, true,
                         !in_band};
  used[slot + 1] = pick.index;

  // Exactly one negative may beat the correct choice.
  for (std::size_t j = 0; j < out.negatives.size(); ++j) {
    if (j == slot) continue;
    if (!(to_question[used[j + 1]] < correct_to_question)) continue;
    std::vector<Candidate> far;
    for (const auto& cand : eligible_candidates(store, to_question, slots, used)) {
      if (cand.distance < correct_to_question) continue;
      far.push_back({cand.index, distance(store.vector(cand.index), cvec)});
    }
    if (far.empty()) return fail();
    const auto redraw = pick_in_annulus(far, negatives.band, {}, rng);
    out.negatives[j] = {store.id(redraw.index), redraw.distance, redraw.bounds, redraw.fallback,
                        false, false};
    used[j + 1] = redraw.index;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ordering

double sequence_score(std::span<const std::string> sequence, const EmbeddingStore& store) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < sequence.size(); ++i) {
    total += distance(store.vector(sequence[i]), store.vector(sequence[i + 1]));
  }
  return total;
}

std::vector<std::vector<std::size_t>> wrong_permutations(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  while (std::next_permutation(perm.begin(), perm.end())) out.push_back(perm);
  return out;
}

std::vector<std::size_t> sample_wrong_orderings(std::span<const double> weights, std::size_t count,
                                                bool weighted, Rng& rng, bool* degenerate) {
  if (count > weights.size()) throw ValidationError("cannot draw more orderings than exist");
  if (degenerate) *degenerate = false;
  std::vector<std::size_t> remaining(weights.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t draw = 0; draw < count; ++draw) {
    double total = 0.0;
    if (weighted) {
      for (std::size_t idx : remaining) total += weights[idx];
    }
    std::size_t pos = 0;
    if (weighted && total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      pos = remaining.size() - 1;
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        acc += weights[remaining[i]];
        if (target < acc) {
          pos = i;
          break;
        }
      }
      // A zero-weight item can only be reached through rounding at the tail.
      while (weights[remaining[pos]] <= 0.0 && pos > 0) --pos;
    } else {
      if (weighted && degenerate) *degenerate = true;
      pos = rng.uniform_index(remaining.size());
    }
    out.push_back(remaining[pos]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

std::string pick_image(const Step& step, Rng& rng) {
  return step.image_ids[rng.uniform_index(step.image_ids.size())];
}

std::vector<std::size_t> all_step_indices(const Recipe& recipe) {
  std::vector<std::size_t> out(recipe.steps.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

Rng question_rng(const KnobConfig& knobs, Task task, const Recipe& recipe, std::size_t ordinal) {
  const std::string ord = std::to_string(ordinal);
  return Rng(derive_seed(knobs.seed, {to_string(task), recipe.recipe_id, "question", ord}));
}

Rng recipe_rng(const KnobConfig& knobs, Task task, const Recipe& recipe) {
  return Rng(derive_seed(knobs.seed, {to_string(task), recipe.recipe_id, "plan"}));
}

// Puts the correct choice among the others in a uniformly random position.
void shuffle_choices(QuestionRecord& rec, std::vector<std::vector<std::string>> choices, Rng& rng) {
  std::vector<std::size_t> order(choices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  rec.choices.clear();
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == 0) rec.answer_index = pos;
    rec.choices.push_back(std::move(choices[order[pos]]));
  }
}

QuestionRecord base_record(Task task, Mode mode, const Recipe& recipe, std::size_t ordinal,
                           const QuestionPlan& plan, const KnobConfig& knobs) {
  QuestionRecord rec;
  rec.task = task;
  rec.recipe_id = recipe.recipe_id;
  rec.ordinal = ordinal;
  rec.context_step_indices = all_step_indices(recipe);
  rec.question_steps = plan.steps;
  rec.provenance.mode = mode;
  rec.provenance.knobs = {knobs.k1, knobs.k2, knobs.k3};
  return rec;
}

std::vector<QuestionRecord> cloze_for_recipe(const Recipe& recipe, const EmbeddingStore& store,
                                             const KnobConfig& knobs, Mode mode) {
  Rng plan_rng = recipe_rng(knobs, Task::cloze, recipe);
  const auto plans = mode == Mode::legacy ? plan_questions_legacy(recipe, knobs.n_q, plan_rng)
                                          : plan_questions_knob1(recipe, knobs, plan_rng);
  std::vector<QuestionRecord> out;
  for (std::size_t q = 0; q < plans.size(); ++q) {
    const auto& plan = plans[q];
    Rng rng = question_rng(knobs, Task::cloze, recipe, q);
    QuestionRecord rec = base_record(Task::cloze, mode, recipe, q, plan, knobs);
    std::vector<std::string> images;
    for (std::size_t s : plan.steps) images.push_back(pick_image(recipe.steps[s], rng));
    const std::string correct = images[plan.pivot];
    rec.placeholder = plan.pivot;
    rec.question_images = images;
    rec.question_images[plan.pivot].clear();

    const std::size_t c = store.index_of(correct);
    const auto dist = distances_from(store, store.vector(c));
    std::vector<std::vector<std::string>> choices{{correct}};
    auto& prov = rec.provenance;

    if (mode == Mode::legacy) {
      const auto slots = slots_excluding(store, c);
      const std::size_t self[] = {c};
      const auto eligible = eligible_candidates(store, dist, slots, self);
      const auto ring_members = nearest(eligible, knobs.k_c);
      if (ring_members.size() < 2) {
        throw Error("image '" + correct + "' has fewer than two eligible neighbors");
      }
      std::vector<double> ring_d;
      for (const auto& m : ring_members) ring_d.push_back(m.distance);
      prov.ring = ring_stats(ring_d);
      prov.ring_shortfall = ring_members.size() < knobs.k_c;
      const double tau = prov.ring->mean + prov.ring->stddev;
      prov.tau = tau;
      const Annulus beyond(tau, std::numeric_limits<double>::infinity());
      std::vector<Candidate> far;
      std::vector<Candidate> near;
      for (const auto& e : eligible) (e.distance >= tau ? far : near).push_back(e);
      // Farthest first among the fallback pool.
      std::sort(near.begin(), near.end(), [](const Candidate& a, const Candidate& b) {
        return a.distance > b.distance || (a.distance == b.distance && a.index < b.index);
      });
      for (std::size_t i = 0; i + 1 < knobs.n_a; ++i) {
        NegativeInfo info;
        if (!far.empty()) {
          const std::size_t pos = rng.uniform_index(far.size());
          info = {store.id(far[pos].index), far[pos].distance, beyond, Fallback::none, false, false};
          far.erase(far.begin() + static_cast<std::ptrdiff_t>(pos));
        } else if (!near.empty()) {
          info = {store.id(near.front().index), near.front().distance, beyond,
                  Fallback::nearest_to_mid, false, false};
          near.erase(near.begin());
        } else {
          throw Error("no eligible negatives for '" + correct + "'");
        }
        choices.push_back({info.image_id});
        prov.negatives.push_back(std::move(info));
      }
    } else {
      NegativeSet negset = knob2_from_scan(store, c, dist, knobs, rng);
      prov.ring = negset.ring;
      prov.band = negset.band;
      prov.ring_shortfall = negset.ring_shortfall;
      prov.degenerate_band = negset.degenerate_band;
      const auto visible = rec.visible_images();
      auto k3 = apply_knob3(store, visible, negset, knobs, rng);
      prov.knob3_applied = k3.applied;
      prov.knob3_failed = k3.failed;
      prov.negatives = std::move(k3.negatives);
      for (const auto& n : prov.negatives) choices.push_back({n.image_id});
    }
    shuffle_choices(rec, std::move(choices), rng);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<QuestionRecord> coherence_for_recipe(const Recipe& recipe, const EmbeddingStore& store,
                                                 const KnobConfig& knobs) {
  const std::size_t coherent_count = knobs.n_q - 1;
  Rng plan_rng = recipe_rng(knobs, Task::coherence, recipe);
  const auto plans = plan_questions_knob1(recipe, knobs, plan_rng, coherent_count);
  std::vector<QuestionRecord> out;
  for (std::size_t q = 0; q < plans.size(); ++q) {
    const auto& plan = plans[q];
    Rng rng = question_rng(knobs, Task::coherence, recipe, q);
    QuestionRecord rec = base_record(Task::coherence, Mode::knobs, recipe, q, plan, knobs);
    auto& prov = rec.provenance;

    std::vector<std::string> coherent;
    std::vector<std::size_t> coherent_idx;
    for (std::size_t s : plan.steps) {
      coherent.push_back(pick_image(recipe.steps[s], rng));
      coherent_idx.push_back(store.index_of(coherent.back()));
    }
    const auto slots = slots_excluding(store, coherent_idx.front());

    std::vector<double> min_dist(store.size(), std::numeric_limits<double>::infinity());
    std::vector<std::size_t> union_members;
    for (std::size_t ci : coherent_idx) {
      const auto d = distances_from(store, store.vector(ci));
      for (std::size_t i = 0; i < d.size(); ++i) min_dist[i] = std::min(min_dist[i], d[i]);
      const auto elig = eligible_candidates(store, d, slots, coherent_idx);
      for (const auto& nb : nearest(elig, knobs.k_c)) union_members.push_back(nb.index);
    }
    std::sort(union_members.begin(), union_members.end());
    union_members.erase(std::unique(union_members.begin(), union_members.end()),
                        union_members.end());
    if (union_members.size() < 2) {
      throw Error("recipe '" + recipe.recipe_id + "' has fewer than two eligible neighbors");
    }
    std::vector<double> ring_d;
    for (std::size_t i : union_members) ring_d.push_back(min_dist[i]);
    const RingStats ring = ring_stats(ring_d);
    const auto [band, degenerate] = knob2_band(ring, knobs.k2);
    prov.ring = ring;
    prov.band = band;
    prov.degenerate_band = degenerate;
    prov.ring_shortfall = union_members.size() < knobs.k_c;

    const auto candidates = eligible_candidates(store, min_dist, slots, coherent_idx);
    std::optional<NegativeInfo> chosen;
    if (knobs.k3 == 1 && rng.bernoulli(knobs.k3_prob)) {
      prov.knob3_applied = true;
      const Vector centre = mean_embedding(store, coherent);
      double min_pair = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < coherent_idx.size(); ++a) {
        for (std::size_t b = a + 1; b < coherent_idx.size(); ++b) {
          min_pair = std::min(min_pair, distance(store.vector(coherent_idx[a]),
                                                 store.vector(coherent_idx[b])));
        }
      }
      std::vector<Candidate> both;
      for (const auto& cand : candidates) {
        if (band.contains(cand.distance) && distance(store.vector(cand.index), centre) < min_pair) {
          both.push_back(cand);
        }
      }
      if (!both.empty()) {
        const Candidate pick = both[rng.uniform_index(both.size())];
        chosen = NegativeInfo{store.id(pick.index), pick.distance, band, Fallback::none, true, false};
      } else {
        prov.knob3_failed = true;
      }
    }
    if (!chosen) {
      const auto pick = pick_in_annulus(candidates, band, {}, rng);
      chosen = NegativeInfo{store.id(pick.index), pick.distance, pick.bounds, pick.fallback, false,
                            false};
    }
    prov.negatives.push_back(*chosen);

    const std::size_t position = rng.uniform_index(knobs.n_q);
    rec.question_images = coherent;
    rec.question_images.insert(rec.question_images.begin() + static_cast<std::ptrdiff_t>(position),
                               chosen->image_id);
    for (const auto& img : rec.question_images) rec.choices.push_back({img});
    rec.answer_index = position;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<QuestionRecord> ordering_for_recipe(const Recipe& recipe, const EmbeddingStore& store,
                                                const KnobConfig& knobs,
                                                const std::vector<std::vector<std::size_t>>& perms) {
  Rng plan_rng = recipe_rng(knobs, Task::ordering, recipe);
  const auto plans = plan_questions_knob1(recipe, knobs, plan_rng);
  std::vector<QuestionRecord> out;
  for (std::size_t q = 0; q < plans.size(); ++q) {
    const auto& plan = plans[q];
    Rng rng = question_rng(knobs, Task::ordering, recipe, q);
    QuestionRecord rec = base_record(Task::ordering, Mode::knobs, recipe, q, plan, knobs);
    std::vector<std::string> images;
    for (std::size_t s : plan.steps) images.push_back(pick_image(recipe.steps[s], rng));
    rec.question_images = images;

    std::vector<std::vector<std::string>> sequences;
    std::vector<double> weights;
    for (const auto& perm : perms) {
      std::vector<std::string> seq;
      for (std::size_t i : perm) seq.push_back(images[i]);
      weights.push_back(sequence_score(seq, store));
      sequences.push_back(std::move(seq));
    }
    bool degenerate = false;
    const auto picks =
        sample_wrong_orderings(weights, knobs.n_a - 1, knobs.k2 == 1, rng, &degenerate);
    rec.provenance.uniform_weights_fallback = degenerate;
    std::vector<std::vector<std::string>> choices{images};
    for (std::size_t p : picks) choices.push_back(sequences[p]);
    shuffle_choices(rec, std::move(choices), rng);
    out.push_back(std::move(rec));
  }
  return out;
}

template <class Fn>
Dataset run_generator(Task task, Mode mode, const Corpus& corpus, const EmbeddingStore& store,
                      const KnobConfig& knobs, const GenerationOptions& options, Fn per_recipe) {
  knobs.validate();
  EmbeddingStore bound = store;
  bound.bind_corpus(corpus);
  Corpus filtered = filter_by_min_steps(corpus, knobs.min_steps);
  std::sort(filtered.recipes.begin(), filtered.recipes.end(),
            [](const Recipe& a, const Recipe& b) { return a.recipe_id < b.recipe_id; });

  std::vector<std::vector<QuestionRecord>> per(filtered.recipes.size());
  const std::size_t threads =
      std::max<std::size_t>(1, std::min(options.threads, filtered.recipes.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= filtered.recipes.size()) return;
      try {
        per[i] = per_recipe(filtered.recipes[i], bound);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = filtered.recipes.size();
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  Dataset ds;
  ds.task = task;
  ds.mode = mode;
  ds.config = knobs;
  for (auto& recs : per) {
    for (auto& r : recs) ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace

Dataset generate_cloze(const Corpus& corpus, const EmbeddingStore& store, const KnobConfig& knobs,
                       const GenerationOptions& options) {
  return run_generator(Task::cloze, Mode::knobs, corpus, store, knobs, options,
                       [&](const Recipe& r, const EmbeddingStore& s) {
                         return cloze_for_recipe(r, s, knobs, Mode::knobs);
                       });
}

Dataset generate_legacy_cloze(const Corpus& corpus, const EmbeddingStore& store,
                              const KnobConfig& knobs, const GenerationOptions& options) {
  return run_generator(Task::cloze, Mode::legacy, corpus, store, knobs, options,
                       [&](const Recipe& r, const EmbeddingStore& s) {
                         return cloze_for_recipe(r, s, knobs, Mode::legacy);
                       });
}

Dataset generate_coherence(const Corpus& corpus, const EmbeddingStore& store,
                           const KnobConfig& knobs, const GenerationOptions& options) {
  if (knobs.n_q < 3) throw ValidationError("coherence needs n_q >= 3");
  if (knobs.n_a != knobs.n_q) throw ValidationError("coherence needs n_a == n_q");
  return run_generator(Task::coherence, Mode::knobs, corpus, store, knobs, options,
                       [&](const Recipe& r, const EmbeddingStore& s) {
                         return coherence_for_recipe(r, s, knobs);
                       });
}

Dataset generate_ordering(const Corpus& corpus, const EmbeddingStore& store,
                          const KnobConfig& knobs, const GenerationOptions& options) {
  if (knobs.n_q > 7) throw ValidationError("ordering supports n_q <= 7");
  const auto perms = wrong_permutations(knobs.n_q);
  if (knobs.n_a - 1 > perms.size()) {
    throw ValidationError("ordering needs n_a - 1 <= n_q! - 1 wrong permutations");
  }
  return run_generator(Task::ordering, Mode::knobs, corpus, store, knobs, options,
                       [&](const Recipe& r, const EmbeddingStore& s) {
                         return ordering_for_recipe(r, s, knobs, perms);
                       });
}

Dataset generate(Task task, Mode mode, const Corpus& corpus, const EmbeddingStore& store,
                 const KnobConfig& knobs, const GenerationOptions& options) {
  if (mode == Mode::legacy) {
    if (task != Task::cloze) throw ValidationError("legacy mode is only defined for cloze");
    return generate_legacy_cloze(corpus, store, knobs, options);
  }
  switch (task) {
    case Task::cloze: return generate_cloze(corpus, store, knobs, options);
    case Task::coherence: return generate_coherence(corpus, store, knobs, options);
    case Task::ordering: return generate_ordering(corpus, store, knobs, options);
  }
  throw ValidationError("unknown task");
}

std::size_t planned_question_count(const Corpus& corpus, Task task, Mode mode,
                                   const KnobConfig& knobs) {
  knobs.validate();
  if (mode == Mode::legacy && task != Task::cloze) {
    throw ValidationError("legacy mode is only defined for cloze");
  }
  const std::size_t slots = task == Task::coherence ? knobs.n_q - 1 : knobs.n_q;
  std::size_t total = 0;
  for (const auto& recipe : corpus.recipes) {
    if (recipe.steps.size() < knobs.min_steps) continue;
    Rng rng = recipe_rng(knobs, task, recipe);
    total += mode == Mode::legacy ? plan_questions_legacy(recipe, slots, rng).size()
                                  : plan_questions_knob1(recipe, knobs, rng, slots).size();
  }
  return total;
}

// ---------------------------------------------------------------------------
// Splits

bool in_valid_split(std::string_view recipe_id, double valid_fraction) {
  const std::uint64_t h = mix64(hash_string(recipe_id));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < valid_fraction;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double valid_fraction) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ValidationError("valid_fraction must lie in (0, 1)");
  }
  Dataset train = dataset;
  Dataset valid = dataset;
  train.records.clear();
  valid.records.clear();
  for (const auto& r : dataset.records) {
    (in_valid_split(r.recipe_id, valid_fraction) ? valid : train).records.push_back(r);
  }
  return {std::move(train), std::move(valid)};
}

}  // namespace vcloze
