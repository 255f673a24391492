#include "vcloze/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "vcloze/errors.hpp"
#include "vcloze/records.hpp"

namespace vcloze {

namespace {

void fill_row(const QuestionRecord& r, const EmbeddingStore& store, double* out) {
  switch (r.task) {
    case Task::cloze: {
      const auto visible = r.visible_images();
      const Vector q = mean_embedding(store, visible);
      for (std::size_t i = 0; i < r.choices.size(); ++i) {
        out[i] = distance(store.vector(r.choices[i].at(0)), q);
      }
      break;
    }
    case Task::coherence: {
      const auto& imgs = r.question_images;
      for (std::size_t i = 0; i < imgs.size(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < imgs.size(); ++j) {
          if (j != i) total += distance(store.vector(imgs[i]), store.vector(imgs[j]));
        }
        out[i] = total / static_cast<double>(imgs.size() - 1);
      }
      break;
    }
    case Task::ordering:
      for (std::size_t i = 0; i < r.choices.size(); ++i) {
        out[i] = sequence_score(r.choices[i], store);
      }
      break;
  }
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t argmin(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (row[i] < row[best]) best = i;
  }
  return best;
}

std::size_t argmax(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

DistanceFeatures extract_distance_features(const Dataset& ds, const EmbeddingStore& store,
                                           std::size_t threads) {
  DistanceFeatures f;
  if (ds.records.empty()) return f;
  f.width = ds.records.front().choices.size();
  for (const auto& r : ds.records) {
    if (r.choices.size() != f.width) throw ValidationError("records disagree on choice count");
    f.labels.push_back(r.answer_index);
  }
  f.values.assign(f.rows() * f.width, 0.0);
  parallel_for(ds.records.size(), threads, [&](std::size_t i) {
    fill_row(ds.records[i], store, f.values.data() + i * f.width);
  });
  return f;
}

// --- Probe --------------------------------------------------------------------

double probe_objective(const ProbeModel& model, const DistanceFeatures& features, double l2,
                       std::vector<double>* grad_w, std::vector<double>* grad_b) {
  const std::size_t n = model.width;
  if (features.width != n) throw ValidationError("feature width does not match the probe");
  if (grad_w) grad_w->assign(n * n, 0.0);
  if (grad_b) grad_b->assign(n, 0.0);
  std::vector<double> x(n), logits(n);
  double loss = 0.0;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const double* raw = features.row(r);
    for (std::size_t i = 0; i < n; ++i) x[i] = (raw[i] - model.shift) / model.scale;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      double z = model.bias[c];
      for (std::size_t i = 0; i < n; ++i) z += model.weights[c * n + i] * x[i];
      logits[c] = z;
      top = std::max(top, z);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < n; ++c) norm += std::exp(logits[c] - top);
    const double log_norm = top + std::log(norm);
    const std::size_t y = features.labels[r];
    loss += log_norm - logits[y];
    if (grad_w || grad_b) {
      for (std::size_t c = 0; c < n; ++c) {
        const double g = std::exp(logits[c] - log_norm) - (c == y ? 1.0 : 0.0);
        if (grad_b) (*grad_b)[c] += g;
        if (grad_w) {
          for (std::size_t i = 0; i < n; ++i) (*grad_w)[c * n + i] += g * x[i];
        }
      }
    }
  }
  const double inv = features.rows() ? 1.0 / static_cast<double>(features.rows()) : 0.0;
  loss *= inv;
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  loss += 0.5 * l2 * sq;
  if (grad_w) {
    for (std::size_t k = 0; k < grad_w->size(); ++k) {
      (*grad_w)[k] = (*grad_w)[k] * inv + l2 * model.weights[k];
    }
  }
  if (grad_b) {
    for (double& g : *grad_b) g *= inv;
  }
  return loss;
}

ProbeModel train_probe(const DistanceFeatures& features, const ProbeOptions& options) {
  if (options.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (!(options.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(options.l2 >= 0.0)) throw ValidationError("l2 must be non-negative");
  const std::size_t n = features.width;
  std::set<std::size_t> classes(features.labels.begin(), features.labels.end());
  if (classes.size() < 2) throw ValidationError("probe needs at least two classes in the labels");
  if (*classes.rbegin() >= n) throw ValidationError("label outside the feature width");

  ProbeModel m;
  m.width = n;
  m.weights.assign(n * n, 0.0);
  m.bias.assign(n, 0.0);
  m.epochs = options.epochs;
  m.learning_rate = options.learning_rate;
  m.l2 = options.l2;
  if (options.standardize && !features.values.empty()) {
    const double count = static_cast<double>(features.values.size());
    const double mean = std::accumulate(features.values.begin(), features.values.end(), 0.0) / count;
    double var = 0.0;
    for (double v : features.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / count);
    m.shift = mean;
    m.scale = sd > 0.0 ? sd : 1.0;
  }

  std::vector<double> gw, gb;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double loss = probe_objective(m, features, options.l2, &gw, &gb);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "probe diverged at epoch " << epoch << "; lower learning_rate (" << options.learning_rate
          << ")";
      throw Error(msg.str());
    }
    m.loss_history.push_back(loss);
    for (std::size_t k = 0; k < gw.size(); ++k) m.weights[k] -= options.learning_rate * gw[k];
    for (std::size_t c = 0; c < n; ++c) m.bias[c] -= options.learning_rate * gb[c];
  }
  m.final_loss = probe_objective(m, features, options.l2);
  if (!std::isfinite(m.final_loss)) {
    std::ostringstream msg;
    msg << "probe diverged; lower learning_rate (" << options.learning_rate << ")";
    throw Error(msg.str());
  }
  return m;
}

std::vector<std::size_t> probe_predict(const ProbeModel& model, const DistanceFeatures& features) {
  const std::size_t n = model.width;
  if (features.rows() && features.width != n) {
    throw ValidationError("feature width does not match the probe");
  }
  std::vector<std::size_t> out;
  out.reserve(features.rows());
  std::vector<double> logits(n);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const double* raw = features.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      double z = model.bias[c];
      for (std::size_t i = 0; i < n; ++i) z += model.weights[c * n + i] * ((raw[i] - model.shift) / model.scale);
      logits[c] = z;
    }
    out.push_back(argmax(logits.data(), n));
  }
  return out;
}

double probe_accuracy(const ProbeModel& model, const DistanceFeatures& features) {
  if (features.rows() == 0) return 0.0;
  const auto pred = probe_predict(model, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == features.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// --- Solvers -----------------------------------------------------------------

std::string_view to_string(Solver s) {
  switch (s) {
    case Solver::nearest_cloze: return "nearest_cloze";
    case Solver::oddone_coherence: return "oddone_coherence";
    case Solver::minpath_ordering: return "minpath_ordering";
  }
  return "nearest_cloze";
}

Solver solver_from_string(std::string_view s) {
  if (s == "nearest_cloze" || s == "nearest") return Solver::nearest_cloze;
  if (s == "oddone_coherence" || s == "oddone") return Solver::oddone_coherence;
  if (s == "minpath_ordering" || s == "minpath") return Solver::minpath_ordering;
  throw ValidationError("unknown solver '" + std::string(s) + "'");
}

Task solver_task(Solver s) {
  switch (s) {
    case Solver::nearest_cloze: return Task::cloze;
    case Solver::oddone_coherence: return Task::coherence;
    case Solver::minpath_ordering: return Task::ordering;
  }
  return Task::cloze;
}

Solver default_solver(Task t) {
  switch (t) {
    case Task::cloze: return Solver::nearest_cloze;
    case Task::coherence: return Solver::oddone_coherence;
    case Task::ordering: return Solver::minpath_ordering;
  }
  return Solver::nearest_cloze;
}

std::vector<std::size_t> solver_predictions(const Dataset& ds, const EmbeddingStore& store,
                                            Solver solver) {
  if (solver_task(solver) != ds.task) {
    throw ValidationError("solver " + std::string(to_string(solver)) + " does not apply to " +
                          std::string(to_string(ds.task)) + " datasets");
  }
  const auto f = extract_distance_features(ds, store);
  std::vector<std::size_t> out;
  out.reserve(f.rows());
  for (std::size_t r = 0; r < f.rows(); ++r) {
    out.push_back(solver == Solver::oddone_coherence ? argmax(f.row(r), f.width)
                                                     : argmin(f.row(r), f.width));
  }
  return out;
}

double evaluate_solver(const Dataset& ds, const EmbeddingStore& store, Solver solver) {
  const auto pred = solver_predictions(ds, store, solver);
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.records[i].answer_index ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// --- Separation and overlap --------------------------------------------------

SeparationReport separation_report(const DistanceFeatures& f, std::size_t bins) {
  if (bins == 0) throw ValidationError("bins must be positive");
  SeparationReport rep;
  std::vector<double> good, bad;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t i = 0; i < f.width; ++i) {
      (i == f.labels[r] ? good : bad).push_back(f.row(r)[i]);
    }
  }
  double top = 0.0;
  for (double v : f.values) top = std::max(top, v);
  if (top <= 0.0) top = 1.0;
  rep.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) rep.edges[b] = top * static_cast<double>(b) / static_cast<double>(bins);
  rep.correct_counts.assign(bins, 0);
  rep.incorrect_counts.assign(bins, 0);
  const auto bin_of = [&](double v) {
    const auto b = static_cast<std::size_t>(v / top * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (double v : good) ++rep.correct_counts[bin_of(v)];
  for (double v : bad) ++rep.incorrect_counts[bin_of(v)];

  const auto mean_of = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const auto ss_of = [](const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s;
  };
  rep.mean_correct = mean_of(good);
  rep.mean_incorrect = mean_of(bad);
  rep.mean_gap = rep.mean_incorrect - rep.mean_correct;
  const double dof = static_cast<double>(good.size() + bad.size()) - 2.0;
  if (dof > 0.0) {
    const double pooled =
        std::sqrt((ss_of(good, rep.mean_correct) + ss_of(bad, rep.mean_incorrect)) / dof);
    rep.effect_size = pooled > 0.0 ? rep.mean_gap / pooled : 0.0;
  }
  return rep;
}

SeparationReport separation_report(const Dataset& ds, const EmbeddingStore& store,
                                   std::size_t bins) {
  return separation_report(extract_distance_features(ds, store), bins);
}

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (std::size_t x : sa) inter += sb.count(x);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

OverlapStats overlap_stats(const Dataset& ds) {
  OverlapStats out;
  std::map<std::string, std::vector<const QuestionRecord*>> by_recipe;
  for (const auto& r : ds.records) by_recipe[r.recipe_id].push_back(&r);
  double total = 0.0;
  for (const auto& [id, recs] : by_recipe) {
    if (recs.size() < 2) continue;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        sum += jaccard(recs[i]->question_steps, recs[j]->question_steps);
        ++pairs;
      }
    }
    out.per_recipe[id] = sum / static_cast<double>(pairs);
    out.pairs += pairs;
    total += out.per_recipe[id];
  }
  if (!out.per_recipe.empty()) out.global_mean = total / static_cast<double>(out.per_recipe.size());
  return out;
}

// --- Sweep -------------------------------------------------------------------

SweepRow evaluate_dataset(const Dataset& ds, const EmbeddingStore& store,
                          const SweepOptions& options) {
  SweepRow row;
  row.mode = ds.mode;
  row.knobs = {ds.config.k1, ds.config.k2, ds.config.k3};
  row.label = ds.mode == Mode::legacy ? "legacy" : ds.config.tuple_label();
  row.count = ds.records.size();
  row.fallback_count = fallback_count(ds);
  row.overlap = overlap_stats(ds).global_mean;
  if (ds.records.empty()) return row;

  const auto features = extract_distance_features(ds, store, options.threads);
  row.solver_accuracy = evaluate_solver(ds, store, default_solver(ds.task));
  row.effect_size = separation_report(features, options.bins).effect_size;

  const auto [train, valid] = split_dataset(ds, options.valid_fraction);
  const auto train_f = extract_distance_features(train, store, options.threads);
  const auto valid_f = extract_distance_features(valid, store, options.threads);
  std::set<std::size_t> classes(train_f.labels.begin(), train_f.labels.end());
  if (classes.size() >= 2 && valid_f.rows() > 0) {
    row.probe_accuracy = probe_accuracy(train_probe(train_f, options.probe), valid_f);
  }
  return row;
}

SweepReport knob_sweep(const Corpus& corpus, const EmbeddingStore& store, const KnobConfig& base,
                       Task task, const SweepOptions& options) {
  SweepReport report;
  report.task = task;
  report.solver = default_solver(task);
  report.seed = base.seed;
  const GenerationOptions gen{options.threads};
  for (int k1 = 0; k1 < 2; ++k1) {
    for (int k2 = 0; k2 < 2; ++k2) {
      for (int k3 = 0; k3 < 2; ++k3) {
        KnobConfig knobs = base;
        knobs.k1 = k1;
        knobs.k2 = k2;
        knobs.k3 = k3;
        report.rows.push_back(
            evaluate_dataset(generate(task, Mode::knobs, corpus, store, knobs, gen), store, options));
      }
    }
  }
  if (task == Task::cloze && options.include_legacy) {
    KnobConfig knobs = base;
    knobs.k1 = knobs.k2 = knobs.k3 = 0;
    report.rows.push_back(evaluate_dataset(generate_legacy_cloze(corpus, store, knobs, gen), store,
                                           options));
  }
  return report;
}

nlohmann::json to_json(const SweepReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"label", r.label},
                    {"mode", to_string(r.mode)},
                    {"knobs", r.knobs},
                    {"count", r.count},
                    {"solver_accuracy", r.solver_accuracy},
                    {"probe_accuracy", r.probe_accuracy ? nlohmann::json(*r.probe_accuracy)
                                                        : nlohmann::json(nullptr)},
                    {"effect_size", r.effect_size},
                    {"overlap", r.overlap},
                    {"fallback_count", r.fallback_count}});
  }
  return {{"task", to_string(report.task)},
          {"solver", to_string(report.solver)},
          {"seed", report.seed},
          {"rows", std::move(rows)}};
}

nlohmann::json to_json(const SeparationReport& r) {
  return {{"edges", r.edges},
          {"correct_counts", r.correct_counts},
          {"incorrect_counts", r.incorrect_counts},
          {"mean_correct", r.mean_correct},
          {"mean_incorrect", r.mean_incorrect},
          {"mean_gap", r.mean_gap},
          {"effect_size", r.effect_size}};
}

std::string format_table(const SweepReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %7s %8s %8s %8s %8s %9s\n", "tuple", "count",
                std::string(to_string(report.solver)).substr(0, 8).c_str(), "probe", "effect",
                "overlap", "fallbacks");
  out << line;
  for (const auto& r : report.rows) {
    char probe[16];
    if (r.probe_accuracy) {
      std::snprintf(probe, sizeof probe, "%.3f", *r.probe_accuracy);
    } else {
      std::snprintf(probe, sizeof probe, "-");
    }
    std::snprintf(line, sizeof line, "%-8s %7zu %8.3f %8s %8.3f %8.3f %9zu\n", r.label.c_str(),
                  r.count, r.solver_accuracy, probe, r.effect_size, r.overlap, r.fallback_count);
    out << line;
  }
  return out.str();
}

std::string histogram_csv(const SeparationReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "bin_lo,bin_hi,correct_count,incorrect_count\n";
  for (std::size_t b = 0; b + 1 < r.edges.size(); ++b) {
    out << r.edges[b] << ',' << r.edges[b + 1] << ',' << r.correct_counts[b] << ','
        << r.incorrect_counts[b] << '\n';
  }
  return out.str();
}

}  // namespace vcloze
