#include "vcloze/records.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "vcloze/errors.hpp"

namespace vcloze {

namespace {

json band_json(const Annulus& a) {
  json hi = std::isinf(a.r_hi) ? json(nullptr) : json(a.r_hi);
  return json::array({a.r_lo, hi});
}

Annulus band_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("band must be [lo, hi]");
  const double hi = j[1].is_null() ? std::numeric_limits<double>::infinity() : j[1].get<double>();
  return Annulus(j[0].get<double>(), hi);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->template get<T>();
}

}  // namespace

void parse_knob_tuple(std::string_view text, KnobConfig& knobs) {
  int values[3];
  std::size_t count = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view part = text.substr(start, comma - start);
    if (count == 3 || (part != "0" && part != "1")) {
      throw ValidationError("knob tuple must look like 1,0,1, got '" + std::string(text) + "'");
    }
    values[count++] = part == "1" ? 1 : 0;
    start = comma + 1;
  }
  if (count != 3) throw ValidationError("knob tuple must have three entries");
  knobs.k1 = values[0];
  knobs.k2 = values[1];
  knobs.k3 = values[2];
}

json to_json(const KnobConfig& k) {
  return {{"knobs", json::array({k.k1, k.k2, k.k3})},
          {"n_q", k.n_q},
          {"n_a", k.n_a},
          {"k_c", k.k_c},
          {"k3_prob", k.k3_prob},
          {"min_steps", k.min_steps},
          {"seed", k.seed}};
}

KnobConfig knob_config_from_json(const json& j, KnobConfig base) {
  if (!j.is_object()) throw ValidationError("knob config must be a JSON object");
  try {
    if (auto it = j.find("knobs"); it != j.end()) {
      if (it->is_string()) {
        parse_knob_tuple(it->get<std::string>(), base);
      } else {
        const auto v = it->get<std::vector<int>>();
        if (v.size() != 3) throw ValidationError("knobs must have three entries");
        base.k1 = v[0];
        base.k2 = v[1];
        base.k3 = v[2];
      }
    }
    base.n_q = get_or(j, "n_q", base.n_q);
    base.n_a = get_or(j, "n_a", base.n_a);
    base.k_c = get_or(j, "k_c", base.k_c);
    base.k3_prob = get_or(j, "k3_prob", base.k3_prob);
    base.min_steps = get_or(j, "min_steps", base.min_steps);
    base.seed = get_or(j, "seed", base.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad knob config: ") + e.what());
  }
  base.validate();
  return base;
}

json to_json(const QuestionRecord& r) {
  json question = {{"steps", r.question_steps}, {"images", r.question_images}};
  if (r.placeholder) question["placeholder"] = *r.placeholder;

  json choices = json::array();
  for (std::size_t i = 0; i < r.choices.size(); ++i) {
    switch (r.task) {
      case Task::cloze: choices.push_back(r.choices[i].at(0)); break;
      case Task::coherence: choices.push_back(i); break;
      case Task::ordering: choices.push_back(r.choices[i]); break;
    }
  }

  const auto& p = r.provenance;
  json prov = {{"mode", to_string(p.mode)}, {"knobs", p.knobs}};
  if (p.ring) prov["ring"] = {{"m_d", p.ring->mean}, {"s_d", p.ring->stddev}, {"k_c", p.ring->k_c}};
  if (p.band) prov["band"] = band_json(*p.band);
  if (p.tau) prov["tau"] = *p.tau;
  json negs = json::array();
  for (const auto& n : p.negatives) {
    negs.push_back({{"image_id", n.image_id},
                    {"distance", n.distance},
                    {"bounds", band_json(n.bounds)},
                    {"fallback", to_string(n.fallback)},
                    {"from_knob3", n.from_knob3},
                    {"outside_band", n.outside_band}});
  }
  prov["negatives"] = std::move(negs);
  prov["ring_shortfall"] = p.ring_shortfall;
  prov["degenerate_band"] = p.degenerate_band;
  prov["knob3_applied"] = p.knob3_applied;
  prov["knob3_failed"] = p.knob3_failed;
  prov["uniform_weights_fallback"] = p.uniform_weights_fallback;

  return {{"task", to_string(r.task)},
          {"recipe_id", r.recipe_id},
          {"ordinal", r.ordinal},
          {"context_step_indices", r.context_step_indices},
          {"question", std::move(question)},
          {"choices", std::move(choices)},
          {"answer_index", r.answer_index},
          {"provenance", std::move(prov)}};
}

QuestionRecord record_from_json(const json& j) {
  QuestionRecord r;
  try {
    r.task = task_from_string(j.at("task").get<std::string>());
    r.recipe_id = j.at("recipe_id").get<std::string>();
    r.ordinal = j.at("ordinal").get<std::size_t>();
    r.context_step_indices = j.at("context_step_indices").get<std::vector<std::size_t>>();
    const auto& q = j.at("question");
    r.question_steps = q.at("steps").get<std::vector<std::size_t>>();
    r.question_images = q.at("images").get<std::vector<std::string>>();
    if (auto it = q.find("placeholder"); it != q.end()) r.placeholder = it->get<std::size_t>();
    for (const auto& c : j.at("choices")) {
      switch (r.task) {
        case Task::cloze: r.choices.push_back({c.get<std::string>()}); break;
        case Task::coherence: r.choices.push_back({r.question_images.at(c.get<std::size_t>())}); break;
        case Task::ordering: r.choices.push_back(c.get<std::vector<std::string>>()); break;
      }
    }
    r.answer_index = j.at("answer_index").get<std::size_t>();
    if (r.answer_index >= r.choices.size()) throw ValidationError("answer_index out of range");

    const auto& pj = j.at("provenance");
    auto& p = r.provenance;
    p.mode = mode_from_string(pj.at("mode").get<std::string>());
    p.knobs = pj.at("knobs").get<std::array<int, 3>>();
    if (auto it = pj.find("ring"); it != pj.end()) {
      p.ring = RingStats{it->at("m_d").get<double>(), it->at("s_d").get<double>(),
                         it->at("k_c").get<std::size_t>()};
    }
    if (auto it = pj.find("band"); it != pj.end()) p.band = band_from_json(*it);
    if (auto it = pj.find("tau"); it != pj.end()) p.tau = it->get<double>();
    for (const auto& n : pj.at("negatives")) {
      p.negatives.push_back({n.at("image_id").get<std::string>(), n.at("distance").get<double>(),
                             band_from_json(n.at("bounds")),
                             fallback_from_string(n.at("fallback").get<std::string>()),
                             n.at("from_knob3").get<bool>(), n.at("outside_band").get<bool>()});
    }
    p.ring_shortfall = get_or(pj, "ring_shortfall", false);
    p.degenerate_band = get_or(pj, "degenerate_band", false);
    p.knob3_applied = get_or(pj, "knob3_applied", false);
    p.knob3_failed = get_or(pj, "knob3_failed", false);
    p.uniform_weights_fallback = get_or(pj, "uniform_weights_fallback", false);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed question record: ") + e.what());
  }
  return r;
}

void write_jsonl(std::ostream& out, std::span<const QuestionRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::string to_jsonl(std::span<const QuestionRecord> records) {
  std::ostringstream out;
  write_jsonl(out, records);
  return out.str();
}

std::vector<QuestionRecord> read_jsonl(std::istream& in, std::string_view source_name) {
  std::vector<QuestionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(std::string(source_name) + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
  return out;
}

std::vector<QuestionRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_jsonl(in, path.string());
}

Dataset dataset_from_records(std::vector<QuestionRecord> records, const KnobConfig& base) {
  Dataset ds;
  ds.config = base;
  if (!records.empty()) {
    const auto& first = records.front();
    ds.task = first.task;
    ds.mode = first.provenance.mode;
    ds.config.k1 = first.provenance.knobs[0];
    ds.config.k2 = first.provenance.knobs[1];
    ds.config.k3 = first.provenance.knobs[2];
    for (const auto& r : records) {
      if (r.task != ds.task) throw ValidationError("dataset mixes tasks");
    }
  }
  ds.records = std::move(records);
  return ds;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::size_t fallback_count(const Dataset& ds) {
  std::size_t n = 0;
  for (const auto& r : ds.records) n += r.provenance.any_fallback() ? 1 : 0;
  return n;
}

}  // namespace vcloze
