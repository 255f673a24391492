#include "vcloze/embedding_space.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <sstream>

#include "vcloze/digest.hpp"
#include "vcloze/errors.hpp"

namespace vcloze {

EmbeddingStore::EmbeddingStore(std::size_t dim,
                               std::vector<std::pair<std::string, Vector>> entries)
    : dim_(dim) {
  if (dim == 0) throw ValidationError("embedding dim must be positive");
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ids_.reserve(entries.size());
  data_.reserve(entries.size() * dim);
  for (auto& [id, vec] : entries) {
    if (!ids_.empty() && ids_.back() == id) {
      throw ValidationError("duplicate embedding id '" + id + "'");
    }
    if (vec.size() != dim) {
      throw ValidationError("embedding '" + id + "' has length " + std::to_string(vec.size()) +
                            ", expected " + std::to_string(dim));
    }
    for (float v : vec) {
      if (!std::isfinite(v)) throw ValidationError("embedding '" + id + "' is not finite");
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), vec.begin(), vec.end());
  }
  recipe_slot_.assign(ids_.size(), kNoRecipe);
  step_index_.assign(ids_.size(), 0);
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingStore::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw ValidationError("image '" + std::string(id) + "' has no embedding");
}

void EmbeddingStore::bind_corpus(const Corpus& corpus) {
  std::vector<std::size_t> slots(ids_.size(), kNoRecipe);
  std::vector<std::size_t> steps(ids_.size(), 0);
  std::vector<std::string> names;
  std::unordered_map<std::string, std::size_t> lookup;
  std::vector<std::string> missing;
  for (const auto& r : corpus.recipes) {
    const std::size_t slot = names.size();
    names.push_back(r.recipe_id);
    lookup.emplace(r.recipe_id, slot);
    for (const auto& s : r.steps) {
      for (const auto& img : s.image_ids) {
        auto i = find(img);
        if (!i) {
          missing.push_back(img);
          continue;
        }
        if (slots[*i] != kNoRecipe && slots[*i] != slot) {
          throw ValidationError("image '" + img + "' is referenced by recipes '" +
                                names[slots[*i]] + "' and '" + r.recipe_id + "'");
        }
        slots[*i] = slot;
        steps[*i] = s.index;
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " corpus image(s) missing from the embedding store, e.g. '" +
                      missing.front() + "'";
    throw ValidationError(msg);
  }
  recipe_slot_ = std::move(slots);
  step_index_ = std::move(steps);
  recipe_names_ = std::move(names);
  recipe_lookup_ = std::move(lookup);
  bound_ = true;
}

std::optional<ImageMeta> EmbeddingStore::meta(std::size_t index) const {
  if (recipe_slot_[index] == kNoRecipe) return std::nullopt;
  return ImageMeta{recipe_names_[recipe_slot_[index]], step_index_[index]};
}

std::optional<std::size_t> EmbeddingStore::recipe_slot_of(std::string_view recipe_id) const {
  auto it = recipe_lookup_.find(std::string(recipe_id));
  if (it == recipe_lookup_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::normalize() {
  for (std::size_t i = 0; i < size(); ++i) {
    float* row = data_.data() + i * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sq += double(row[j]) * double(row[j]);
    if (sq <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < dim_; ++j) row[j] = static_cast<float>(row[j] * inv);
  }
}

std::string EmbeddingStore::content_sha256() const {
  std::ostringstream out(std::ios::binary);
  write_embeddings_binary(out, *this);
  return sha256_hex(out.str());
}

// ---------------------------------------------------------------------------
// File formats

namespace {

constexpr std::array<char, 4> kMagic = {'M', '3', 'C', 'E'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(u & 0xff);
    u = static_cast<U>(u >> 8);
  }
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in, std::string_view source, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ValidationError(std::string(source) + ": truncated embedding file while reading " + what);
  }
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | bytes[i]);
  return static_cast<T>(u);
}

}  // namespace

EmbeddingStore read_embeddings_binary(std::istream& in, std::string_view source_name) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) {
    throw ValidationError(std::string(source_name) + ": bad magic, expected M3CE");
  }
  const auto version = get_le<std::uint32_t>(in, source_name, "version");
  if (version != kVersion) {
    throw ValidationError(std::string(source_name) + ": unsupported version " +
                          std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in, source_name, "dim");
  const auto count = get_le<std::uint64_t>(in, source_name, "count");
  std::vector<std::pair<std::string, Vector>> entries;
  entries.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = get_le<std::uint16_t>(in, source_name, "id length");
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (in.gcount() != len) {
      throw ValidationError(std::string(source_name) + ": truncated id in record " +
                            std::to_string(r));
    }
    Vector vec(dim);
    for (auto& v : vec) v = std::bit_cast<float>(get_le<std::uint32_t>(in, source_name, "vector"));
    entries.emplace_back(std::move(id), std::move(vec));
  }
  return EmbeddingStore(dim, std::move(entries));
}

void write_embeddings_binary(std::ostream& out, const EmbeddingStore& store) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  put_le<std::uint64_t>(out, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& id = store.id(i);
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("image id too long for the binary format: " + id.substr(0, 32));
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float v : store.vector(i)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
}

EmbeddingStore read_embeddings_json(std::istream& in, std::string_view source_name) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(source_name) + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_integer() ||
      !j.contains("vectors") || !j["vectors"].is_object()) {
    throw ValidationError(std::string(source_name) +
                          ": expected {\"dim\": int, \"vectors\": {id: [floats]}}");
  }
  const auto dim = j["dim"].get<std::int64_t>();
  if (dim <= 0) throw ValidationError(std::string(source_name) + ": dim must be positive");
  std::vector<std::pair<std::string, Vector>> entries;
  for (const auto& [id, arr] : j["vectors"].items()) {
    if (!arr.is_array()) throw ValidationError("vector for '" + id + "' is not an array");
    Vector vec;
    vec.reserve(arr.size());
    for (const auto& v : arr) {
      if (!v.is_number()) throw ValidationError("vector for '" + id + "' has a non-number");
      vec.push_back(v.get<float>());
    }
    entries.emplace_back(id, std::move(vec));
  }
  return EmbeddingStore(static_cast<std::size_t>(dim), std::move(entries));
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embeddings file " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const bool binary = in.gcount() == 4 && head == kMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_embeddings_binary(in, path.string()) : read_embeddings_json(in, path.string());
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embeddings file " + path.string());
  write_embeddings_binary(out, store);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Geometry

double distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError("distance: length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::vector<double> distances_from(const EmbeddingStore& store, std::span<const float> point) {
  if (point.size() != store.dim()) throw ValidationError("query point has the wrong dimension");
  std::vector<double> out(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out[i] = distance(store.vector(i), point);
  return out;
}

std::vector<Candidate> eligible_candidates(const EmbeddingStore& store,
                                           std::span<const double> distances,
                                           std::span<const std::size_t> excluded_slots,
                                           std::span<const std::size_t> excluded_indices) {
  std::vector<Candidate> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::size_t slot = store.recipe_slot(i);
    if (slot != EmbeddingStore::kNoRecipe &&
        std::find(excluded_slots.begin(), excluded_slots.end(), slot) != excluded_slots.end()) {
      continue;
    }
    if (std::find(excluded_indices.begin(), excluded_indices.end(), i) != excluded_indices.end()) {
      continue;
    }
    out.push_back({i, distances[i]});
  }
  return out;
}

namespace {

bool closer(const Candidate& a, const Candidate& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

std::vector<std::size_t> slots_for(const EmbeddingStore& store,
                                   const std::set<std::string>& recipes) {
  std::vector<std::size_t> slots;
  for (const auto& r : recipes) {
    if (auto s = store.recipe_slot_of(r)) slots.push_back(*s);
  }
  return slots;
}

}  // namespace

std::vector<Candidate> nearest(std::span<const Candidate> candidates, std::size_t k) {
  std::vector<Candidate> out(candidates.begin(), candidates.end());
  k = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), closer);
  out.resize(k);
  return out;
}

KnnResult knn(const EmbeddingStore& store, std::string_view center, std::size_t k,
              const std::set<std::string>& excluded_recipes) {
  if (k == 0) throw ValidationError("knn: k must be positive");
  const std::size_t c = store.index_of(center);
  const auto dist = distances_from(store, store.vector(c));
  const auto slots = slots_for(store, excluded_recipes);
  const std::size_t self[] = {c};
  const auto eligible = eligible_candidates(store, dist, slots, self);
  KnnResult result;
  result.shortfall = eligible.size() < k;
  for (const auto& cand : nearest(eligible, k)) {
    result.neighbors.push_back({store.id(cand.index), cand.distance});
  }
  return result;
}

RingStats ring_stats(std::span<const double> distances) {
  const std::size_t n = distances.size();
  if (n < 2) throw ValidationError("ring_stats needs at least two neighbors");
  double sum = 0.0;
  for (double d : distances) sum += d;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double d : distances) ss += (d - mean) * (d - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1)), n};
}

RingStats ring_stats(std::span<const Neighbor> neighbors) {
  std::vector<double> d;
  d.reserve(neighbors.size());
  for (const auto& n : neighbors) d.push_back(n.distance);
  return ring_stats(d);
}

Annulus::Annulus(double lo, double hi) : r_lo(lo), r_hi(hi) {
  if (!(lo >= 0.0) || !(hi > lo)) {
    throw ValidationError("annulus requires 0 <= r_lo < r_hi, got [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ")");
  }
}

std::string_view to_string(Fallback f) {
  switch (f) {
    case Fallback::none: return "none";
    case Fallback::widened: return "widened";
    case Fallback::nearest_to_mid: return "nearest_to_mid";
  }
  return "none";
}

Fallback fallback_from_string(std::string_view s) {
  if (s == "none") return Fallback::none;
  if (s == "widened") return Fallback::widened;
  if (s == "nearest_to_mid") return Fallback::nearest_to_mid;
  throw ValidationError("unknown fallback kind '" + std::string(s) + "'");
}

AnnulusPick pick_in_annulus(std::span<const Candidate> candidates, const Annulus& band,
                            std::span<const std::size_t> taken, Rng& rng) {
  const auto is_taken = [&](std::size_t idx) {
    return std::find(taken.begin(), taken.end(), idx) != taken.end();
  };
  std::vector<const Candidate*> members;
  Annulus bounds = band;
  for (int widen = 0; widen <= kMaxWidenings; ++widen) {
    if (widen > 0) bounds.r_hi += band.width();
    members.clear();
    for (const auto& c : candidates) {
      if (bounds.contains(c.distance) && !is_taken(c.index)) members.push_back(&c);
    }
    if (!members.empty()) {
      const Candidate* pick = members[rng.uniform_index(members.size())];
      return {pick->index, pick->distance, bounds, widen == 0 ? Fallback::none : Fallback::widened,
              widen};
    }
  }
  const double mid = 0.5 * (band.r_lo + band.r_hi);
  const Candidate* best = nullptr;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (is_taken(c.index)) continue;
    const double gap = std::abs(c.distance - mid);
    if (gap < best_gap || (gap == best_gap && best && c.index < best->index)) {
      best = &c;
      best_gap = gap;
    }
  }
  if (!best) throw Error("no eligible candidates to sample from");
  return {best->index, best->distance, bounds, Fallback::nearest_to_mid, kMaxWidenings};
}

AnnulusDraw sample_in_annulus(const EmbeddingStore& store, std::string_view center,
                              const Annulus& band, const std::set<std::string>& excluded_recipes,
                              const std::set<std::string>& extra_excluded_ids, Rng& rng) {
  const std::size_t c = store.index_of(center);
  const auto dist = distances_from(store, store.vector(c));
  std::vector<std::size_t> excluded{c};
  for (const auto& id : extra_excluded_ids) {
    if (auto i = store.find(id)) excluded.push_back(*i);
  }
  const auto eligible = eligible_candidates(store, dist, slots_for(store, excluded_recipes), excluded);
  const auto pick = pick_in_annulus(eligible, band, {}, rng);
  return {store.id(pick.index), pick.distance, pick.bounds, pick.fallback, pick.widenings};
}

Vector mean_embedding(const EmbeddingStore& store, std::span<const std::string> ids) {
  if (ids.empty()) throw ValidationError("mean_embedding needs at least one id");
  std::vector<double> acc(store.dim(), 0.0);
  for (const auto& id : ids) {
    const auto v = store.vector(id);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
  }
  Vector out(store.dim());
  for (std::size_t j = 0; j < acc.size(); ++j) {
    out[j] = static_cast<float>(acc[j] / static_cast<double>(ids.size()));
  }
  return out;
}

}  // namespace vcloze
