#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vcloze/corpus.hpp"
#include "vcloze/rng.hpp"

namespace vcloze {

using Vector = std::vector<float>;

struct ImageMeta {
  std::string recipe_id;
  std::size_t step_index = 0;
};

// Image id -> fixed-dimension vector. Entries are kept sorted by id, so an
// entry's index order is the lexicographic id order used for tie-breaking.
// Immutable after construction apart from bind_corpus, which must happen
// before the store is shared between threads.
class EmbeddingStore {
 public:
  static constexpr std::size_t kNoRecipe = static_cast<std::size_t>(-1);

  EmbeddingStore() = default;
  // Throws ValidationError on dim == 0, wrong vector length, non-finite
  // components or duplicate ids.
  EmbeddingStore(std::size_t dim, std::vector<std::pair<std::string, Vector>> entries);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }

  std::optional<std::size_t> find(std::string_view id) const;
  // Throws ValidationError if absent.
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id).has_value(); }

  const std::string& id(std::size_t index) const { return ids_[index]; }
  std::span<const float> vector(std::size_t index) const {
    return {data_.data() + index * dim_, dim_};
  }
  std::span<const float> vector(std::string_view id) const { return vector(index_of(id)); }

  // Records (recipe_id, step_index) for every image the corpus references.
  // Throws ValidationError when a referenced image is missing or an image id
  // is referenced by two different recipes.
  void bind_corpus(const Corpus& corpus);
  bool bound() const { return bound_; }

  std::optional<ImageMeta> meta(std::size_t index) const;
  // Dense recipe ordinal of an image, or kNoRecipe for images the corpus does
  // not reference.
  std::size_t recipe_slot(std::size_t index) const { return recipe_slot_[index]; }
  std::optional<std::size_t> recipe_slot_of(std::string_view recipe_id) const;

  // Scales every vector to unit L2 norm (zero vectors are left unchanged).
  void normalize();

  // Digest over dim, ids and raw float bits; independent of the file format.
  std::string content_sha256() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> recipe_slot_;
  std::vector<std::size_t> step_index_;
  std::vector<std::string> recipe_names_;
  std::unordered_map<std::string, std::size_t> recipe_lookup_;
  bool bound_ = false;
};

// Binary format, little-endian: "M3CE", u32 version (1), u32 dim, u64 count,
// then per record u16 id length, id bytes, dim x f32.
EmbeddingStore read_embeddings_binary(std::istream& in, std::string_view source_name = "<stream>");
void write_embeddings_binary(std::ostream& out, const EmbeddingStore& store);
// JSON fixture format: {"dim": int, "vectors": {"image_id": [floats]}}.
EmbeddingStore read_embeddings_json(std::istream& in, std::string_view source_name = "<stream>");
// Dispatches on the leading magic bytes.
EmbeddingStore load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store);

// Euclidean distance. Throws ValidationError when the lengths differ.
double distance(std::span<const float> a, std::span<const float> b);

struct Neighbor {
  std::string image_id;
  double distance = 0.0;
};

struct KnnResult {
  std::vector<Neighbor> neighbors;  // ascending distance, ties by image id
  bool shortfall = false;           // fewer than k eligible candidates
};

// Exact brute-force search over every image whose recipe is not excluded,
// excluding the center itself. Requires a bound store for recipe exclusion.
KnnResult knn(const EmbeddingStore& store, std::string_view center, std::size_t k,
              const std::set<std::string>& excluded_recipes);

struct RingStats {
  double mean = 0.0;    // m_d
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::size_t k_c = 0;
};

// Throws ValidationError for fewer than two distances.
RingStats ring_stats(std::span<const double> distances);
RingStats ring_stats(std::span<const Neighbor> neighbors);

// Half-open radial band [r_lo, r_hi).
struct Annulus {
  double r_lo = 0.0;
  double r_hi = 0.0;

  Annulus() = default;
  // Throws ValidationError unless 0 <= r_lo < r_hi.
  Annulus(double lo, double hi);

  bool contains(double d) const { return d >= r_lo && d < r_hi; }
  double width() const { return r_hi - r_lo; }
};

enum class Fallback {
  none,
  widened,         // r_hi grown by whole widths until the band was non-empty
  nearest_to_mid,  // no member after the maximum widening
};

std::string_view to_string(Fallback f);
Fallback fallback_from_string(std::string_view s);

inline constexpr int kMaxWidenings = 8;

// An eligible image together with its distance from the query.
struct Candidate {
  std::size_t index = 0;
  double distance = 0.0;
};

struct AnnulusPick {
  std::size_t index = 0;
  double distance = 0.0;
  Annulus bounds;  // effective band after any widening
  Fallback fallback = Fallback::none;
  int widenings = 0;
};

// Uniform draw among candidates inside the band, skipping `taken`. When the
// band is empty r_hi grows by the band width up to kMaxWidenings times; if it
// is still empty the candidate whose distance is closest to the original
// midpoint is returned (ties by index). Throws Error when no candidate
// remains at all.
AnnulusPick pick_in_annulus(std::span<const Candidate> candidates, const Annulus& band,
                            std::span<const std::size_t> taken, Rng& rng);

// Distances from a query point to every stored image.
std::vector<double> distances_from(const EmbeddingStore& store, std::span<const float> point);

// Candidates not in an excluded recipe slot and not in excluded_indices, in index order.
std::vector<Candidate> eligible_candidates(const EmbeddingStore& store,
                                           std::span<const double> distances,
                                           std::span<const std::size_t> excluded_slots,
                                           std::span<const std::size_t> excluded_indices);

// The k smallest candidates by (distance, index), ascending.
std::vector<Candidate> nearest(std::span<const Candidate> candidates, std::size_t k);

struct AnnulusDraw {
  std::string image_id;
  double distance = 0.0;
  Annulus bounds;
  Fallback fallback = Fallback::none;
  int widenings = 0;
};

AnnulusDraw sample_in_annulus(const EmbeddingStore& store, std::string_view center,
                              const Annulus& band, const std::set<std::string>& excluded_recipes,
                              const std::set<std::string>& extra_excluded_ids, Rng& rng);

// Component-wise mean. Throws ValidationError for an empty list.
Vector mean_embedding(const EmbeddingStore& store, std::span<const std::string> ids);

}  // namespace vcloze
