#pragma once

#include <cstddef>
#include <cstdint>

#include "vcloze/corpus.hpp"
#include "vcloze/embedding_space.hpp"

namespace vcloze {

// Recipes are grouped into families that share a centroid and a drift
// direction. Each recipe centroid is its family centroid plus member noise;
// step k's image is centroid + k * drift * u_family + within noise. With
// n_families == n_recipes and member_spread == 0 every recipe is its own
// isotropic cluster with its own drift direction.
struct SynthParams {
  std::size_t n_recipes = 500;
  std::size_t steps_lo = 5;
  std::size_t steps_hi = 12;
  std::size_t dim = 64;
  double recipe_spread = 1.0;   // std of family centroids
  double within_spread = 0.25;  // std of images around the drifting centroid
  double drift = 0.2;           // per-step displacement along the family direction
  std::size_t n_families = 25;
  double member_spread = 0.12;  // std of recipe centroids around their family centroid
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthData {
  Corpus corpus;
  EmbeddingStore store;
  Vocabulary vocabulary;  // covers most, not all, of the placeholder tokens
};

SynthData generate_synthetic(const SynthParams& params);

}  // namespace vcloze
