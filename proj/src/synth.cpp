#include "vcloze/synth.hpp"

#include <array>
#include <cmath>
#include <utility>
#include <vector>
#include <cstdio>
#include <string>

#include "vcloze/errors.hpp"
#include "vcloze/rng.hpp"

namespace vcloze {

namespace {

constexpr std::array<const char*, 24> kWords = {
    "mix",   "the",    "flour", "water", "cut",    "glue",  "wood",  "sand",
    "paint", "fold",   "paper", "heat",  "pan",    "add",   "salt",  "stir",
    "drill", "hole",   "screw", "board", "attach", "bend",  "wire",  "solder"};

// Fused tokens the vocabulary does not contain.
constexpr std::array<const char*, 4> kFused = {"flourwater", "cutthe", "gluewood", "stirpan"};

std::string padded(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, value);
  return buf;
}

std::vector<double> gaussian(Rng& rng, std::size_t dim, double sd) {
  std::vector<double> v(dim);
  for (double& x : v) x = sd * rng.normal();
  return v;
}

}  // namespace

void SynthParams::validate() const {
  if (n_recipes == 0) throw ValidationError("n_recipes must be positive");
  if (steps_lo < 1 || steps_hi < steps_lo) throw ValidationError("steps range must satisfy 1 <= lo <= hi");
  if (dim == 0) throw ValidationError("dim must be positive");
  if (!(recipe_spread > 0.0) || !(within_spread > 0.0)) {
    throw ValidationError("spreads must be positive");
  }
  if (!(within_spread < recipe_spread)) {
    throw ValidationError("within_spread must be smaller than recipe_spread");
  }
  if (!(drift >= 0.0) || !(member_spread >= 0.0)) {
    throw ValidationError("drift and member_spread must be non-negative");
  }
  if (n_families == 0 || n_families > n_recipes) {
    throw ValidationError("n_families must lie in [1, n_recipes]");
  }
}

SynthData generate_synthetic(const SynthParams& p) {
  p.validate();
  Rng rng(derive_seed(p.seed, {"synth"}));

  struct Family {
    std::vector<double> centre;
    std::vector<double> direction;
  };
  std::vector<Family> families(p.n_families);
  for (auto& f : families) {
    f.centre = gaussian(rng, p.dim, p.recipe_spread);
    double norm = 0.0;
    do {
      f.direction = gaussian(rng, p.dim, 1.0);
      norm = 0.0;
      for (double x : f.direction) norm += x * x;
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& x : f.direction) x /= norm;
  }

  SynthData out;
  std::vector<std::pair<std::string, Vector>> entries;
  const int id_width = static_cast<int>(std::to_string(p.n_recipes - 1).size());
  for (std::size_t r = 0; r < p.n_recipes; ++r) {
    const Family& fam = families[r % p.n_families];
    std::vector<double> centre = fam.centre;
    for (double& x : centre) x += p.member_spread * rng.normal();

    Recipe recipe;
    recipe.recipe_id = padded("r", r, id_width);
    recipe.title = "synthetic recipe " + std::to_string(r);
    const std::size_t steps = p.steps_lo + rng.uniform_index(p.steps_hi - p.steps_lo + 1);
    for (std::size_t k = 0; k < steps; ++k) {
      Step step;
      step.index = k;
      const std::size_t n_tokens = 4 + rng.uniform_index(5);
      for (std::size_t t = 0; t < n_tokens; ++t) {
        step.tokens.push_back(rng.bernoulli(0.1) ? kFused[rng.uniform_index(kFused.size())]
                                                 : kWords[rng.uniform_index(kWords.size())]);
      }
      const std::string image = recipe.recipe_id + padded("_s", k, 2);
      step.image_ids.push_back(image);
      Vector v(p.dim);
      for (std::size_t d = 0; d < p.dim; ++d) {
        const double x = centre[d] + static_cast<double>(k) * p.drift * fam.direction[d] +
                         p.within_spread * rng.normal();
        v[d] = static_cast<float>(x);
      }
      entries.emplace_back(image, std::move(v));
      recipe.steps.push_back(std::move(step));
    }
    out.corpus.recipes.push_back(std::move(recipe));
  }
  out.store = EmbeddingStore(p.dim, std::move(entries));
  for (const char* w : kWords) out.vocabulary.insert(w);
  return out;
}

}  // namespace vcloze
