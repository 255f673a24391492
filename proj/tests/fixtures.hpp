#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vcloze/corpus.hpp"
#include "vcloze/embedding_space.hpp"

namespace fixtures {

// A recipe per point, one image per recipe, named after the image.
struct Points {
  vcloze::Corpus corpus;
  vcloze::EmbeddingStore store;
};

inline Points singleton_recipes(const std::vector<std::pair<std::string, std::vector<float>>>& pts) {
  Points out;
  std::vector<std::pair<std::string, vcloze::Vector>> entries;
  for (const auto& [id, v] : pts) {
    vcloze::Recipe r;
    r.recipe_id = "rec_" + id;
    vcloze::Step s;
    s.tokens = {"x"};
    s.image_ids = {id};
    r.steps.push_back(s);
    out.corpus.recipes.push_back(r);
    entries.emplace_back(id, v);
  }
  out.store = vcloze::EmbeddingStore(pts.front().second.size(), std::move(entries));
  out.store.bind_corpus(out.corpus);
  return out;
}

inline vcloze::Recipe recipe_with_steps(const std::string& id, std::size_t steps,
                                        bool images = true) {
  vcloze::Recipe r;
  r.recipe_id = id;
  r.title = id;
  for (std::size_t k = 0; k < steps; ++k) {
    vcloze::Step s;
    s.index = k;
    s.tokens = {"t"};
    if (images) s.image_ids = {id + "_" + std::to_string(k)};
    r.steps.push_back(s);
  }
  return r;
}

}  // namespace fixtures
