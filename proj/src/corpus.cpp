#include "vcloze/corpus.hpp"

#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "vcloze/errors.hpp"

namespace vcloze {
namespace {

using nlohmann::json;

std::vector<std::string> string_array(const json& j, const char* field) {
  if (!j.is_array()) throw ValidationError(std::string("'") + field + "' must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string()) {
      throw ValidationError(std::string("'") + field + "' must contain only strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

Recipe recipe_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("recipe must be a JSON object");
  Recipe r;
  if (!j.contains("recipe_id") || !j["recipe_id"].is_string()) {
    throw ValidationError("missing string field 'recipe_id'");
  }
  r.recipe_id = j["recipe_id"].get<std::string>();
  if (r.recipe_id.empty()) throw ValidationError("empty recipe_id");
  if (j.contains("title")) {
    if (!j["title"].is_string()) throw ValidationError("'title' must be a string");
    r.title = j["title"].get<std::string>();
  }
  if (!j.contains("steps") || !j["steps"].is_array()) {
    throw ValidationError("missing array field 'steps'");
  }
  for (const auto& s : j["steps"]) {
    if (!s.is_object()) throw ValidationError("step must be a JSON object");
    Step step;
    step.index = r.steps.size();
    if (s.contains("tokens")) step.tokens = string_array(s["tokens"], "tokens");
    if (s.contains("image_ids")) step.image_ids = string_array(s["image_ids"], "image_ids");
    r.steps.push_back(std::move(step));
  }
  return r;
}

void validate_recipe(const Recipe& r) {
  if (r.steps.empty()) throw ValidationError("recipe '" + r.recipe_id + "' has no steps");
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    if (r.steps[i].index != i) {
      throw ValidationError("recipe '" + r.recipe_id + "': step index mismatch at " +
                            std::to_string(i));
    }
    for (const auto& id : r.steps[i].image_ids) {
      if (!seen.insert(id).second) {
        throw ValidationError("recipe '" + r.recipe_id + "': duplicate image_id '" + id + "'");
      }
    }
  }
}

}  // namespace

Corpus parse_corpus(std::istream& in, std::string_view source_name) {
  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = [&] {
      return std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    };
    Recipe recipe;
    try {
      recipe = recipe_from_json(json::parse(line));
      validate_recipe(recipe);
    } catch (const json::exception& e) {
      throw ValidationError(where() + "malformed JSON (" + e.what() + ")");
    } catch (const ValidationError& e) {
      throw ValidationError(where() + e.what());
    }
    if (!ids.insert(recipe.recipe_id).second) {
      throw ValidationError(where() + "duplicate recipe_id '" + recipe.recipe_id + "'");
    }
    corpus.recipes.push_back(std::move(recipe));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& r : corpus.recipes) {
    json steps = json::array();
    for (const auto& s : r.steps) {
      steps.push_back({{"tokens", s.tokens}, {"image_ids", s.image_ids}});
    }
    json j = {{"recipe_id", r.recipe_id}, {"title", r.title}, {"steps", std::move(steps)}};
    out << j.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
  if (!out) throw IoError("write failed for " + path.string());
}

void validate_corpus(const Corpus& corpus) {
  std::unordered_set<std::string_view> ids;
  for (const auto& r : corpus.recipes) {
    if (!ids.insert(r.recipe_id).second) {
      throw ValidationError("duplicate recipe_id '" + r.recipe_id + "'");
    }
    validate_recipe(r);
  }
}

std::vector<std::string> referenced_image_ids(const Corpus& corpus) {
  std::vector<std::string> out;
  for (const auto& r : corpus.recipes) {
    for (const auto& s : r.steps) out.insert(out.end(), s.image_ids.begin(), s.image_ids.end());
  }
  return out;
}

Corpus filter_by_min_steps(const Corpus& corpus, std::size_t min_steps) {
  if (min_steps < 1) throw ValidationError("min_steps must be at least 1");
  Corpus out;
  for (const auto& r : corpus.recipes) {
    if (r.steps.size() >= min_steps) out.recipes.push_back(r);
  }
  return out;
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    vocab.insert(line.substr(b, e - b + 1));
  }
  return vocab;
}

CorpusStats corpus_stats(const Corpus& corpus, const Vocabulary& vocabulary) {
  if (vocabulary.empty()) throw ValidationError("vocabulary is empty");
  CorpusStats st;
  st.recipe_count = corpus.recipes.size();
  for (const auto& r : corpus.recipes) {
    st.step_count += r.steps.size();
    ++st.steps_histogram[r.steps.size()];
    for (const auto& s : r.steps) {
      st.image_count += s.image_ids.size();
      st.token_count += s.tokens.size();
      for (const auto& t : s.tokens) {
        if (vocabulary.contains(t)) ++st.in_vocab_count;
      }
    }
  }
  if (st.token_count == 0) {
    st.zero_token_denominator = true;
    st.in_vocab_ratio = 0.0;
  } else {
    st.in_vocab_ratio =
        static_cast<double>(st.in_vocab_count) / static_cast<double>(st.token_count);
  }
  return st;
}

}  // namespace vcloze
