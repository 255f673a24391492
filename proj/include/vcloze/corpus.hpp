#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace vcloze {

struct Step {
  std::size_t index = 0;  // position within the parent recipe
  std::vector<std::string> tokens;
  std::vector<std::string> image_ids;  // may be empty

  bool has_images() const { return !image_ids.empty(); }
};

struct Recipe {
  std::string recipe_id;
  std::string title;
  std::vector<Step> steps;
};

struct Corpus {
  std::vector<Recipe> recipes;

  std::size_t size() const { return recipes.size(); }
  bool empty() const { return recipes.empty(); }
};

using Vocabulary = std::unordered_set<std::string>;

struct CorpusStats {
  std::size_t recipe_count = 0;
  std::size_t step_count = 0;
  std::size_t image_count = 0;
  std::size_t token_count = 0;
  std::size_t in_vocab_count = 0;
  // in_vocab_count / token_count; 0 when the corpus has no tokens.
  double in_vocab_ratio = 0.0;
  bool zero_token_denominator = false;
  std::map<std::size_t, std::size_t> steps_histogram;  // #steps -> #recipes
};

// Reads the JSONL corpus format, one recipe per line:
//   {"recipe_id": str, "title": str, "steps": [{"tokens": [str], "image_ids": [str]}]}
// Blank lines are ignored. Throws ValidationError naming the line for malformed
// input, duplicate recipe ids and duplicate image ids within a recipe; IoError
// when the file cannot be read.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, std::string_view source_name = "<stream>");

void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Checks the structural invariants; throws ValidationError.
void validate_corpus(const Corpus& corpus);

// Every image id referenced by the corpus, in corpus order.
std::vector<std::string> referenced_image_ids(const Corpus& corpus);

// Recipes with at least min_steps steps, order preserved. min_steps must be >= 1.
Corpus filter_by_min_steps(const Corpus& corpus, std::size_t min_steps);

// Newline-delimited word list; surrounding whitespace and empty lines are dropped.
Vocabulary load_vocabulary(const std::filesystem::path& path);

// Token matching is exact and case-sensitive. Throws ValidationError for an
// empty vocabulary.
CorpusStats corpus_stats(const Corpus& corpus, const Vocabulary& vocabulary);

}  // namespace vcloze
