#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "vcloze/corpus.hpp"
#include "vcloze/errors.hpp"

using namespace vcloze;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in, "mem");
}

std::string message_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

const char* kTwo =
    R"({"recipe_id":"b","title":"B","steps":[{"tokens":["mix"],"image_ids":["b0"]}]})"
    "\n"
    R"({"recipe_id":"a","title":"A","steps":[{"tokens":["cut","wood"],"image_ids":[]},{"tokens":[],"image_ids":["a1","a2"]}]})"
    "\n";

}  // namespace

TEST_CASE("empty file gives an empty corpus") {
  CHECK(parse("").recipes.empty());
}

TEST_CASE("two recipes keep their order") {
  const Corpus c = parse(kTwo);
  REQUIRE(c.recipes.size() == 2);
  CHECK(c.recipes[0].recipe_id == "b");
  CHECK(c.recipes[1].recipe_id == "a");
  CHECK(c.recipes[1].steps[1].index == 1);
  CHECK(c.recipes[1].steps[1].image_ids == std::vector<std::string>{"a1", "a2"});
  CHECK_FALSE(c.recipes[1].steps[0].has_images());
}

TEST_CASE("duplicate recipe id is reported by name and line") {
  const std::string line = R"({"recipe_id":"r1","steps":[{"tokens":[],"image_ids":[]}]})";
  const std::string msg = message_of(line + "\n" + line + "\n");
  CHECK(msg.find("r1") != std::string::npos);
  CHECK(msg.find("mem:2") != std::string::npos);
}

TEST_CASE("malformed lines and bad records are rejected with a line number") {
  CHECK(message_of("{not json}\n").find("mem:1") != std::string::npos);
  CHECK(message_of(R"({"recipe_id":"x","steps":[]})").find("no steps") != std::string::npos);
  CHECK(message_of(R"({"recipe_id":"x","steps":[{"tokens":[],"image_ids":["i","i"]}]})")
            .find("duplicate image_id") != std::string::npos);
  CHECK(message_of(R"({"steps":[{"tokens":[],"image_ids":[]}]})").find("recipe_id") !=
        std::string::npos);
}

TEST_CASE("blank lines are skipped") {
  CHECK(parse(std::string("\n") + kTwo + "\n\n").recipes.size() == 2);
}

TEST_CASE("write then parse is the identity") {
  const Corpus c = parse(kTwo);
  std::ostringstream out;
  write_corpus(out, c);
  const Corpus back = parse(out.str());
  std::ostringstream again;
  write_corpus(again, back);
  CHECK(out.str() == again.str());
  REQUIRE(back.recipes.size() == c.recipes.size());
  for (std::size_t i = 0; i < c.recipes.size(); ++i) {
    CHECK(back.recipes[i].recipe_id == c.recipes[i].recipe_id);
    CHECK(back.recipes[i].title == c.recipes[i].title);
    CHECK(back.recipes[i].steps.size() == c.recipes[i].steps.size());
  }
}

TEST_CASE("filter_by_min_steps") {
  Corpus c;
  for (std::size_t n : {3, 5, 7}) c.recipes.push_back(fixtures::recipe_with_steps("r" + std::to_string(n), n));

  SUBCASE("keeps long recipes in order") {
    const Corpus f = filter_by_min_steps(c, 5);
    REQUIRE(f.recipes.size() == 2);
    CHECK(f.recipes[0].steps.size() == 5);
    CHECK(f.recipes[1].steps.size() == 7);
  }
  SUBCASE("min_steps 1 is the identity") { CHECK(filter_by_min_steps(c, 1).recipes.size() == 3); }
  SUBCASE("everything too short gives an empty corpus") {
    CHECK(filter_by_min_steps(c, 8).recipes.empty());
  }
  SUBCASE("idempotent and monotone") {
    const Corpus once = filter_by_min_steps(c, 5);
    CHECK(filter_by_min_steps(once, 5).recipes.size() == once.recipes.size());
    for (std::size_t m = 1; m < 9; ++m) {
      CHECK(filter_by_min_steps(c, m + 1).recipes.size() <= filter_by_min_steps(c, m).recipes.size());
    }
  }
  SUBCASE("zero is rejected") { CHECK_THROWS_AS(filter_by_min_steps(c, 0), ValidationError); }
}

TEST_CASE("corpus_stats in-vocabulary ratio") {
  Corpus c;
  Recipe r = fixtures::recipe_with_steps("r", 1);
  r.steps[0].tokens = {"mix", "the", "flourwater"};
  c.recipes.push_back(r);
  const Vocabulary vocab{"mix", "the", "flour", "water"};

  const auto st = corpus_stats(c, vocab);
  CHECK(st.in_vocab_ratio == doctest::Approx(2.0 / 3.0));
  CHECK(st.token_count == 3);
  CHECK(st.in_vocab_count == 2);
  CHECK(st.recipe_count == 1);
  CHECK(st.image_count == 1);

  c.recipes[0].steps[0].tokens = {"mix", "the"};
  CHECK(corpus_stats(c, vocab).in_vocab_ratio == 1.0);

  c.recipes[0].steps[0].tokens.clear();
  const auto zero = corpus_stats(c, vocab);
  CHECK(zero.in_vocab_ratio == 0.0);
  CHECK(zero.zero_token_denominator);

  CHECK_THROWS_AS(corpus_stats(c, Vocabulary{}), ValidationError);
}

TEST_CASE("corpus_stats is invariant under recipe reordering") {
  Corpus c = parse(kTwo);
  c.recipes.push_back(fixtures::recipe_with_steps("z", 6));
  const Vocabulary vocab{"mix", "t"};
  const auto a = corpus_stats(c, vocab);
  std::reverse(c.recipes.begin(), c.recipes.end());
  const auto b = corpus_stats(c, vocab);
  CHECK(a.token_count == b.token_count);
  CHECK(a.in_vocab_count == b.in_vocab_count);
  CHECK(a.step_count == b.step_count);
  CHECK(a.image_count == b.image_count);
  CHECK(a.steps_histogram == b.steps_histogram);
}

TEST_CASE("referenced_image_ids lists every image") {
  auto ids = referenced_image_ids(parse(kTwo));
  std::sort(ids.begin(), ids.end());
  CHECK(ids == std::vector<std::string>{"a1", "a2", "b0"});
}
