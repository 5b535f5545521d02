#include <regex>

#include "doctest.h"
#include "sempipes/errors.hpp"
#include "sempipes/random.hpp"
#include "sempipes/regex.hpp"

using namespace sempipes;

namespace {

std::optional<std::string> find(std::string_view pattern, std::string_view text, bool icase = false) {
  RegexBudget budget(1'000'000);
  auto re = Regex::compile(pattern, icase);
  auto m = re.search(text, budget);
  if (!m) return std::nullopt;
  return std::string(*m->group(text, 0));
}

}  // namespace

TEST_CASE("basic matching") {
  CHECK(find("abc", "xxabcxx") == "abc");
  CHECK(find("a.c", "abc") == "abc");
  CHECK(find("[0-9]+", "ab 123 cd") == "123");
  CHECK(find("[^a-z]+", "abc123") == "123");
  CHECK(find("\\d{2,3}", "1 12345") == "123");
  CHECK(find("colou?r", "color") == "color");
  CHECK(find("^b", "ab") == std::nullopt);
  CHECK(find("b$", "ab") == "b");
  CHECK(find("cat|dog", "hotdog") == "dog");
  CHECK(find("", "abc") == "");
}

TEST_CASE("greedy and lazy quantifiers") {
  CHECK(find("a.*b", "aXbYb") == "aXbYb");
  CHECK(find("a.*?b", "aXbYb") == "aXb");
  CHECK(find("x+?", "xxx") == "x");
}

TEST_CASE("word boundaries and case folding") {
  CHECK(find("\\bgb\\b", "32gb 16 gb") == "gb");
  RegexBudget budget(100000);
  auto re = Regex::compile("\\b(32|64)\\s*gb");
  auto m = re.search("sandisk ultra 32 gb usb", budget);
  REQUIRE(m);
  CHECK(*m->group("sandisk ultra 32 gb usb", 1) == "32");
  CHECK(find("(?i)SanDisk", "sandisk") == "sandisk");
  CHECK(find("GB", "32gb", true) == "gb");
}

TEST_CASE("captures record the leftmost-first alternative") {
  RegexBudget budget(100000);
  const std::string text = "key=value";
  auto re = Regex::compile("(\\w+)=(\\w*)");
  auto m = re.search(text, budget);
  REQUIRE(m);
  CHECK(*m->group(text, 1) == "key");
  CHECK(*m->group(text, 2) == "value");
  CHECK(re.group_count() == 2);
}

TEST_CASE("replace_all substitutes groups") {
  RegexBudget budget(100000);
  auto re = Regex::compile("(\\d+)gb");
  CHECK(re.replace_all("8gb and 16gb", "$1 GB", budget) == "8 GB and 16 GB");
  CHECK(Regex::compile("x*").replace_all("abc", "-", budget) == "-a-b-c-");
  CHECK(Regex::compile("a").replace_all("a", "$$", budget) == "$");
}

TEST_CASE("syntax errors are parse errors") {
  CHECK_THROWS_AS(Regex::compile("(abc"), ParseError);
  CHECK_THROWS_AS(Regex::compile("[a-"), ParseError);
  CHECK_THROWS_AS(Regex::compile("*a"), ParseError);
  CHECK_THROWS_AS(Regex::compile("a{2,1}"), ParseError);
}

TEST_CASE("pathological patterns stay linear and respect the step budget") {
  const std::string text(30, 'a');
  RegexBudget big(100'000'000);
  auto re = Regex::compile("(a*)*b");
  CHECK_FALSE(re.search(text, big));
  RegexBudget tiny(50);
  CHECK_THROWS_AS(re.search(text, tiny), LimitExceeded);
}

TEST_CASE("property: agrees with std::regex on random patterns") {
  const std::vector<std::string> atoms{"a", "b", "ab", "[ab]", ".", "(a|b)", "(?:ab|a)", "\\d"};
  const std::vector<std::string> quants{"", "*", "+", "?", "{1,2}"};
  int compared = 0;
  for (std::uint64_t trial = 0; trial < 400; ++trial) {
    Rng rng(derive_seed(3, trial));
    std::string pattern;
    const std::size_t parts = 1 + rng.below(3);
    for (std::size_t i = 0; i < parts; ++i)
      pattern += atoms[rng.below(atoms.size())] + quants[rng.below(quants.size())];
    std::string text;
    const std::size_t len = rng.below(8);
    for (std::size_t i = 0; i < len; ++i) text.push_back("ab1"[rng.below(3)]);
    std::smatch sm;
    const bool expect = std::regex_search(text, sm, std::regex(pattern, std::regex::ECMAScript));
    const auto got = find(pattern, text);
    CHECK_MESSAGE(got.has_value() == expect, pattern << " on " << text);
    if (got && expect) {
      CHECK_MESSAGE(*got == sm.str(0), pattern << " on " << text);
    }
    ++compared;
  }
  CHECK(compared == 400);
}
