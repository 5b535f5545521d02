#include <doctest.h>

#include "sempipes/errors.hpp"
#include "sempipes/spec_file.hpp"

using namespace sempipes;

TEST_CASE("toml: scalars, tables and arrays of tables") {
  const auto j = parse_toml(R"(
# pipeline
version = 1
name = "toy"   # trailing comment
ratio = 1_000.5
flag = true
list = [1, 2,
        3,]

[inputs]
baskets = 'one row per basket'
"odd key" = "x\ty"

[[nodes]]
id = "a"
params = { kind = "gen_features", k = 2 }

[[nodes]]
id = "b"
parents = ["a"]
[nodes.params]
column = "c"
)");
  CHECK(j["version"] == 1);
  CHECK(j["name"] == "toy");
  CHECK(j["ratio"].get<double>() == doctest::Approx(1000.5));
  CHECK(j["flag"] == true);
  CHECK(j["list"].size() == 3);
  CHECK(j["inputs"]["baskets"] == "one row per basket");
  CHECK(j["inputs"]["odd key"] == "x\ty");
  REQUIRE(j["nodes"].size() == 2);
  CHECK(j["nodes"][0]["params"]["k"] == 2);
  CHECK(j["nodes"][1]["params"]["column"] == "c");
  CHECK(j["nodes"][1]["parents"][0] == "a");
}

TEST_CASE("toml: multi-line strings and unicode escapes") {
  const auto j = parse_toml("a = \"\"\"\nline one\nline two\"\"\"\nb = '''raw \\n'''\nc = \"\\u00e9\"\n");
  CHECK(j["a"] == "line one\nline two");
  CHECK(j["b"] == "raw \\n");
  CHECK(j["c"] == "\xc3\xa9");
}

TEST_CASE("toml: dotted keys") {
  const auto j = parse_toml("learner.kind = \"ridge\"\nlearner.l2 = 0.5\n");
  CHECK(j["learner"]["kind"] == "ridge");
  CHECK(j["learner"]["l2"].get<double>() == doctest::Approx(0.5));
}

TEST_CASE("toml: errors carry positions") {
  try {
    parse_toml("a = 1\nb = \"open\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("[t]\nx = 1\n[t]\ny = 2\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("a = [1, 2\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("a = 1 b = 2\n"), ParseError);
  CHECK_THROWS_AS(parse_toml("a = nope\n"), ParseError);
  CHECK_NOTHROW(parse_toml("[[n]]\n[n.p]\nx = 1\n[[n]]\n[n.p]\nx = 2\n"));
}

TEST_CASE("toml: unreadable file") {
  CHECK_THROWS_AS(read_toml("/nonexistent/spec.toml"), ConfigError);
}
