#include <cmath>
#include <map>

#include "doctest.h"
#include "sempipes/errors.hpp"
#include "sempipes/random.hpp"
#include "sempipes/table.hpp"

using namespace sempipes;

namespace {

Table baskets() {
  return Table({Column::numeric("ID", {1, 2, 3}), Column::strings("who", {"a", "b", std::nullopt})});
}

Table items() {
  return Table({Column::numeric("basket_ID", {1, 1, 3, 3, 3, 9}),
                Column::numeric("price", {2.0, 3.0, 1.0, std::nullopt, 4.0, 100.0})});
}

}  // namespace

TEST_CASE("column construction rejects cells of the wrong kind") {
  CHECK_THROWS_AS(Column("x", Kind::Numeric, {Cell{std::string("a")}}), SchemaError);
  CHECK_NOTHROW(Column("x", Kind::String, {Cell{}, Cell{std::string("a")}}));
}

TEST_CASE("table rejects duplicate and ragged columns") {
  CHECK_THROWS_AS(Table({Column::numeric("a", {1}), Column::numeric("a", {2})}), SchemaError);
  CHECK_THROWS_AS(Table({Column::numeric("a", {1}), Column::numeric("b", {2, 3})}), SchemaError);
}

TEST_CASE("compare_cells orders missing first then by value") {
  CHECK(compare_cells(Cell{}, Cell{1.0}) < 0);
  CHECK(compare_cells(Cell{1.0}, Cell{2.0}) < 0);
  CHECK(compare_cells(Cell{false}, Cell{true}) < 0);
  CHECK(compare_cells(Cell{std::string("a")}, Cell{std::string("b")}) < 0);
  CHECK(compare_cells(Cell{2.0}, Cell{2.0}) == 0);
}

TEST_CASE("format_cell uses the shortest round-trip form") {
  CHECK(format_cell(Cell{0.1}) == "0.1");
  CHECK(format_cell(Cell{3.0}) == "3");
  CHECK(format_cell(Cell{}) == "");
  CHECK(format_cell(Cell{true}) == "true");
}

TEST_CASE("left join keeps every left row and fills unmatched with missing") {
  const Table right({Column::numeric("k", {1, 3}), Column::numeric("v", {10, 30})});
  const Table out = left_outer_join(baskets(), "ID", right, "k");
  REQUIRE(out.row_count() == 3);
  CHECK(out.names() == std::vector<std::string>{"ID", "who", "v"});
  CHECK(out.column("v")[0] == Cell{10.0});
  CHECK(is_missing(out.column("v")[1]));
  CHECK(out.column("v")[2] == Cell{30.0});
}

TEST_CASE("left join rejects duplicate right keys and mismatched kinds") {
  CHECK_THROWS_AS(left_outer_join(baskets(), "ID", items(), "basket_ID"), JoinError);
  const Table right({Column::strings("k", {"1"}), Column::numeric("v", {1})});
  CHECK_THROWS_AS(left_outer_join(baskets(), "ID", right, "k"), JoinError);
}

TEST_CASE("left join never matches missing keys") {
  const Table left({Column::numeric("k", {std::nullopt, 1})});
  const Table right({Column::numeric("k2", {1}), Column::numeric("v", {5})});
  const Table out = left_outer_join(left, "k", right, "k2");
  CHECK(is_missing(out.column("v")[0]));
  CHECK(out.column("v")[1] == Cell{5.0});
}

TEST_CASE("group_aggregate matches a hand computation") {
  const std::vector<AggSpec> specs{{"price", AggFunction::Sum, "total"},
                                   {"price", AggFunction::Count, "n"},
                                   {"price", AggFunction::Mean, "avg"},
                                   {"price", AggFunction::Std, "sd"}};
  const Table g = group_aggregate(items(), "basket_ID", specs);
  REQUIRE(g.row_count() == 3);
  CHECK(g.column("basket_ID")[0] == Cell{1.0});
  CHECK(g.column("basket_ID")[2] == Cell{9.0});
  CHECK(g.column("total")[1] == Cell{5.0});
  CHECK(g.column("n")[1] == Cell{2.0});
  CHECK(g.column("avg")[0] == Cell{2.5});
  CHECK(std::get<double>(g.column("sd")[0]) == doctest::Approx(0.5));
  CHECK(g.column("sd")[2] == Cell{0.0});
}

TEST_CASE("numeric aggregations reject string sources") {
  const Table t({Column::numeric("k", {1}), Column::strings("s", {"x"})});
  const std::vector<AggSpec> specs{{"s", AggFunction::Mean, "m"}};
  CHECK_THROWS_AS(group_aggregate(t, "k", specs), TypeError);
  const std::vector<AggSpec> ok{{"s", AggFunction::Mode, "m"}, {"s", AggFunction::NUnique, "u"}};
  const Table g = group_aggregate(t, "k", ok);
  CHECK(g.column("m")[0] == Cell{std::string("x")});
  CHECK(g.column("u")[0] == Cell{1.0});
}

TEST_CASE("aggregate_cells empty-group conventions") {
  const std::vector<Cell> none{Cell{}};
  CHECK(aggregate_cells(AggFunction::Count, none) == Cell{0.0});
  CHECK(aggregate_cells(AggFunction::Sum, none) == Cell{0.0});
  CHECK(is_missing(aggregate_cells(AggFunction::Mean, none)));
  const std::vector<Cell> tie{Cell{2.0}, Cell{1.0}, Cell{2.0}, Cell{1.0}};
  CHECK(aggregate_cells(AggFunction::Mode, tie) == Cell{1.0});
}

TEST_CASE("property: group_aggregate sum equals a brute-force per-key sum") {
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    Rng rng(derive_seed(7, trial));
    const std::size_t n = rng.below(40);
    std::vector<std::optional<double>> keys, vals;
    for (std::size_t i = 0; i < n; ++i) {
      keys.push_back(rng.below(10) == 0 ? std::nullopt : std::optional<double>(double(rng.below(5))));
      vals.push_back(rng.below(6) == 0 ? std::nullopt : std::optional<double>(rng.normal()));
    }
    const Table t({Column::numeric("k", keys), Column::numeric("v", vals)});
    const std::vector<AggSpec> specs{{"v", AggFunction::Sum, "s"}, {"v", AggFunction::Count, "c"}};
    const Table g = group_aggregate(t, "k", specs);
    std::map<double, std::pair<double, double>> oracle;
    std::vector<double> order;
    for (std::size_t i = 0; i < n; ++i) {
      if (!keys[i]) continue;
      if (!oracle.count(*keys[i])) order.push_back(*keys[i]);
      auto& slot = oracle[*keys[i]];
      if (vals[i]) {
        slot.first += *vals[i];
        slot.second += 1;
      }
    }
    REQUIRE(g.row_count() == order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      CHECK(g.column("k")[r] == Cell{order[r]});
      CHECK(std::get<double>(g.column("s")[r]) == doctest::Approx(oracle[order[r]].first));
      CHECK(g.column("c")[r] == Cell{oracle[order[r]].second});
    }
  }
}

TEST_CASE("profile reports statistics and bounded samples") {
  const TableProfile p = profile(items(), 3);
  CHECK(p.row_count == 6);
  const ColumnProfile& price = p.columns[1];
  CHECK(price.missing_fraction == doctest::Approx(1.0 / 6.0));
  CHECK(*price.min == 1.0);
  CHECK(*price.max == 100.0);
  CHECK(*price.mean == doctest::Approx(22.0));
  CHECK(price.samples.size() <= 5);
  CHECK(profile(items(), 3).columns[1].samples == price.samples);
}

TEST_CASE("sample_rows keeps row order and is seeded") {
  Table t({Column::numeric("i", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9})});
  const Table s = sample_rows(t, 4, 11);
  REQUIRE(s.row_count() == 4);
  for (std::size_t r = 1; r < 4; ++r)
    CHECK(s.column("i").number(r - 1) < s.column("i").number(r));
  CHECK(sample_rows(t, 4, 11) == s);
  CHECK(sample_rows(t, 50, 11) == t);
}

TEST_CASE("table derivations") {
  const Table t = baskets();
  CHECK(t.without(std::vector<std::string>{"who"}).names() == std::vector<std::string>{"ID"});
  CHECK(t.select(std::vector<std::string>{"who", "ID"}).names() == std::vector<std::string>{"who", "ID"});
  CHECK(t.head(2).row_count() == 2);
  CHECK(t.append_rows(t).row_count() == 6);
  const std::vector<std::size_t> rows{2, 0};
  CHECK(t.take(rows).column("ID")[0] == Cell{3.0});
  CHECK_THROWS_AS(t.with_column(Column::numeric("ID", {1, 2, 3})), SchemaError);
}
