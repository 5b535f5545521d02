#include <doctest.h>

#include <set>

#include "sempipes/dsl.hpp"
#include "sempipes/errors.hpp"
#include "sempipes/synth.hpp"

using namespace sempipes;

namespace {

Table fixture() {
  return Table({
      Column::numeric("a", {1.0, 2.0, std::nullopt, 4.0}),
      Column::numeric("b", {2.0, 2.0, 3.0, 5.0}),
      Column::strings("title", {" Sandisk 32 GB", "usb 64gb", std::nullopt, "cable"}),
      Column::booleans("ok", {true, false, true, std::nullopt}),
  });
}

Table aux_fixture() {
  return Table({
      Column::numeric("key", {1, 1, 2, 3}),
      Column::numeric("qty", {1, 2, 3, 4}),
      Column::numeric("value", {10, 20, 30, 40}),
  });
}

SynthesisRequest request_for(OperatorSpec spec, const Table& t, const Table* aux = nullptr) {
  SynthesisRequest r;
  r.spec = std::move(spec);
  r.profiles.push_back({"input", profile(t, 7)});
  if (aux) r.profiles.push_back({"aux", profile(*aux, 7)});
  r.grammar = std::string(dsl::grammar_text());
  r.skeleton = skeleton_for(r.spec.kind);
  return r;
}

OperatorSpec spec_of(OperatorKind kind) {
  OperatorSpec s;
  s.kind = kind;
  s.name = "node";
  switch (kind) {
    case OperatorKind::AggFeatures: s.join = dsl::JoinKeys{"a", "key"}; break;
    case OperatorKind::FillNa: s.column = "a"; break;
    case OperatorKind::Clean: s.column = "title"; break;
    case OperatorKind::Refine: s.column = "b"; break;
    case OperatorKind::ExtractFeatures: s.outputs = {{"capacity", "storage size"}}; break;
    case OperatorKind::Choose: s.ranges = {{"l2", {0.0, 1.0}}, {"epochs", {10, 500}}}; break;
    default: break;
  }
  return s;
}

}  // namespace

TEST_CASE("mock: gen_features on two numeric columns") {
  Table t({Column::numeric("a", {1, 2, 3}), Column::numeric("b", {4, 5, 6})});
  auto spec = spec_of(OperatorKind::GenFeatures);
  spec.k = 2;
  MockSynthesizer mock;
  const auto res = mock.synthesize(request_for(spec, t));
  CHECK(res.source == "dslv1 FeatureMap\nfeature f1 = log1p(a)\nfeature f2 = a / b\n");
}

TEST_CASE("mock: every operator kind yields a well-typed program, at several steps") {
  const Table t = fixture();
  const Table aux = aux_fixture();
  MockSynthesizer mock;
  for (auto kind : {OperatorKind::GenFeatures, OperatorKind::AggFeatures, OperatorKind::ExtractFeatures,
                    OperatorKind::Augment, OperatorKind::FillNa, OperatorKind::Clean, OperatorKind::Refine,
                    OperatorKind::Select, OperatorKind::Choose}) {
    for (int memories = 0; memories < 6; ++memories) {
      auto req = request_for(spec_of(kind), t, kind == OperatorKind::AggFeatures ? &aux : nullptr);
      req.memories.resize(static_cast<std::size_t>(memories));
      const auto res = mock.synthesize(req);
      CAPTURE(res.source);
      const auto prog = dsl::parse(res.source, program_kind_for(kind));
      const dsl::Schema aux_schema = aux.schema();
      CHECK_NOTHROW(dsl::typecheck(prog, t.schema(), kind == OperatorKind::AggFeatures ? &aux_schema : nullptr));
    }
  }
}

TEST_CASE("mock: deterministic per request, varied by history and seed") {
  const Table t = fixture();
  MockSynthesizer mock;
  auto req = request_for(spec_of(OperatorKind::GenFeatures), t);
  CHECK(mock.synthesize(req).source == mock.synthesize(req).source);
  auto more = req;
  more.memories.push_back({"x", 0.5, "", ""});
  CHECK(MockSynthesizer::mutation_step(more) == MockSynthesizer::mutation_step(req) + 1);
  CHECK(mock.synthesize(more).source != mock.synthesize(req).source);

  req.temperature = 2.0;
  std::set<int> steps;
  for (std::uint64_t s = 0; s < 40; ++s) {
    req.seed = s;
    const int step = MockSynthesizer::mutation_step(req);
    CHECK(step >= 0);
    CHECK(step <= 2);
    steps.insert(step);
  }
  CHECK(steps.size() == 3);
}

TEST_CASE("mock: fault injection fails the first attempts only") {
  MockSynthesizer mock(MockOptions{2});
  auto req = request_for(spec_of(OperatorKind::GenFeatures), fixture());
  for (int attempt = 1; attempt <= 3; ++attempt) {
    req.attempt = attempt;
    const auto res = mock.synthesize(req);
    if (attempt <= 2) CHECK_THROWS_AS(dsl::parse(res.source, dsl::ProgramKind::FeatureMap), ParseError);
    else CHECK_NOTHROW(dsl::parse(res.source, dsl::ProgramKind::FeatureMap));
  }
}

TEST_CASE("request: prompt and fingerprint are stable and sensitive") {
  auto req = request_for(spec_of(OperatorKind::Select), fixture());
  const auto fp = req.fingerprint();
  CHECK(fp.size() == 64);
  CHECK(req.fingerprint() == fp);
  req.feedback.push_back("schema mismatch");
  CHECK(req.fingerprint() != fp);
  CHECK(req.prompt().find("schema mismatch") != std::string::npos);
  CHECK(req.to_json()["tables"][0]["rows"] == 4);
}

TEST_CASE("extract_program") {
  const auto res = extract_program("Here you go.\n```dslv1\ndslv1 SelectList\nselect a\n```\nKeeps a.");
  CHECK(res.source == "dslv1 SelectList\nselect a\n");
  CHECK(res.commentary == "Here you go.\n\nKeeps a.");

  const auto second = extract_program("```python\nprint(1)\n```\n```\ndslv1 ChoiceMap\nchoose l2 = 1\n```");
  CHECK(second.source == "dslv1 ChoiceMap\nchoose l2 = 1\n");

  CHECK_THROWS_AS(extract_program("no code at all"), ExtractionError);
  CHECK_THROWS_AS(extract_program("```\nselect a\n```"), ExtractionError);
}

TEST_CASE("unavailable synthesizer raises a transport error") {
  UnavailableSynthesizer none;
  CHECK_THROWS_AS(none.synthesize(request_for(spec_of(OperatorKind::Select), fixture())), TransportError);
}
