#include <doctest.h>

#include <json.hpp>

#include "polymodal/gradcheck.hpp"
#include "polymodal/instruct_gen.hpp"
#include "polymodal/meta_protocol.hpp"
#include "polymodal/model_zoo.hpp"
#include "support.hpp"

using namespace polymodal;

namespace {

std::string mutate(SplitMix64& rng, std::string s) {
  static const std::string alphabet = "{}[]()\",:\\ 'atx-\n\xc3\xa9\xff";
  const int edits = 1 + static_cast<int>(rng.below(4));
  for (int e = 0; e < edits; ++e) {
    const std::size_t at = s.empty() ? 0 : rng.below(s.size());
    const char c = alphabet[rng.below(alphabet.size())];
    switch (rng.below(3)) {
      case 0: s.insert(s.begin() + static_cast<std::ptrdiff_t>(at), c); break;
      case 1: if (!s.empty()) s.erase(at, 1); break;
      default: if (!s.empty()) s[at] = c;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("serialize then strict parse is the identity") {
  SplitMix64 rng(101);
  for (int i = 0; i < 1000; ++i) {
    const auto m = test::random_meta(rng);
    const auto wire = serialize_meta_response(m);
    const auto back = parse_meta_response(wire, ParseMode::strict);
    REQUIRE(back.meta == m);
    CHECK(back.diagnostics.warnings.empty());
    CHECK(serialize_meta_response(back.meta) == wire);
    // the canonical form is what a standard JSON writer would produce
    CHECK(nlohmann::ordered_json::parse(wire).dump() == wire);
  }
}

TEST_CASE("strict success implies the same lenient result") {
  SplitMix64 rng(202);
  for (int i = 0; i < 1000; ++i) {
    const auto wire = serialize_meta_response(test::random_meta(rng));
    const auto input = i % 2 ? mutate(rng, wire) : wire;
    ParseResult strict;
    try {
      strict = parse_meta_response(input, ParseMode::strict);
    } catch (const Error&) {
      continue;
    }
    const auto lenient = parse_meta_response(input, ParseMode::lenient);
    CHECK(lenient.meta == strict.meta);
  }
}

TEST_CASE("mutated input either parses or fails with a library error") {
  SplitMix64 rng(303);
  int recovered = 0, rejected = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto input = mutate(rng, serialize_meta_response(test::random_meta(rng)));
    for (auto mode : {ParseMode::strict, ParseMode::lenient}) {
      try {
        parse_meta_response(input, mode);
        ++recovered;
      } catch (const Error&) {
        ++rejected;
      }
    }
  }
  CHECK(recovered > 0);
  CHECK(rejected > 0);
}

TEST_CASE("lenient results canonicalize idempotently") {
  SplitMix64 rng(404);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto input = mutate(rng, serialize_meta_response(test::random_meta(rng)));
    ParseResult r;
    try {
      r = parse_meta_response(input, ParseMode::lenient);
    } catch (const Error&) {
      continue;
    }
    std::string once;
    try {
      once = serialize_meta_response(r.meta);
    } catch (const Error& e) {
      // lenient recovery may keep records the canonical form cannot hold
      CHECK(e.code() == ErrorCode::invariant_violation);
      continue;
    }
    const auto again = parse_meta_response(once, ParseMode::strict);
    CHECK(again.meta == r.meta);
    CHECK(serialize_meta_response(again.meta) == once);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("tuple rendering of a random meta-response recovers its invocations") {
  SplitMix64 rng(505);
  static const std::vector<std::string> kinds{"text-to-image", "text-to-audio", "text-to-video"};
  for (int i = 0; i < 300; ++i) {
    std::vector<Invocation> expect;
    std::string raw = "Sure. [";
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t j = 0; j < n; ++j) {
      Invocation inv{kinds[rng.below(3)], "prompt " + std::to_string(rng.below(1000))};
      raw += "(\"" + inv.model + "\", \"" + inv.prompt + "\"), ";
      expect.push_back(inv);
    }
    raw += "]";
    const auto r = parse_meta_response(raw, ParseMode::lenient);
    CHECK(r.meta.invocations == expect);
    CHECK(r.diagnostics.warnings.size() >= n);
  }
}

TEST_CASE("routing conserves count and order") {
  const auto reg = make_default_registry();
  SplitMix64 rng(606);
  for (int i = 0; i < 200; ++i) {
    const auto m = test::random_meta(rng);
    const auto plan = route(m, reg);
    REQUIRE(plan.items.size() == m.invocations.size());
    for (std::size_t j = 0; j < m.invocations.size(); ++j) {
      CHECK(plan.items[j].invocation == m.invocations[j]);
      CHECK(plan.items[j].model.kind == m.invocations[j].model);
    }
  }
}

TEST_CASE("template pairs always validate and round-trip through JSONL") {
  const auto reg = make_default_registry();
  const auto candidates = load_candidates(test::data_dir() / "instruct" / "candidates.tsv");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& p : template_generate(candidates, default_type_mix(), seed, 50)) {
      CHECK(validate_pair(p, reg).empty());
      CHECK(pair_from_line(pair_to_json(p), ParseMode::strict) == p);
    }
  }
}

TEST_CASE("gradients agree with finite differences on random instances") {
  for (std::uint64_t seed = 1000; seed < 1010; ++seed) {
    const auto inst = random_gradcheck_instance(seed);
    const auto report = gradcheck(inst.stack, std::span<const AlignmentSample<double>>(inst.batch));
    CAPTURE(seed);
    CHECK(report.passed(1e-4));
    CHECK(report.checked == zero_gradients(inst.stack).size());
  }
}
