#include <doctest.h>

#include "polymodal/meta_protocol.hpp"
#include "polymodal/model_zoo.hpp"
#include "support.hpp"

using namespace polymodal;

namespace {

const std::string kCatCanonical =
    R"({"text":"","invocations":[{"model":"text-to-image","prompt":"A photo of a cat"}]})";

MetaResponse cat_meta() { return {"", {{"text-to-image", "A photo of a cat"}}}; }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("strict parse of the canonical cat meta-response") {
  auto r = parse_meta_response(kCatCanonical, ParseMode::strict);
  CHECK(r.meta == cat_meta());
  CHECK(r.diagnostics.warnings.empty());
  CHECK(r.diagnostics.mode == ParseMode::strict);
  CHECK(r.diagnostics.consumed_bytes == kCatCanonical.size());
}

TEST_CASE("strict accepts one trailing newline and nothing else") {
  CHECK(parse_meta_response(kCatCanonical + "\n", ParseMode::strict).meta == cat_meta());
  CHECK(parse_meta_response(kCatCanonical + "\r\n", ParseMode::strict).meta == cat_meta());
  CHECK(code_of([] { parse_meta_response(kCatCanonical + "\n\n", ParseMode::strict); }) ==
        ErrorCode::malformed_meta);
  CHECK(code_of([] { parse_meta_response(" " + kCatCanonical, ParseMode::strict); }) ==
        ErrorCode::malformed_meta);
}

TEST_CASE("strict rejects non-canonical JSON") {
  const char* cases[] = {
      R"({"invocations":[],"text":"hi"})",            // key order
      R"({"text": "hi","invocations":[]})",           // whitespace
      R"({"text":"hi","invocations":[],"extra":1})",  // extra key
      R"({"text":"hi"})",                             // missing key
      R"({"text":"hi","invocations":[{"model":"text-to-image","prompts":"x"}]})",
      R"(["text","hi"])",
      "Hello",
  };
  for (const char* c : cases) {
    CAPTURE(c);
    CHECK(code_of([&] { parse_meta_response(c, ParseMode::strict); }) == ErrorCode::malformed_meta);
  }
}

TEST_CASE("lenient passes plain text through") {
  auto r = parse_meta_response("Hello, how can I help?", ParseMode::lenient);
  CHECK(r.meta.text == "Hello, how can I help?");
  CHECK(r.meta.invocations.empty());
  CHECK(r.diagnostics.warnings.empty());
}

TEST_CASE("lenient recovers the tuple list with one warning per record") {
  auto r = parse_meta_response(R"([("text-to-image", "A photo of a cat")])", ParseMode::lenient);
  CHECK(r.meta == cat_meta());
  CHECK(r.diagnostics.warnings.size() == 1);

  auto two = parse_meta_response(
      "Sure. [('text-to-image', 'a cat'), (\"text-to-audio\", \"purring\"), ] Enjoy!",
      ParseMode::lenient);
  REQUIRE(two.meta.invocations.size() == 2);
  CHECK(two.meta.invocations[0] == Invocation{"text-to-image", "a cat"});
  CHECK(two.meta.invocations[1] == Invocation{"text-to-audio", "purring"});
  CHECK(two.meta.text == "Sure. Enjoy!");
  CHECK(two.diagnostics.warnings.size() == 2);
  CHECK(two.diagnostics.warnings[0].offset == 7);
}

TEST_CASE("lenient keeps textual order across several tuple lists") {
  auto r = parse_meta_response(
      "a [(\"text-to-video\", \"v\")] b [(\"text-to-image\", \"i\")] c", ParseMode::lenient);
  REQUIRE(r.meta.invocations.size() == 2);
  CHECK(r.meta.invocations[0].model == "text-to-video");
  CHECK(r.meta.invocations[1].model == "text-to-image");
  CHECK(r.meta.text == "a b c");
}

TEST_CASE("lenient leaves bracketed text that is not a tuple list alone") {
  auto r = parse_meta_response("see [1, 2] and [] and [(\"a\")]", ParseMode::lenient);
  CHECK(r.meta.invocations.empty());
  CHECK(r.meta.text == "see [1, 2] and [] and [(\"a\")]");
}

TEST_CASE("lenient reads the verbatim dataset block as the cat invocation") {
  auto r = parse_meta_response(test::kTupleFormBlock, ParseMode::lenient);
  CHECK(r.meta == cat_meta());
  CHECK_FALSE(r.diagnostics.warnings.empty());
}

TEST_CASE("lenient JSON tolerates missing keys and the prompts spelling") {
  auto r = parse_meta_response(
      R"({"invocations": [{"model": "text-to-image", "prompts": "A photo of a cat"}]})",
      ParseMode::lenient);
  CHECK(r.meta == cat_meta());
  CHECK(r.diagnostics.warnings.size() >= 2);
}

TEST_CASE("empty and oversized inputs") {
  CHECK(code_of([] { parse_meta_response("", ParseMode::lenient); }) == ErrorCode::empty_meta);
  CHECK(code_of([] { parse_meta_response("  \n", ParseMode::strict); }) == ErrorCode::empty_meta);
  CHECK(code_of([] { parse_meta_response(R"({"text":"","invocations":[]})", ParseMode::strict); }) ==
        ErrorCode::empty_meta);

  const std::string long_prompt(kMaxPromptBytes + 1, 'x');
  const std::string raw = "[(\"text-to-image\", \"" + long_prompt + "\")]";
  CHECK(code_of([&] { parse_meta_response(raw, ParseMode::lenient); }) == ErrorCode::prompt_too_long);
  const std::string ok_prompt(kMaxPromptBytes, 'x');
  CHECK(parse_meta_response("[(\"text-to-image\", \"" + ok_prompt + "\")]", ParseMode::lenient)
            .meta.invocations[0]
            .prompt.size() == kMaxPromptBytes);
}

TEST_CASE("invalid UTF-8 is malformed in both modes") {
  const std::string bad = "caf\xc3";
  CHECK(code_of([&] { parse_meta_response(bad, ParseMode::lenient); }) == ErrorCode::malformed_meta);
  CHECK(code_of([&] { parse_meta_response(bad, ParseMode::strict); }) == ErrorCode::malformed_meta);
}

TEST_CASE("serialize produces the canonical form") {
  CHECK(serialize_meta_response({"hi", {}}) == R"({"text":"hi","invocations":[]})");
  CHECK(serialize_meta_response(cat_meta()) == kCatCanonical);
  CHECK(code_of([] { serialize_meta_response({"", {}}); }) == ErrorCode::invariant_violation);
  CHECK(code_of([] {
          serialize_meta_response({"t", {{"text-to-image", std::string(kMaxPromptBytes + 1, 'a')}}});
        }) == ErrorCode::invariant_violation);
}

TEST_CASE("validate_invocations reports per index") {
  const auto registry = make_default_registry();
  CHECK(validate_invocations(cat_meta(), registry).empty());

  auto unknown = validate_invocations({"", {{"text-to-hologram", "x"}}}, registry);
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0].code == ErrorCode::unknown_model_kind);
  CHECK(unknown[0].index == 0);

  MetaResponse three{"", {{"text-to-image", "a"}, {"text-to-audio", ""}, {"text-to-video", "c"}}};
  auto errs = validate_invocations(three, registry);
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].code == ErrorCode::empty_prompt);
  CHECK(errs[0].index == 1);

  ModelRegistry open;
  CHECK(code_of([&] { validate_invocations(cat_meta(), open); }) ==
        ErrorCode::registry_not_finalized);
}
