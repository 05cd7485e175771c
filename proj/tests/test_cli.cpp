#include <doctest.h>

#include <json.hpp>

#include "polymodal/app_config.hpp"
#include "polymodal/cli.hpp"
#include "polymodal/instruct_gen.hpp"
#include "support.hpp"

using namespace polymodal;

namespace {

std::string cfg() { return test::default_config().string(); }

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("with_thousands") {
  CHECK(with_thousands(0) == "0");
  CHECK(with_thousands(999) == "999");
  CHECK(with_thousands(6656) == "6,656");
  CHECK(with_thousands(12845056) == "12,845,056");
  CHECK(with_thousands(-1000) == "-1,000");
}

TEST_CASE("usage errors exit 2") {
  CHECK(test::cli({}).code == kExitUsage);
  CHECK(test::cli({"no-such-command"}).code == kExitUsage);
  CHECK(test::cli({"parse-meta", "--mode", "sloppy"}).code == kExitUsage);
}

TEST_CASE("parse-meta") {
  auto r = test::cli({"parse-meta", "--mode", "lenient"}, R"([("text-to-image", "A photo of a cat")])");
  CHECK(r.code == kExitOk);
  CHECK(r.out == R"({"text":"","invocations":[{"model":"text-to-image","prompt":"A photo of a cat"}]})" "\n");

  r = test::cli({"parse-meta"}, "");
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "EmptyMeta"));

  const std::string canonical = R"({"text":"hi","invocations":[{"model":"text-to-audio","prompt":"rain"}]})";
  r = test::cli({"parse-meta", "--mode", "strict"}, canonical);
  CHECK(r.code == kExitOk);
  CHECK(r.out == canonical + "\n");
  auto again = test::cli({"parse-meta"}, r.out);
  CHECK(again.out == r.out);

  r = test::cli({"parse-meta"}, "Hello, how can I help?");
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "MalformedMeta"));

  const auto dir = test::scratch("cli_parse_file");
  test::write_text(dir / "m.txt", test::kTupleFormBlock);
  r = test::cli({"parse-meta", "--mode", "lenient", "--file", (dir / "m.txt").string()});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "A photo of a cat"));
}

TEST_CASE("generate-instructions template mode") {
  const auto dir = test::scratch("cli_gen");
  const auto a = (dir / "a.jsonl").string();
  const auto b = (dir / "b.jsonl").string();
  auto r = test::cli({"generate-instructions", "--config", cfg(), "--n", "100", "--seed", "7", "--out", a});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "pairs 100"));
  test::cli({"generate-instructions", "--config", cfg(), "--n", "100", "--seed", "7", "--out", b});
  CHECK(test::read_text(a) == test::read_text(b));
  CHECK(count_lines(test::read_text(a)) == 100);

  CHECK(test::cli({"generate-instructions", "--config", cfg(), "--n", "0", "--out", a}).code == kExitUsage);

  r = test::cli({"validate-dataset", "--in", a, "--config", cfg()});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "line 100: ok"));
}

TEST_CASE("generate-instructions llm mode counts the fixture's valid lines") {
  // The shipped fixture answers two requests with 5 valid pairs and 3 malformed lines.
  const auto out = test::scratch("cli_llm") / "llm.jsonl";
  auto r = test::cli({"generate-instructions", "--config", cfg(), "--mode", "llm", "--n", "50", "--out",
                      out.string()});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "pairs 5"));
  CHECK(contains(r.out, "rejects 3"));
  CHECK(count_lines(test::read_text(out)) == 5);

  r = test::cli({"generate-instructions", "--config", cfg(), "--mode", "llm", "--n", "2", "--out",
                 out.string()});
  CHECK(r.code == kExitOk);
  CHECK(count_lines(test::read_text(out)) == 2);
}

TEST_CASE("validate-dataset") {
  const auto dir = test::scratch("cli_validate");
  const auto seeds = test::read_text(test::data_dir() / "instruct" / "seeds.jsonl");
  test::write_text(dir / "good.jsonl", seeds);
  CHECK(test::cli({"validate-dataset", "--in", (dir / "good.jsonl").string()}).code == kExitOk);

  auto lines = seeds;
  const auto second = lines.find('\n') + 1;
  lines.insert(second, "{\"id\":\"broken\"}\n");
  test::write_text(dir / "bad.jsonl", lines);
  auto r = test::cli({"validate-dataset", "--in", (dir / "bad.jsonl").string()});
  CHECK(r.code == kExitCheckFailed);
  CHECK(contains(r.out, "line 2: MalformedLine"));
  CHECK(contains(r.out, "line 1: ok"));

  const auto tuple_form = (test::data_dir() / "instruct" / "seed_tuple_form.jsonl").string();
  CHECK(test::cli({"validate-dataset", "--in", tuple_form, "--mode", "lenient"}).code == kExitOk);
  CHECK(test::cli({"validate-dataset", "--in", tuple_form, "--mode", "strict"}).code == kExitCheckFailed);

  CHECK(test::cli({"validate-dataset", "--in", (dir / "absent.jsonl").string()}).code == kExitUsage);
}

TEST_CASE("run") {
  const auto ws = test::scratch("cli_run");
  auto r = test::cli({"run", "--config", cfg(), "--instruction", test::kCatInstruction, "--attach",
                      test::cat_wav().string() + ":audio", "--workspace", ws.string()});
  CHECK(r.code == kExitOk);
  auto manifest = nlohmann::json::parse(r.out);
  REQUIRE(manifest["artifacts"].size() == 1);
  CHECK(manifest["artifacts"][0]["kind"] == "text-to-image");
  CHECK(manifest["artifacts"][0]["prompt"] == "A photo of a cat");

  // modality inferred from the extension
  r = test::cli({"run", "--config", cfg(), "--instruction", test::kCatInstruction, "--attach",
                 test::cat_wav().string(), "--workspace", ws.string()});
  CHECK(r.code == kExitOk);

  r = test::cli({"run", "--config", cfg(), "--instruction", test::kCatInstruction, "--attach",
                 (ws / "nope.wav").string() + ":audio", "--workspace", ws.string()});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "AttachmentMissing"));

  r = test::cli({"run", "--config", cfg(), "--instruction", "", "--workspace", ws.string()});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "InstructionRequired"));
}

TEST_CASE("gradcheck") {
  auto r = test::cli({"gradcheck", "--config", cfg(), "--trials", "5"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "PASS"));
  r = test::cli({"gradcheck", "--trials", "5", "--inject-fault"});
  CHECK(r.code == kExitCheckFailed);
  CHECK(contains(r.out, "FAIL"));
  CHECK(test::cli({"gradcheck", "--trials", "0"}).code == kExitUsage);
}

TEST_CASE("params") {
  auto r = test::cli({"params", "--config", cfg()});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "6656"));

  r = test::cli({"params", "--config", (test::data_dir() / "config" / "full_scale.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "12,845,056"));

  r = test::cli({"params", "--d-enc", "1024", "--d-llm", "4096", "--tokens", "1", "--rank", "32", "--no-bias"});
  CHECK(contains(r.out, "12,845,056"));

  r = test::cli({"params", "--d-llm", "4", "--rank", "8"});
  CHECK(r.code == kExitUsage);
  CHECK(r.out.empty());
}

TEST_CASE("fixture-add records a completion for the next replay") {
  const auto dir = test::scratch("cli_fixture");
  auto doc = nlohmann::json::parse(test::read_text(test::default_config()));
  for (const char* k : {"seeds", "candidates", "references"})
    doc["instruct"][k] = (test::data_dir() / "instruct" / doc["instruct"][k].get<std::string>().substr(12)).string();
  doc["language_backend"]["rules"] = (test::data_dir() / "rules" / "scripted_rules.json").string();
  doc["workspace"] = (dir / "ws").string();
  doc["chat"]["fixture"] = (dir / "fx.json").string();
  test::write_text(dir / "fx.json", R"({"responses":{}})");
  test::write_text(dir / "cfg.json", doc.dump());

  const auto seeds = test::read_text(test::data_dir() / "instruct" / "seeds.jsonl");
  const auto first = seeds.substr(0, seeds.find('\n'));
  auto r = test::cli({"fixture-add", "--config", (dir / "cfg.json").string()}, first);
  CHECK(r.code == kExitOk);

  r = test::cli({"generate-instructions", "--config", (dir / "cfg.json").string(), "--mode", "llm", "--n", "1",
                 "--out", (dir / "out.jsonl").string()});
  CHECK(r.code == kExitOk);
  CHECK(count_lines(test::read_text(dir / "out.jsonl")) == 1);
}

TEST_CASE("app config") {
  const auto base = test::data_dir() / "config";
  auto c = load_app_config(test::default_config());
  CHECK(c.seed == 7);
  CHECK(c.registry.size() == 3);
  CHECK(c.projection.d_llm == 64);
  CHECK(c.chat.mode == ChatMode::replay);
  CHECK(c.language_backend.rules == (base / "../rules/scripted_rules.json").lexically_normal());
  CHECK(build_registry(c).finalized());

  try {
    parse_app_config(R"({"seed": 1, "colour": "blue"})", base);
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config_error);
  }
  CHECK_THROWS_AS(parse_app_config(R"({"projection": {"rank": 0}})", base).validate(), Error);
  CHECK_THROWS_AS(parse_app_config("not json", base), Error);
  CHECK_THROWS_AS(load_app_config(base / "missing.json"), Error);

  auto k = parse_app_config(R"({"projection": {"d_enc": 16}, "language_backend": {"rules": "../rules/scripted_rules.json"}})", base);
  CHECK(k.projection.d_enc == std::array<Index, 3>{16, 16, 16});
}
