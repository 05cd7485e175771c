#include "polymodal/cli.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "polymodal/app_config.hpp"
#include "polymodal/gradcheck.hpp"
#include "polymodal/instruct_gen.hpp"
#include "polymodal/meta_protocol.hpp"
#include "polymodal/pipeline.hpp"

namespace polymodal {
namespace {

struct Streams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

std::string slurp(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  return slurp(in);
}

AppConfig config_or_default(const std::string& path) {
  return path.empty() ? AppConfig{} : load_app_config(path);
}

ParseMode parse_mode(const std::string& s) {
  if (s == "strict") return ParseMode::strict;
  if (s == "lenient") return ParseMode::lenient;
  throw Error(ErrorCode::invalid_argument, "mode must be strict or lenient");
}

QueryBundle config_bundle(const AppConfig& cfg, std::uint64_t seed) {
  const auto& d = cfg.instruct;
  if (d.seeds.empty() || d.candidates.empty())
    throw Error(ErrorCode::config_error, "instruct.seeds and instruct.candidates are required");
  const auto seeds = read_dataset(d.seeds, ParseMode::lenient);
  const auto candidates = load_candidates(d.candidates);
  const auto references = d.references.empty() ? std::vector<std::string>{}
                                                : load_references(d.references);
  return sample_bundle(seeds, candidates, references, d.bundle, seed);
}

// ---------------------------------------------------------------------------

struct ParseMetaArgs {
  std::string file;
  std::string mode = "strict";
};

int cmd_parse_meta(const ParseMetaArgs& a, Streams s) {
  const std::string raw = a.file.empty() || a.file == "-" ? slurp(s.in) : read_file(a.file);
  auto result = parse_meta_response(raw, parse_mode(a.mode));
  for (const auto& w : result.diagnostics.warnings)
    s.err << "warning: offset " << w.offset << ": " << w.message << '\n';
  s.out << serialize_meta_response(result.meta) << '\n';
  return kExitOk;
}

struct GenerateArgs {
  std::string config;
  std::size_t n = 0;
  std::string mode = "template";
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, Streams s) {
  if (a.n == 0) throw Error(ErrorCode::invalid_argument, "--n must be >= 1");
  if (a.mode != "template" && a.mode != "llm")
    throw Error(ErrorCode::invalid_argument, "--mode must be template or llm");
  const AppConfig cfg = config_or_default(a.config);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);

  std::vector<InstructionPair> pairs;
  std::size_t rejects = 0;
  if (a.mode == "template") {
    if (cfg.instruct.candidates.empty())
      throw Error(ErrorCode::config_error, "instruct.candidates is required");
    const auto candidates = load_candidates(cfg.instruct.candidates);
    pairs = template_generate(candidates, cfg.instruct.type_mix, seed, a.n);
  } else {
    const auto registry = build_registry(cfg);
    const auto bundle = config_bundle(cfg, seed);
    ChatClient client(cfg.chat);
    auto result = generate_pairs_llm(client, bundle, a.n, registry);
    for (const auto& r : result.rejects)
      s.err << "reject: request " << r.request << " line " << r.line << ": " << r.reason << '\n';
    if (result.exhausted)
      s.err << "note: replay fixture exhausted after " << result.requests << " request(s)\n";
    rejects = result.rejects.size();
    pairs = std::move(result.pairs);
  }
  write_dataset(pairs, a.out);

  std::map<InstructionType, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.type];
  s.out << "pairs " << pairs.size() << '\n';
  for (auto t : kInstructionTypes) s.out << to_string(t) << ' ' << counts[t] << '\n';
  s.out << "rejects " << rejects << '\n';
  return kExitOk;
}

struct ValidateArgs {
  std::string in;
  std::string mode = "strict";
  std::string config;
};

int cmd_validate_dataset(const ValidateArgs& a, Streams s) {
  const AppConfig cfg = config_or_default(a.config);
  const auto registry = build_registry(cfg);
  const auto reports = scan_dataset(a.in, parse_mode(a.mode));
  std::size_t bad = 0;
  for (const auto& r : reports) {
    if (!r.pair) {
      ++bad;
      s.out << "line " << r.line << ": " << r.error << '\n';
      continue;
    }
    auto issues = validate_pair(*r.pair, registry);
    if (issues.empty()) {
      s.out << "line " << r.line << ": ok\n";
      continue;
    }
    ++bad;
    for (const auto& is : issues)
      s.out << "line " << r.line << ": " << to_string(is.code) << ": " << is.message << '\n';
  }
  s.out << reports.size() << " pair(s), " << bad << " invalid\n";
  return bad == 0 ? kExitOk : kExitCheckFailed;
}

struct RunArgs {
  std::string config;
  std::string instruction;
  std::vector<std::string> attach;
  std::string workspace;
  std::optional<std::uint64_t> seed;
  bool timing = false;
};

Attachment parse_attach(const std::string& spec) {
  // path:modality, or a bare path whose extension names the modality.
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos) {
    if (auto m = modality_from_string(spec.substr(colon + 1))) return {spec.substr(0, colon), *m};
  }
  if (auto m = modality_from_extension(spec)) return {spec, *m};
  throw Error(ErrorCode::invalid_argument, "cannot tell the modality of --attach " + spec);
}

int cmd_run(const RunArgs& a, Streams s) {
  const AppConfig cfg = load_app_config(a.config);
  UserRequest req{a.instruction, {}};
  for (const auto& spec : a.attach) req.attachments.push_back(parse_attach(spec));
  validate_request(req);

  const auto registry = build_registry(cfg);
  std::unique_ptr<LanguageBackend> backend;
  if (cfg.language_backend.kind == "external")
    backend = std::make_unique<ExternalBackend>(std::make_shared<ChatClient>(cfg.chat));
  else
    backend = std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(cfg.language_backend.rules));

  PipelineConfig pcfg;
  pcfg.projection = cfg.projection;
  pcfg.record_timing = a.timing;
  const std::filesystem::path workspace = a.workspace.empty() ? cfg.workspace : std::filesystem::path(a.workspace);
  auto result = run(req, pcfg, registry, *backend, workspace, a.seed.value_or(cfg.seed));

  for (const auto& d : result.diagnostics)
    s.err << "degraded: invocation " << d.index << ": " << to_string(d.code) << ": " << d.message
          << '\n';
  for (const auto& f : result.response.failures)
    s.err << "backend failure: item " << f.index << " (" << f.model << "): " << f.cause << '\n';
  s.out << manifest_json(result.response, workspace) << '\n';
  return result.response.ok() ? kExitOk : kExitCheckFailed;
}

struct GradcheckArgs {
  std::string config;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a, Streams s) {
  const AppConfig cfg = config_or_default(a.config);
  const int trials = a.trials.value_or(cfg.gradcheck.trials);
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "--trials must be >= 1");
  auto options = cfg.gradcheck.options;
  options.inject_fault = a.inject_fault;
  const std::uint64_t seed = a.seed.value_or(cfg.seed);

  s.out << "trial  d_llm  rank  tokens  checked  max_rel_error\n";
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto inst = random_gradcheck_instance(mix64(seed, static_cast<std::uint64_t>(t)), options);
    auto report = gradcheck(inst.stack, inst.batch, options);
    worst = std::max(worst, report.max_rel_error);
    s.out << std::setw(5) << t << std::setw(7) << inst.stack.lora.dim() << std::setw(6)
          << inst.stack.lora.rank() << std::setw(8) << inst.stack.projections[0].token_count
          << std::setw(9) << report.checked << "  " << std::scientific << std::setprecision(3)
          << report.max_rel_error << std::defaultfloat << '\n';
  }
  const bool ok = worst < options.tolerance;
  s.out << "max relative error " << std::scientific << std::setprecision(3) << worst
        << " (tolerance " << options.tolerance << "): " << (ok ? "PASS" : "FAIL") << '\n'
        << std::defaultfloat;
  return ok ? kExitOk : kExitCheckFailed;
}

struct ParamsArgs {
  std::string config;
  std::optional<Index> d_enc;
  std::optional<Index> d_llm;
  std::optional<Index> tokens;
  std::optional<Index> rank;
  std::optional<bool> bias;
};

int cmd_params(const ParamsArgs& a, Streams s) {
  TrainConfig t = config_or_default(a.config).projection;
  if (a.d_enc) t.d_enc.fill(*a.d_enc);
  if (a.d_llm) t.d_llm = *a.d_llm;
  if (a.tokens) t.tokens_per_modality = *a.tokens;
  if (a.rank) t.rank = *a.rank;
  if (a.bias) t.bias = *a.bias;
  t.validate();
  const auto p = param_count(t);
  for (std::size_t m = 0; m < 3; ++m)
    s.out << std::left << std::setw(18) << (std::string(to_string(kInputModalities[m])) + ".projection")
          << p.projection[m] << '\n';
  s.out << std::setw(18) << "lora" << p.lora << '\n'
        << std::setw(18) << "total" << p.total << " (" << with_thousands(p.total) << ")\n"
        << std::right;
  return kExitOk;
}

struct FixtureAddArgs {
  std::string config;
  std::size_t request = 0;
  std::string content_file;
  std::optional<std::uint64_t> seed;
};

int cmd_fixture_add(const FixtureAddArgs& a, Streams s) {
  const AppConfig cfg = load_app_config(a.config);
  if (cfg.chat.fixture.empty()) throw Error(ErrorCode::config_error, "chat.fixture is not set");
  const auto bundle = config_bundle(cfg, a.seed.value_or(cfg.seed));
  const auto messages = generation_messages(bundle, a.request);
  const std::string key = request_key(chat_request_body(cfg.chat, messages));
  const std::string content =
      a.content_file.empty() || a.content_file == "-" ? slurp(s.in) : read_file(a.content_file);

  nlohmann::ordered_json body;
  body["choices"] = nlohmann::ordered_json::array();
  body["choices"].push_back(
      {{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}});
  auto fixture = ReplayFixture::load(cfg.chat.fixture);
  fixture->put(key, body.dump());
  fixture->save(cfg.chat.fixture);
  s.out << key << '\n';
  return kExitOk;
}

}  // namespace

std::string with_thousands(long long value) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return value < 0 ? "-" + out : out;
}

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Multi-modal instruction pipeline tools", "polymodal"};
  app.require_subcommand(1);
  Streams streams{in, out, err};
  std::function<int()> action;

  ParseMetaArgs pm;
  auto* parse_meta = app.add_subcommand("parse-meta", "Parse a meta-response into canonical JSON");
  parse_meta->add_option("--file", pm.file, "Input file (default stdin)");
  parse_meta->add_option("--mode", pm.mode, "strict|lenient")->check(CLI::IsMember({"strict", "lenient"}));
  parse_meta->callback([&] { action = [&] { return cmd_parse_meta(pm, streams); }; });

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate-instructions", "Build an instruction dataset");
  generate->add_option("--config", ga.config, "Config file");
  generate->add_option("--n", ga.n, "Number of pairs")->required();
  generate->add_option("--mode", ga.mode, "template|llm");
  generate->add_option("--out", ga.out, "Output JSONL")->required();
  generate->add_option("--seed", ga.seed, "Overrides the config seed");
  generate->callback([&] { action = [&] { return cmd_generate(ga, streams); }; });

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate-dataset", "Check every line of a JSONL dataset");
  validate->add_option("--in", va.in, "Dataset file")->required();
  validate->add_option("--mode", va.mode, "strict|lenient")->check(CLI::IsMember({"strict", "lenient"}));
  validate->add_option("--config", va.config, "Config file (model registry)");
  validate->callback([&] { action = [&] { return cmd_validate_dataset(va, streams); }; });

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Run one request through the pipeline");
  run_cmd->add_option("--config", ra.config, "Config file")->required();
  run_cmd->add_option("--instruction", ra.instruction, "User instruction")->required();
  run_cmd->add_option("--attach", ra.attach, "path[:modality], repeatable");
  run_cmd->add_option("--workspace", ra.workspace, "Output directory (overrides config)");
  run_cmd->add_option("--seed", ra.seed, "Overrides the config seed");
  run_cmd->add_flag("--timing", ra.timing, "Record stage timing in trace.json");
  run_cmd->callback([&] { action = [&] { return cmd_run(ra, streams); }; });

  GradcheckArgs gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  grad->add_option("--config", gc.config, "Config file");
  grad->add_option("--trials", gc.trials, "Random instances to check");
  grad->add_option("--seed", gc.seed, "Overrides the config seed");
  grad->add_flag("--inject-fault", gc.inject_fault)->group("");
  grad->callback([&] { action = [&] { return cmd_gradcheck(gc, streams); }; });

  ParamsArgs pa;
  auto* params = app.add_subcommand("params", "Count trainable parameters");
  params->add_option("--config", pa.config, "Config file");
  params->add_option("--d-enc", pa.d_enc, "Encoder width (all modalities)");
  params->add_option("--d-llm", pa.d_llm, "Language model width");
  params->add_option("--tokens", pa.tokens, "Tokens per modality");
  params->add_option("--rank", pa.rank, "LoRA rank");
  params->add_flag("--bias,!--no-bias", pa.bias, "Projection bias");
  params->callback([&] { action = [&] { return cmd_params(pa, streams); }; });

  FixtureAddArgs fa;
  auto* fixture = app.add_subcommand("fixture-add", "Record a canned completion for replay");
  fixture->add_option("--config", fa.config, "Config file")->required();
  fixture->add_option("--request", fa.request, "Request index within the run");
  fixture->add_option("--content", fa.content_file, "Completion text file (default stdin)");
  fixture->add_option("--seed", fa.seed, "Overrides the config seed");
  fixture->callback([&] { action = [&] { return cmd_fixture_add(fa, streams); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace polymodal
