// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>

#include <json.hpp>

#include "polymodal/app_config.hpp"
#include "polymodal/gradcheck.hpp"
#include "polymodal/instruct_gen.hpp"
#include "polymodal/pipeline.hpp"
#include "support.hpp"

using namespace polymodal;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

class CountingBackend final : public LanguageBackend {
 public:
  explicit CountingBackend(std::string meta) : meta_(std::move(meta)) {}
  std::string respond(const BackendQuery&) const override {
    ++calls;
    return meta_;
  }
  mutable int calls = 0;

 private:
  std::string meta_;
};

std::string mutate(SplitMix64& rng, std::string s) {
  static const std::string alphabet = "{}[]()\",:\\ 'atx-\n\xc3\xa9\xff\x00";
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

// 1
Outcome worked_example() {
  Outcome o;
  const auto reg = make_default_registry();
  const auto backend = ScriptedBackend::from_file(test::data_dir() / "rules" / "scripted_rules.json");
  UserRequest req{test::kCatInstruction, {{test::cat_wav().string(), Modality::audio}}};
  auto res = run(req, PipelineConfig{}, reg, backend, test::scratch("acc_1"), 7);
  o.require(res.trace.meta.invocations == std::vector<Invocation>{{"text-to-image", "A photo of a cat"}},
            "invocation list differs");
  o.require(res.response.artifacts.size() == 1, "expected one artifact");
  if (o.ok) {
    const auto& a = res.response.artifacts[0];
    o.require(a.modality == Modality::image && a.path.extension() == ".ppm", "artifact is not a PPM image");
    const auto bytes = test::read_text(a.path);
    o.require(bytes.rfind("P6\n64 64\n255\n", 0) == 0, "PPM header");
  }
  o.require(res.response.failures.empty() && !res.degraded(), "run reported failures");
  return o;
}

// 2
Outcome round_trip_fuzz() {
  Outcome o;
  SplitMix64 rng(2);
  for (int i = 0; i < 10000 && o.ok; ++i) {
    const auto m = test::random_meta(rng);
    const auto wire = serialize_meta_response(m);
    const auto back = parse_meta_response(wire, ParseMode::strict);
    o.require(back.meta == m, "round trip differs at case " + std::to_string(i));
    o.require(serialize_meta_response(back.meta) == wire, "re-serialization differs at case " + std::to_string(i));
  }
  int recovered = 0;
  for (int i = 0; i < 10000 && o.ok; ++i) {
    const auto input = mutate(rng, serialize_meta_response(test::random_meta(rng)));
    for (auto mode : {ParseMode::strict, ParseMode::lenient}) {
      try {
        parse_meta_response(input, mode);
        ++recovered;
      } catch (const Error&) {
      } catch (const std::exception& e) {
        o.require(false, std::string("foreign exception: ") + e.what());
      }
    }
  }
  o.detail = o.ok ? std::to_string(recovered) + " mutated parses recovered" : o.detail;
  return o;
}

// 3
Outcome lenient_compat() {
  Outcome o;
  const auto canonical =
      parse_meta_response(R"({"text":"","invocations":[{"model":"text-to-image","prompt":"A photo of a cat"}]})",
                          ParseMode::strict);
  const auto tuple = parse_meta_response(R"([("text-to-image", "A photo of a cat"), ])", ParseMode::lenient);
  const auto block = parse_meta_response(test::kTupleFormBlock, ParseMode::lenient);
  o.require(tuple.meta == canonical.meta, "tuple list differs from canonical");
  o.require(block.meta.invocations == canonical.meta.invocations, "dataset block invocations differ");
  o.require(!tuple.diagnostics.warnings.empty(), "tuple recovery emitted no warning");
  return o;
}

// 4
Outcome gradients() {
  Outcome o;
  GradcheckOptions opts;  // d_enc <= 8, d_llm <= 8, r <= 3
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_gradcheck_instance(seed, opts);
    for (const auto& p : inst.stack.projections)
      o.require(p.d_enc() <= 8 && p.d_llm() <= 8, "instance outside the size bounds");
    o.require(inst.stack.lora.down.rows() <= 3, "rank above 3");
    const auto r = gradcheck(inst.stack, std::span<const AlignmentSample<double>>(inst.batch), opts);
    worst = std::max(worst, r.max_rel_error);
  }
  o.require(worst < 1e-4, "max relative error " + std::to_string(worst));
  if (o.ok) o.detail = "max relative error " + std::to_string(worst);
  return o;
}

// 5
Outcome lora_transparency() {
  Outcome o;
  SplitMix64 rng(5);
  auto gauss = [&](Index r, Index c) {
    Eigen::MatrixXd m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    return m;
  };
  LoraAdaptor<double> l{gauss(8, 8), gauss(3, 8), Eigen::MatrixXd::Zero(8, 3), 6.0};
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = gauss(8, 1);
    const Eigen::VectorXd base = l.base * x;
    const Eigen::VectorXd adapted = lora_forward(l, x);
    o.require(std::memcmp(base.data(), adapted.data(), sizeof(double) * 8) == 0, "forward differs at input " + std::to_string(i));
  }
  auto cfg = toy_train_config();
  const auto data = make_toy_dataset<double>(cfg, 4, cfg.seed);
  auto stack = init_stack<double>(cfg);
  stack.lora.up.setZero();
  const auto g = backward(stack, std::span<const AlignmentSample<double>>(data));
  o.require(g.loss > 0, "degenerate batch");
  o.require(g.down.isZero(0), "dL/dA is not exactly zero");
  return o;
}

// 6
Outcome toy_training() {
  Outcome o;
  const auto cfg = toy_train_config();
  o.require(cfg.seed == 7 && cfg.steps == 200 && cfg.learning_rate == 0.05, "toy config drifted");
  const auto data = make_toy_dataset<double>(cfg, 4, cfg.seed);
  const auto a = train_toy<double>(cfg, data);
  const auto b = train_toy<double>(cfg, data);
  o.require(a.last() < 0.1 * a.initial(), "final loss not below 0.1x initial");
  o.require(a.loss == b.loss, "traces differ between runs");
  if (o.ok) o.detail = "loss " + std::to_string(a.initial()) + " -> " + std::to_string(a.last());
  return o;
}

// 7
Outcome parameter_accounting() {
  Outcome o;
  SplitMix64 rng(7);
  for (int t = 0; t < 10; ++t) {
    TrainConfig c;
    for (auto& d : c.d_enc) d = 1 + static_cast<Index>(rng.below(12));
    c.d_llm = 1 + static_cast<Index>(rng.below(12));
    c.rank = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(c.d_llm)));
    c.tokens_per_modality = 1 + static_cast<Index>(rng.below(4));
    c.bias = rng.below(2) == 1;
    auto stack = init_stack<double>(c);
    auto gauss = [&](Index r, Index cols) {
      Matrix<double> m(r, cols);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
      return m;
    };
    stack.lora.up = gauss(c.d_llm, c.rank);
    std::vector<AlignmentSample<double>> batch;
    for (auto m : kInputModalities) {
      const Eigen::VectorXd x = gauss(c.d_enc[modality_slot(m)], 1).col(0);
      batch.push_back({make_embedding(m, x.normalized()), gauss(c.tokens_per_modality, c.d_llm)});
    }
    const auto g = backward(stack, std::span<const AlignmentSample<double>>(batch));
    // instrumented: scalars whose gradient is actually non-zero
    std::size_t receiving = 0;
    auto tally = [&](const Matrix<double>& m) {
      for (Index i = 0; i < m.size(); ++i) receiving += m.data()[i] != 0.0;
    };
    for (std::size_t m = 0; m < 3; ++m) {
      tally(g.weight[m]);
      if (c.bias) tally(g.bias[m]);
    }
    tally(g.down);
    tally(g.up);
    o.require(param_count(c).total == receiving, "count mismatch on config " + std::to_string(t));
  }
  const auto r = test::cli({"params", "--d-enc", "1024", "--d-llm", "4096", "--tokens", "1", "--rank", "32",
                            "--no-bias"});
  o.require(r.code == 0 && r.out.find("12,845,056") != std::string::npos, "CLI did not print 12,845,056");
  return o;
}

// 8
Outcome routing_conservation() {
  Outcome o;
  std::atomic<int> calls{0};
  ModelRegistry reg;
  for (auto [name, kind, m] : {std::tuple{"img", "text-to-image", Modality::image},
                               std::tuple{"aud", "text-to-audio", Modality::audio},
                               std::tuple{"vid", "text-to-video", Modality::video}})
    reg.register_model({name, kind, m, 0}, [&calls](const GenerationRequest& r) {
      ++calls;
      mock_executor()(r);
    });
  reg.finalize();
  SplitMix64 rng(8);
  const auto root = test::scratch("acc_8");
  for (int i = 0; i < 1000 && o.ok; ++i) {
    const auto m = test::random_meta(rng);
    calls = 0;
    const auto a = root / "a";
    const auto b = root / "b";
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    execute_plan(route(m, reg), a, static_cast<std::uint64_t>(i));
    o.require(calls == static_cast<int>(m.invocations.size()), "call count differs at case " + std::to_string(i));
    auto manifest = nlohmann::json::parse(test::read_text(a / "manifest.json"));
    o.require(manifest["artifacts"].size() == m.invocations.size(), "manifest length at case " + std::to_string(i));
    for (std::size_t j = 0; j < m.invocations.size() && o.ok; ++j)
      o.require(manifest["artifacts"][j]["prompt"] == m.invocations[j].prompt &&
                    manifest["artifacts"][j]["kind"] == m.invocations[j].model,
                "manifest order at case " + std::to_string(i));
    execute_plan(route(m, reg), b, static_cast<std::uint64_t>(i));
    o.require(test::snapshot(a) == test::snapshot(b), "rerun not byte-identical at case " + std::to_string(i));
  }
  return o;
}

// 9
Outcome instruction_generation() {
  Outcome o;
  const auto cfg = load_app_config(test::default_config());
  const auto reg = build_registry(cfg);
  const auto candidates = load_candidates(cfg.instruct.candidates);
  const auto pairs = template_generate(candidates, cfg.instruct.type_mix, cfg.seed, 10000);
  o.require(pairs.size() == 10000, "pair count");
  std::map<InstructionType, std::size_t> counts;
  for (const auto& p : pairs) {
    if (!validate_pair(p, reg).empty()) {
      o.require(false, "pair " + p.id + " failed validation");
      break;
    }
    ++counts[p.type];
  }
  for (const auto& [type, share] : cfg.instruct.type_mix) {
    const double freq = static_cast<double>(counts[type]) / static_cast<double>(pairs.size());
    o.require(std::abs(freq - share) <= 0.02,
              std::string(to_string(type)) + " frequency " + std::to_string(freq));
  }

  const auto seeds = read_dataset(cfg.instruct.seeds, ParseMode::lenient);
  const auto refs = load_references(cfg.instruct.references);
  const auto bundle = sample_bundle(seeds, candidates, refs, cfg.instruct.bundle, cfg.seed);
  auto transport = std::make_shared<test::CountingTransport>();
  ChatClient client(cfg.chat, transport);
  const auto result = generate_pairs_llm(client, bundle, 5, reg);
  o.require(cfg.chat.mode == ChatMode::replay, "shipped config is not in replay mode");
  o.require(result.pairs.size() == 5, "replay produced " + std::to_string(result.pairs.size()) + " pairs");
  o.require(transport->calls == 0, "transport was called in replay mode");
  return o;
}

// 10
Outcome failure_contract() {
  Outcome o;
  const auto reg = make_default_registry();
  const auto root = test::scratch("acc_10");
  CountingBackend backend(R"({"text":"Here it is.","invocations":[{"model":"text-to-hologram","prompt":"a cat"}]})");
  try {
    run({"", {{test::cat_wav().string(), Modality::audio}}}, PipelineConfig{}, reg, backend, root / "empty", 7);
    o.require(false, "empty instruction accepted");
  } catch (const Error& e) {
    o.require(e.code() == ErrorCode::instruction_required, "wrong error for empty instruction");
  }
  o.require(backend.calls == 0 && !std::filesystem::exists(root / "empty"), "a stage ran for an empty instruction");

  const auto res = run({"show me a hologram", {}}, PipelineConfig{}, reg, backend, root / "degraded", 7);
  o.require(res.degraded(), "not degraded");
  o.require(res.response.artifacts.empty() && res.response.text == "Here it is.", "degraded response is not text only");
  o.require(res.diagnostics.size() == 1 && res.diagnostics[0].code == ErrorCode::unknown_model_kind,
            "diagnostics missing UnknownModelKind");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double limit_s;  // 0: no time limit
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "worked example yields the cat invocation and one image", 1, worked_example},
      {2, "meta-protocol round trip and mutation robustness", 30, round_trip_fuzz},
      {3, "tuple form equals canonical JSON", 0, lenient_compat},
      {4, "analytic gradients match central differences", 10, gradients},
      {5, "LoRA with B = 0 is transparent", 0, lora_transparency},
      {6, "toy training converges deterministically", 10, toy_training},
      {7, "parameter accounting", 0, parameter_accounting},
      {8, "routing and execution conservation", 30, routing_conservation},
      {9, "instruction generation", 60, instruction_generation},
      {10, "failure-case contract", 0, failure_contract},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (o.ok && c.limit_s > 0 && secs >= c.limit_s) {
      o.ok = false;
      o.detail = "took " + std::to_string(secs) + " s, limit " + std::to_string(c.limit_s) + " s";
    }
    failed += !o.ok;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3f s", secs);
    std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " (" << timing << ")";
    if (!o.detail.empty()) std::cout << " - " << o.detail;
    std::cout << '\n';
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
