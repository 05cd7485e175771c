#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polymodal/chat_client.hpp"
#include "polymodal/cli.hpp"
#include "polymodal/common.hpp"
#include "polymodal/meta_protocol.hpp"
#include "polymodal/projection.hpp"

namespace test {

inline std::filesystem::path source_dir() { return POLYMODAL_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }
inline std::filesystem::path default_config() { return data_dir() / "config" / "default.json"; }
inline std::filesystem::path cat_wav() { return data_dir() / "samples" / "cat_meowing.wav"; }

inline const std::string kCatInstruction =
    "Generate an image of an animal based on the provided vocalization.";

// The dataset code block, verbatim (two lines, no comma between members).
inline const std::string kTupleFormBlock =
    "{\"instruction\": [\"Generate an image of an animal based on the provided vocalization.\", "
    "\"cat_meowing.wav\", ]\n"
    "\"invocation\": [(\"text-to-image\", \"A photo of a cat\"), ]}";

/// Fresh, empty directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(POLYMODAL_BINARY_DIR) / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

/// Every regular file under `dir` as (relative path, bytes), sorted.
inline std::vector<std::pair<std::string, std::string>> snapshot(const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out.emplace_back(std::filesystem::relative(e.path(), dir).generic_string(), read_text(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

inline CliRun cli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  CliRun r;
  r.code = polymodal::run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Transport that counts calls and answers from a script.
class CountingTransport final : public polymodal::ChatTransport {
 public:
  std::vector<polymodal::HttpResponse> script;
  std::atomic<int> calls{0};
  std::string last_token;
  std::string last_body;

  polymodal::HttpResponse post(const std::string&, const std::string& body,
                               const std::string& token, std::chrono::milliseconds) override {
    const int i = calls++;
    last_token = token;
    last_body = body;
    if (script.empty()) return {200, completion_body("")};
    return script[std::min<std::size_t>(static_cast<std::size_t>(i), script.size() - 1)];
  }

  static std::string completion_body(const std::string& content) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}});
    return j.dump();
  }
};

// ---------------------------------------------------------------------------
// Random meta-responses for property tests.

inline std::string random_utf8(polymodal::SplitMix64& rng, std::size_t max_len) {
  static const std::vector<std::string> pieces{
      "a", "Z", "7", " ", "\"", "\\", "\n", "\t", "{", "}", "[", "(", ")", ",", "'", "/",
      "é", "ß", "中", "猫", "🙂", "\x01", "\x7f", "text-to-image", "null"};
  std::string s;
  const std::size_t n = rng.below(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
  return s;
}

inline polymodal::MetaResponse random_meta(polymodal::SplitMix64& rng) {
  static const std::vector<std::string> kinds{"text-to-image", "text-to-audio", "text-to-video"};
  polymodal::MetaResponse m;
  m.text = random_utf8(rng, 12);
  const std::size_t n = rng.below(5);
  for (std::size_t i = 0; i < n; ++i) {
    std::string prompt = random_utf8(rng, 10);
    if (prompt.empty()) prompt = "p";
    m.invocations.push_back({kinds[rng.below(kinds.size())], prompt});
  }
  if (m.text.empty() && m.invocations.empty()) m.text = "t";
  return m;
}

// ---------------------------------------------------------------------------
// Loop-based oracles that never call an Eigen product.

inline std::vector<double> matvec(const Eigen::MatrixXd& m, const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(m.rows()), 0.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) y[r] += m(r, c) * x[c];
  return y;
}

inline std::vector<double> as_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

/// Tokens after projection and LoRA for one sample, k rows of d values.
inline std::vector<std::vector<double>> oracle_forward(const polymodal::ProjectionStack<double>& s,
                                                       const polymodal::EmbeddingVector& e) {
  const auto& p = s.projection_for(e.modality);
  const Eigen::Index d = p.d_llm();
  const auto x = as_vec(e.values);
  const double scale = s.lora.alpha / static_cast<double>(s.lora.down.rows());
  std::vector<std::vector<double>> rows;
  for (Eigen::Index j = 0; j < p.token_count; ++j) {
    std::vector<double> t(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < p.weight.cols(); ++c) t[r] += p.weight(j * d + r, c) * x[c];
      if (p.has_bias()) t[r] += p.bias(j * d + r);
    }
    auto base = matvec(s.lora.base, t);
    auto h = matvec(s.lora.down, t);
    auto delta = matvec(s.lora.up, h);
    for (Eigen::Index r = 0; r < d; ++r) base[r] += scale * delta[r];
    rows.push_back(std::move(base));
  }
  return rows;
}

inline double oracle_loss(const polymodal::ProjectionStack<double>& s,
                          const std::vector<polymodal::AlignmentSample<double>>& batch) {
  double total = 0.0;
  for (const auto& sample : batch) {
    const auto rows = oracle_forward(s, sample.embedding);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < rows.size(); ++j)
      for (std::size_t r = 0; r < rows[j].size(); ++r, ++n) {
        const double diff = rows[j][r] - sample.target(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r));
        sq += diff * diff;
      }
    total += sq / static_cast<double>(n);
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace test
