#pragma once

// Reader for the loose, Python-flavoured literal notation that language
// models and hand-written fixtures tend to produce:
//
//   [("text-to-image", 'A photo of a cat'), ]
//   {"instruction": ["...", "cat_meowing.wav", ] "invocation": [...]}
//
// Strings take single or double quotes. Lists and tuples require commas
// between elements but tolerate a trailing one. Object members may omit the
// separating comma.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace polymodal::relaxed {

struct Literal {
  enum class Kind { string, list, tuple, object, number, boolean, null };

  Kind kind = Kind::null;
  std::string text;  // string payload, or the number's source spelling
  bool flag = false;
  std::vector<Literal> items;
  std::vector<std::pair<std::string, Literal>> members;

  const Literal* find(std::string_view key) const;
  bool is_string() const { return kind == Kind::string; }
  bool is_sequence() const { return kind == Kind::list || kind == Kind::tuple; }
};

/// Parses one value starting at `pos` (leading whitespace skipped). On
/// success `pos` is left just past the value; on failure it is unchanged.
std::optional<Literal> parse_value(std::string_view src, std::size_t& pos);

/// Parses a quoted string starting exactly at `pos`.
std::optional<std::string> parse_quoted(std::string_view src, std::size_t& pos);

/// Whole-input parse: a single value surrounded only by whitespace.
std::optional<Literal> parse_document(std::string_view src);

bool is_valid_utf8(std::string_view s);

}  // namespace polymodal::relaxed
