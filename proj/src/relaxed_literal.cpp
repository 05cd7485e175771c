#include "polymodal/relaxed_literal.hpp"

#include <cctype>
#include <cstdint>

namespace polymodal::relaxed {
namespace {

constexpr int kMaxDepth = 64;

void skip_ws(std::string_view s, std::size_t& pos) {
  while (pos < s.size() &&
         (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r'))
    ++pos;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xc0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    out += static_cast<char>(0xf0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  }
}

std::optional<std::uint32_t> read_hex4(std::string_view s, std::size_t pos) {
  if (pos + 4 > s.size()) return std::nullopt;
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    char c = s[pos + i];
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint32_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint32_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint32_t>(c - 'A' + 10);
    else return std::nullopt;
  }
  return v;
}

std::optional<Literal> parse_at(std::string_view s, std::size_t& pos, int depth);

// Parses `open elem (, elem)* [,] close`; for objects, members are
// `key : value` and the comma is optional.
std::optional<Literal> parse_container(std::string_view s, std::size_t& pos,
                                       int depth, Literal::Kind kind,
                                       char close) {
  Literal lit;
  lit.kind = kind;
  std::size_t p = pos + 1;
  bool need_sep = false;
  for (;;) {
    skip_ws(s, p);
    if (p >= s.size()) return std::nullopt;
    if (s[p] == close) {
      ++p;
      break;
    }
    if (s[p] == ',') {
      if (!need_sep) return std::nullopt;  // leading or doubled comma
      ++p;
      need_sep = false;
      continue;
    }
    if (need_sep && kind != Literal::Kind::object) return std::nullopt;

    if (kind == Literal::Kind::object) {
      if (s[p] != '"' && s[p] != '\'') return std::nullopt;
      auto key = parse_quoted(s, p);
      if (!key) return std::nullopt;
      skip_ws(s, p);
      if (p >= s.size() || s[p] != ':') return std::nullopt;
      ++p;
      auto value = parse_at(s, p, depth + 1);
      if (!value) return std::nullopt;
      lit.members.emplace_back(std::move(*key), std::move(*value));
    } else {
      auto value = parse_at(s, p, depth + 1);
      if (!value) return std::nullopt;
      lit.items.push_back(std::move(*value));
    }
    need_sep = true;
  }
  pos = p;
  return lit;
}

std::optional<Literal> parse_number(std::string_view s, std::size_t& pos) {
  std::size_t p = pos;
  if (p < s.size() && (s[p] == '-' || s[p] == '+')) ++p;
  std::size_t digits_start = p;
  while (p < s.size() && (std::isdigit(static_cast<unsigned char>(s[p])) ||
                          s[p] == '.' || s[p] == 'e' || s[p] == 'E' ||
                          ((s[p] == '-' || s[p] == '+') &&
                           (s[p - 1] == 'e' || s[p - 1] == 'E'))))
    ++p;
  if (p == digits_start) return std::nullopt;
  Literal lit;
  lit.kind = Literal::Kind::number;
  lit.text = std::string(s.substr(pos, p - pos));
  pos = p;
  return lit;
}

std::optional<Literal> parse_word(std::string_view s, std::size_t& pos) {
  struct Word {
    std::string_view spelling;
    Literal::Kind kind;
    bool flag;
  };
  static constexpr Word words[] = {
      {"true", Literal::Kind::boolean, true},
      {"True", Literal::Kind::boolean, true},
      {"false", Literal::Kind::boolean, false},
      {"False", Literal::Kind::boolean, false},
      {"null", Literal::Kind::null, false},
      {"None", Literal::Kind::null, false},
  };
  for (const auto& w : words) {
    if (s.substr(pos).starts_with(w.spelling)) {
      std::size_t end = pos + w.spelling.size();
      if (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) ||
                             s[end] == '_'))
        continue;
      Literal lit;
      lit.kind = w.kind;
      lit.flag = w.flag;
      pos = end;
      return lit;
    }
  }
  return std::nullopt;
}

std::optional<Literal> parse_at(std::string_view s, std::size_t& pos,
                                int depth) {
  if (depth > kMaxDepth) return std::nullopt;
  std::size_t p = pos;
  skip_ws(s, p);
  if (p >= s.size()) return std::nullopt;

  std::optional<Literal> out;
  switch (s[p]) {
    case '"':
    case '\'': {
      auto str = parse_quoted(s, p);
      if (!str) return std::nullopt;
      out.emplace();
      out->kind = Literal::Kind::string;
      out->text = std::move(*str);
      break;
    }
    case '[': out = parse_container(s, p, depth, Literal::Kind::list, ']'); break;
    case '(': out = parse_container(s, p, depth, Literal::Kind::tuple, ')'); break;
    case '{': out = parse_container(s, p, depth, Literal::Kind::object, '}'); break;
    default:
      out = parse_word(s, p);
      if (!out) out = parse_number(s, p);
  }
  if (out) pos = p;
  return out;
}

}  // namespace

const Literal* Literal::find(std::string_view key) const {
  for (const auto& [k, v] : members)
    if (k == key) return &v;
  return nullptr;
}

std::optional<std::string> parse_quoted(std::string_view s, std::size_t& pos) {
  if (pos >= s.size() || (s[pos] != '"' && s[pos] != '\'')) return std::nullopt;
  const char quote = s[pos];
  std::string out;
  std::size_t p = pos + 1;
  while (p < s.size()) {
    char c = s[p];
    if (c == quote) {
      pos = p + 1;
      return out;
    }
    if (c == '\n' || c == '\r') return std::nullopt;
    if (c != '\\') {
      out += c;
      ++p;
      continue;
    }
    if (++p >= s.size()) return std::nullopt;
    switch (s[p]) {
      case '\\': out += '\\'; break;
      case '\'': out += '\''; break;
      case '"': out += '"'; break;
      case '/': out += '/'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      case 'u': {
        auto cp = read_hex4(s, p + 1);
        if (!cp) return std::nullopt;
        p += 4;
        if (*cp >= 0xd800 && *cp <= 0xdbff) {
          if (p + 2 >= s.size() || s[p + 1] != '\\' || s[p + 2] != 'u')
            return std::nullopt;
          auto lo = read_hex4(s, p + 3);
          if (!lo || *lo < 0xdc00 || *lo > 0xdfff) return std::nullopt;
          *cp = 0x10000 + ((*cp - 0xd800) << 10) + (*lo - 0xdc00);
          p += 6;
        } else if (*cp >= 0xdc00 && *cp <= 0xdfff) {
          return std::nullopt;
        }
        append_utf8(out, *cp);
        break;
      }
      default: return std::nullopt;
    }
    ++p;
  }
  return std::nullopt;
}

std::optional<Literal> parse_value(std::string_view src, std::size_t& pos) {
  return parse_at(src, pos, 0);
}

std::optional<Literal> parse_document(std::string_view src) {
  std::size_t pos = 0;
  auto lit = parse_at(src, pos, 0);
  if (!lit) return std::nullopt;
  skip_ws(src, pos);
  if (pos != src.size()) return std::nullopt;
  return lit;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
        (len == 4 && cp < 0x10000) || cp > 0x10ffff ||
        (cp >= 0xd800 && cp <= 0xdfff))
      return false;
    i += len;
  }
  return true;
}

}  // namespace polymodal::relaxed
