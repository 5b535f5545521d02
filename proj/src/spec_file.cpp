#include "sempipes/spec_file.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "sempipes/errors.hpp"

namespace sempipes {

namespace {

using json = nlohmann::json;

class TomlParser {
 public:
  explicit TomlParser(std::string_view s) : s_(s) {}

  json parse() {
    json root = json::object();
    json* current = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        current = header(root);
      } else {
        key_value(*current);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) {
      if (s_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("spec: " + what, line, col);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
        continue;
      }
      break;
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail(std::string("expected end of line, found '") + peek() + "'");
    ++pos_;
  }

  static bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string key_part() {
    skip_ws();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    const std::size_t b = pos_;
    while (!eof() && bare_key_char(peek())) ++pos_;
    if (b == pos_) fail("expected a key");
    return std::string(s_.substr(b, pos_ - b));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key_part()};
    skip_ws();
    while (peek() == '.') {
      ++pos_;
      parts.push_back(key_part());
      skip_ws();
    }
    return parts;
  }

  json* descend(json* at, const std::string& part, bool for_header) {
    json& slot = (*at)[part];
    if (slot.is_null()) slot = json::object();
    if (slot.is_array() && for_header) {
      if (slot.empty() || !slot.back().is_object()) fail("key '" + part + "' is not a table");
      return &slot.back();
    }
    if (!slot.is_object()) fail("key '" + part + "' is already a value");
    return &slot;
  }

  json* header(json& root) {
    ++pos_;
    const bool array = peek() == '[';
    if (array) ++pos_;
    auto parts = dotted_key();
    skip_ws();
    if (peek() != ']') fail("expected ']'");
    ++pos_;
    if (array) {
      if (peek() != ']') fail("expected ']]'");
      ++pos_;
    }
    json* at = &root;
    std::string path;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const json& parent = (*at)[parts[i]];
      path += parts[i] + "#" + std::to_string(parent.is_array() ? parent.size() : 0) + ".";
      at = descend(at, parts[i], true);
    }
    path += parts.back();
    json& slot = (*at)[parts.back()];
    if (array) {
      if (slot.is_null()) slot = json::array();
      if (!slot.is_array()) fail("'" + parts.back() + "' is not an array of tables");
      slot.push_back(json::object());
      return &slot.back();
    }
    if (slot.is_null()) slot = json::object();
    if (!slot.is_object()) fail("'" + parts.back() + "' is already a value");
    if (!defined_tables_.insert(path).second) fail("table '" + parts.back() + "' defined twice");
    return &slot;
  }

  void key_value(json& table) {
    auto parts = dotted_key();
    skip_ws();
    if (peek() != '=') fail("expected '=' after key");
    ++pos_;
    skip_ws();
    json* at = &table;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) at = descend(at, parts[i], false);
    if (at->contains(parts.back())) fail("duplicate key '" + parts.back() + "'");
    (*at)[parts.back()] = value();
  }

  json value() {
    const char c = peek();
    if (c == '"') {
      if (s_.substr(pos_, 3) == "\"\"\"") return multiline_basic();
      return basic_string();
    }
    if (c == '\'') {
      if (s_.substr(pos_, 3) == "'''") return multiline_literal();
      return literal_string();
    }
    if (c == '[') return array();
    if (c == '{') return inline_table();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  void escape(std::string& out) {
    if (eof()) fail("unterminated escape");
    const char e = s_[pos_++];
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      case '"': out.push_back('"'); break;
      case 'u': {
        if (pos_ + 4 > s_.size()) fail("short \\u escape");
        unsigned cp = 0;
        auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 4, cp, 16);
        if (ec != std::errc() || p != s_.data() + pos_ + 4) fail("bad \\u escape");
        pos_ += 4;
        if (cp < 0x80) {
          out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
          out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
          out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
          out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
          out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
          out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        break;
      }
      default: fail(std::string("unknown escape \\") + e);
    }
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c == '\\') escape(out);
      else out.push_back(c);
    }
  }

  std::string literal_string() {
    ++pos_;
    const std::size_t e = s_.find('\'', pos_);
    const std::size_t nl = s_.find('\n', pos_);
    if (e == std::string_view::npos || (nl != std::string_view::npos && nl < e)) fail("unterminated string");
    std::string out(s_.substr(pos_, e - pos_));
    pos_ = e + 1;
    return out;
  }

  std::string multiline_basic() {
    pos_ += 3;
    if (peek() == '\n') ++pos_;
    std::string out;
    while (true) {
      if (eof()) fail("unterminated multi-line string");
      if (s_.substr(pos_, 3) == "\"\"\"") {
        pos_ += 3;
        return out;
      }
      const char c = s_[pos_++];
      if (c == '\\') {
        if (peek() == '\n') {
          while (!eof() && (peek() == '\n' || peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
          continue;
        }
        escape(out);
      } else {
        out.push_back(c);
      }
    }
  }

  std::string multiline_literal() {
    pos_ += 3;
    if (peek() == '\n') ++pos_;
    const std::size_t e = s_.find("'''", pos_);
    if (e == std::string_view::npos) fail("unterminated multi-line string");
    std::string out(s_.substr(pos_, e - pos_));
    pos_ = e + 3;
    return out;
  }

  json number() {
    const std::size_t b = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                      peek() == '-' || peek() == '.' || peek() == '_'))
      ++pos_;
    std::string text;
    for (char c : s_.substr(b, pos_ - b))
      if (c != '_') text.push_back(c);
    if (text.empty()) fail("expected a value");
    const char* first = text.data() + (text[0] == '+' ? 1 : 0);
    const char* last = text.data() + text.size();
    const bool is_float = text.find_first_of(".eE") != std::string::npos || text == "inf" ||
                          text == "+inf" || text == "-inf" || text == "nan";
    if (is_float) {
      double v = 0;
      auto [p, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || p != last) fail("bad number '" + text + "'");
      return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) fail("bad value '" + text + "'");
    return v;
  }

  json array() {
    ++pos_;
    json out = json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json inline_table() {
    ++pos_;
    json out = json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return out;
    }
    while (true) {
      skip_ws();
      key_value(out);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return out;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::set<std::string> defined_tables_;
};

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json read_toml(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read spec file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

}  // namespace sempipes
