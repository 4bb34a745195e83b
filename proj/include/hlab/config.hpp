#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hlab/errors.hpp"

namespace hlab {

/// Value tree for scenario configuration files.  The accepted syntax is a
/// strict subset of TOML: [table] and [[array-of-tables]] headers with dotted
/// paths, bare or quoted keys, string / number / boolean scalars, single-line
/// (possibly nested) arrays, and # comments.  Anything else is rejected with
/// a line and column.
class ConfigValue {
 public:
  enum class Type { string_v, number_v, boolean_v, array_v, table_v };

  ConfigValue() : type_(Type::table_v) {}

  static ConfigValue string_value(std::string s) {
    ConfigValue v;
    v.type_ = Type::string_v;
    v.str_ = std::move(s);
    return v;
  }
  static ConfigValue number_value(double d) {
    ConfigValue v;
    v.type_ = Type::number_v;
    v.num_ = d;
    return v;
  }
  static ConfigValue boolean_value(bool b) {
    ConfigValue v;
    v.type_ = Type::boolean_v;
    v.bool_ = b;
    return v;
  }
  static ConfigValue array_value() {
    ConfigValue v;
    v.type_ = Type::array_v;
    return v;
  }
  static ConfigValue table_value() { return ConfigValue(); }

  Type type() const { return type_; }
  bool is_table() const { return type_ == Type::table_v; }
  bool is_array() const { return type_ == Type::array_v; }
  bool is_number() const { return type_ == Type::number_v; }
  bool is_string() const { return type_ == Type::string_v; }
  bool is_bool() const { return type_ == Type::boolean_v; }

  const std::string& as_string() const {
    require(Type::string_v, "string");
    return str_;
  }
  double as_number() const {
    require(Type::number_v, "number");
    return num_;
  }
  long long as_integer() const {
    require(Type::number_v, "number");
    double r = std::round(num_);
    if (std::abs(num_ - r) > 1e-9)
      throw ConfigurationError("expected an integer, got " +
                               std::to_string(num_));
    return static_cast<long long>(r);
  }
  bool as_bool() const {
    require(Type::boolean_v, "boolean");
    return bool_;
  }
  const std::vector<ConfigValue>& as_array() const {
    require(Type::array_v, "array");
    return items_;
  }
  std::vector<double> as_number_array() const {
    std::vector<double> out;
    for (const auto& v : as_array()) out.push_back(v.as_number());
    return out;
  }

  // Table access -----------------------------------------------------------

  const std::vector<std::pair<std::string, ConfigValue>>& entries() const {
    require(Type::table_v, "table");
    return table_;
  }

  const ConfigValue* find(const std::string& key) const {
    require(Type::table_v, "table");
    for (const auto& [k, v] : table_)
      if (k == key) return &v;
    return nullptr;
  }

  const ConfigValue& at(const std::string& key) const {
    const ConfigValue* v = find(key);
    if (!v) throw ConfigurationError("missing required key: " + key);
    return *v;
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  double number_or(const std::string& key, double fallback) const {
    const ConfigValue* v = find(key);
    return v ? v->as_number() : fallback;
  }
  std::string string_or(const std::string& key, std::string fallback) const {
    const ConfigValue* v = find(key);
    return v ? v->as_string() : std::move(fallback);
  }
  bool bool_or(const std::string& key, bool fallback) const {
    const ConfigValue* v = find(key);
    return v ? v->as_bool() : fallback;
  }

  ConfigValue* find_mutable(const std::string& key) {
    for (auto& [k, v] : table_)
      if (k == key) return &v;
    return nullptr;
  }

  ConfigValue& insert(const std::string& key, ConfigValue v) {
    table_.emplace_back(key, std::move(v));
    return table_.back().second;
  }

  void push_back(ConfigValue v) { items_.push_back(std::move(v)); }

  std::vector<ConfigValue>& as_array_mutable() {
    require(Type::array_v, "array");
    return items_;
  }

 private:
  void require(Type t, const char* what) const {
    if (type_ != t)
      throw ConfigurationError(std::string("expected a ") + what);
  }

  Type type_;
  std::string str_;
  double num_ = 0.0;
  bool bool_ = false;
  std::vector<ConfigValue> items_;
  std::vector<std::pair<std::string, ConfigValue>> table_;
};

namespace detail {

class TomlParser {
 public:
  explicit TomlParser(const std::string& text) : text_(text) {}

  ConfigValue parse() {
    ConfigValue root = ConfigValue::table_value();
    current_ = &root;
    while (!at_end()) {
      skip_blank();
      if (at_end()) break;
      if (peek() == '[') {
        parse_header(root);
      } else {
        parse_key_value();
      }
      expect_line_end();
    }
    current_ = nullptr;
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigurationError(msg, line_, col_);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  char advance() {
    char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_spaces() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) advance();
  }

  // Whitespace, newlines and comments between statements.
  void skip_blank() {
    for (;;) {
      skip_spaces();
      if (at_end()) return;
      if (peek() == '#') {
        while (!at_end() && peek() != '\n') advance();
        continue;
      }
      if (peek() == '\n' || peek() == '\r') {
        advance();
        continue;
      }
      return;
    }
  }

  void expect_line_end() {
    skip_spaces();
    if (at_end()) return;
    if (peek() == '#') {
      while (!at_end() && peek() != '\n') advance();
    }
    if (at_end()) return;
    if (peek() == '\r') advance();
    if (at_end()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    advance();
  }

  static bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string parse_key() {
    skip_spaces();
    if (at_end()) fail("expected a key");
    if (peek() == '"') return parse_basic_string();
    std::string key;
    while (!at_end() && is_bare_key_char(peek())) key.push_back(advance());
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::vector<std::string> parse_key_path(char terminator) {
    std::vector<std::string> path;
    for (;;) {
      path.push_back(parse_key());
      skip_spaces();
      if (at_end()) fail("unterminated table header");
      if (peek() == '.') {
        advance();
        continue;
      }
      if (peek() == terminator) return path;
      fail("unexpected character in table header");
    }
  }

  void parse_header(ConfigValue& root) {
    advance();  // consume '['
    bool is_array = !at_end() && peek() == '[';
    if (is_array) advance();
    std::vector<std::string> path = parse_key_path(']');
    advance();  // consume ']'
    if (is_array) {
      if (at_end() || peek() != ']') fail("expected ]] to close the header");
      advance();
    }

    ConfigValue* node = &root;
    // Effective path for duplicate detection: array hops append the element
    // index, so [scenario.problem] under distinct [[scenario]] entries stays
    // distinct while a literal re-declaration is still caught.
    std::string eff;
    for (std::size_t i = 0; i < path.size(); ++i) {
      bool last = i + 1 == path.size();
      if (!eff.empty()) eff.push_back('.');
      eff += path[i];
      ConfigValue* child = node->find_mutable(path[i]);
      if (last && is_array) {
        if (!child) child = &node->insert(path[i], ConfigValue::array_value());
        if (!child->is_array()) fail("key already used with another type");
        child->push_back(ConfigValue::table_value());
        node = const_cast<ConfigValue*>(&child->as_array().back());
      } else {
        if (!child) {
          child = &node->insert(path[i], ConfigValue::table_value());
        } else if (child->is_array()) {
          // Descend into the latest element of an array of tables.
          eff += '#' + std::to_string(child->as_array().size() - 1);
          child = const_cast<ConfigValue*>(&child->as_array().back());
        }
        if (!child->is_table()) fail("key already used with another type");
        node = child;
        if (last && !is_array && header_seen_.count(eff))
          fail("table declared twice");
      }
    }
    if (!is_array) header_seen_.insert(eff);
    current_ = node;
  }

  void parse_key_value() {
    std::string key = parse_key();
    skip_spaces();
    if (at_end() || peek() != '=') fail("expected = after key");
    advance();
    skip_spaces();
    ConfigValue value = parse_value();
    if (current_->find(key)) fail("duplicate key: " + key);
    current_->insert(key, std::move(value));
  }

  ConfigValue parse_value() {
    if (at_end()) fail("expected a value");
    char c = peek();
    if (c == '"') return ConfigValue::string_value(parse_basic_string());
    if (c == '[') return parse_array();
    if (c == 't' || c == 'f') return parse_boolean();
    if (c == '+' || c == '-' || std::isdigit(static_cast<unsigned char>(c)))
      return parse_number();
    fail("unrecognized value");
  }

  std::string parse_basic_string() {
    advance();  // opening quote
    std::string out;
    for (;;) {
      if (at_end()) fail("unterminated string");
      char c = advance();
      if (c == '"') return out;
      if (c == '\n') fail("unterminated string");
      if (c == '\\') {
        if (at_end()) fail("unterminated escape");
        char e = advance();
        switch (e) {
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          default: fail("unsupported escape sequence");
        }
      } else {
        out.push_back(c);
      }
    }
  }

  ConfigValue parse_boolean() {
    if (text_.compare(pos_, 4, "true") == 0 && boundary(pos_ + 4)) {
      for (int i = 0; i < 4; ++i) advance();
      return ConfigValue::boolean_value(true);
    }
    if (text_.compare(pos_, 5, "false") == 0 && boundary(pos_ + 5)) {
      for (int i = 0; i < 5; ++i) advance();
      return ConfigValue::boolean_value(false);
    }
    fail("unrecognized value");
  }

  bool boundary(std::size_t p) const {
    return p >= text_.size() || !is_bare_key_char(text_[p]);
  }

  ConfigValue parse_number() {
    std::string tok;
    while (!at_end()) {
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' ||
          c == '-' || c == '.' || c == 'e' || c == 'E' || c == '_') {
        if (c != '_') tok.push_back(c);
        advance();
      } else {
        break;
      }
    }
    if (tok.empty()) fail("expected a number");
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == nullptr || *end != '\0' || !std::isfinite(v))
      fail("malformed number: " + tok);
    return ConfigValue::number_value(v);
  }

  ConfigValue parse_array() {
    advance();  // '['
    ConfigValue arr = ConfigValue::array_value();
    skip_spaces();
    if (!at_end() && peek() == ']') {
      advance();
      return arr;
    }
    for (;;) {
      skip_spaces();
      arr.push_back(parse_value());
      skip_spaces();
      if (at_end()) fail("unterminated array");
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() == ']') {
        advance();
        return arr;
      }
      fail("expected , or ] in array");
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  ConfigValue* current_ = nullptr;
  std::set<std::string> header_seen_;
};

}  // namespace detail

inline ConfigValue parse_config_text(const std::string& text) {
  detail::TomlParser parser(text);
  return parser.parse();
}

inline ConfigValue parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace hlab
