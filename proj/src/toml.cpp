#include "w2s/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace w2s::toml {

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ValidationError(origin + ":" + std::to_string(line) + ": " + msg);
}

struct Cursor {
  const std::string& s;
  std::size_t i = 0;
  const std::string& origin;
  int line;

  bool eof() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  void skip_ws() {
    while (!eof() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    if (!eof() && s[i] == '#') {  // comment inside a multi-line array
      while (!eof() && s[i] != '\n') ++i;
      skip_ws();
    }
  }
};

Value parse_scalar(const std::string& tok, const std::string& origin, int line) {
  if (tok.empty()) fail(origin, line, "empty value");
  if (tok == "true") return Value{true};
  if (tok == "false") return Value{false};
  // integer?
  bool is_int = true;
  for (std::size_t j = 0; j < tok.size(); ++j) {
    char c = tok[j];
    if (j == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      is_int = false;
      break;
    }
  }
  try {
    if (is_int) return Value{static_cast<std::int64_t>(std::stoll(tok))};
    std::size_t used = 0;
    double d = std::stod(tok, &used);
    if (used != tok.size()) fail(origin, line, "bad number '" + tok + "'");
    return Value{d};
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    fail(origin, line, "bad value '" + tok + "'");
  }
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  Array arr;
  ++c.i;  // '['
  c.skip_ws();
  while (true) {
    if (c.eof()) fail(c.origin, c.line, "unterminated array");
    if (c.peek() == ']') {
      ++c.i;
      break;
    }
    arr.push_back(parse_value(c));
    c.skip_ws();
    if (!c.eof() && c.peek() == ',') {
      ++c.i;
      c.skip_ws();
    }
  }
  return Value{std::move(arr)};
}

Value parse_value(Cursor& c) {
  c.skip_ws();
  if (c.eof()) fail(c.origin, c.line, "missing value");
  if (c.peek() == '[') return parse_array(c);
  if (c.peek() == '"') {
    ++c.i;
    std::string out;
    while (!c.eof() && c.peek() != '"') out.push_back(c.s[c.i++]);
    if (c.eof()) fail(c.origin, c.line, "unterminated string");
    ++c.i;
    return Value{out};
  }
  std::size_t start = c.i;
  while (!c.eof() && c.peek() != ',' && c.peek() != ']' && c.peek() != '\n' &&
         c.peek() != '#' && c.peek() != '\r')
    ++c.i;
  std::string tok = c.s.substr(start, c.i - start);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.pop_back();
  return parse_scalar(tok, c.origin, c.line);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

double Value::as_double(const std::string& key) const {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  throw ValidationError(key + ": expected a number");
}

std::int64_t Value::as_int(const std::string& key) const {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  throw ValidationError(key + ": expected an integer");
}

bool Value::as_bool(const std::string& key) const {
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
  throw ValidationError(key + ": expected a boolean");
}

const std::string& Value::as_string(const std::string& key) const {
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  throw ValidationError(key + ": expected a string");
}

const Array& Value::as_array(const std::string& key) const {
  if (std::holds_alternative<Array>(v)) return std::get<Array>(v);
  throw ValidationError(key + ": expected an array");
}

Table Table::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

Table Table::parse_string(const std::string& text, const std::string& origin) {
  Table t;
  std::string section;
  std::size_t pos = 0;
  int line = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line;
    std::string raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    std::size_t hash = raw.find('#');
    // keep '#' inside quoted strings
    if (hash != std::string::npos && raw.find('"') == std::string::npos)
      raw = raw.substr(0, hash);
    std::string ln = trim(raw);
    if (ln.empty()) continue;
    if (ln.front() == '[') {
      if (ln.back() != ']') fail(origin, line, "malformed section header");
      section = trim(ln.substr(1, ln.size() - 2));
      if (section.empty()) fail(origin, line, "empty section name");
      continue;
    }
    std::size_t eq = ln.find('=');
    if (eq == std::string::npos) fail(origin, line, "expected 'key = value'");
    std::string key = trim(ln.substr(0, eq));
    if (key.empty()) fail(origin, line, "empty key");
    std::string val = trim(ln.substr(eq + 1));
    // Multi-line arrays: keep consuming lines until brackets balance.
    auto depth = [](const std::string& s) {
      int d = 0;
      for (char ch : s) {
        if (ch == '[') ++d;
        if (ch == ']') --d;
      }
      return d;
    };
    int d = depth(val);
    while (d > 0 && pos < text.size()) {
      std::size_t e2 = text.find('\n', pos);
      if (e2 == std::string::npos) e2 = text.size();
      ++line;
      std::string more = text.substr(pos, e2 - pos);
      pos = e2 + 1;
      std::size_t h2 = more.find('#');
      if (h2 != std::string::npos && more.find('"') == std::string::npos)
        more = more.substr(0, h2);
      val += "\n" + more;
      d = depth(val);
    }
    if (d != 0) fail(origin, line, "unbalanced brackets in value for '" + key + "'");
    Cursor c{val, 0, origin, line};
    Value v = parse_value(c);
    c.skip_ws();
    if (!c.eof()) fail(origin, line, "trailing characters after value for '" + key + "'");
    std::string full = section.empty() ? key : section + "." + key;
    if (t.entries_.count(full)) fail(origin, line, "duplicate key '" + full + "'");
    t.entries_.emplace(std::move(full), std::move(v));
  }
  return t;
}

bool Table::has_section(const std::string& prefix) const {
  auto it = entries_.lower_bound(prefix + ".");
  return it != entries_.end() && it->first.rfind(prefix + ".", 0) == 0;
}

const Value& Table::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

double Table::get_double(const std::string& key) const { return require(key).as_double(key); }
double Table::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
std::int64_t Table::get_int(const std::string& key) const { return require(key).as_int(key); }
std::int64_t Table::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}
bool Table::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? require(key).as_bool(key) : fallback;
}
std::string Table::get_string(const std::string& key) const {
  return require(key).as_string(key);
}
std::string Table::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

VecD Table::get_vector(const std::string& key) const {
  const Array& a = require(key).as_array(key);
  VecD out;
  out.reserve(a.size());
  for (const Value& v : a) out.push_back(v.as_double(key));
  return out;
}

VecList Table::get_matrix(const std::string& key) const {
  const Array& a = require(key).as_array(key);
  VecList out;
  out.reserve(a.size());
  for (const Value& row : a) {
    const Array& r = row.as_array(key);
    VecD v;
    v.reserve(r.size());
    for (const Value& x : r) v.push_back(x.as_double(key));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<VecList> Table::get_matrix_list(const std::string& key) const {
  const Array& a = require(key).as_array(key);
  std::vector<VecList> out;
  for (const Value& m : a) {
    const Array& rows = m.as_array(key);
    VecList mat;
    for (const Value& row : rows) {
      const Array& r = row.as_array(key);
      VecD v;
      for (const Value& x : r) v.push_back(x.as_double(key));
      mat.push_back(std::move(v));
    }
    out.push_back(std::move(mat));
  }
  return out;
}

std::vector<std::string> Table::get_string_list(const std::string& key) const {
  const Array& a = require(key).as_array(key);
  std::vector<std::string> out;
  for (const Value& v : a) out.push_back(v.as_string(key));
  return out;
}

std::vector<std::int64_t> Table::get_int_list(const std::string& key) const {
  const Array& a = require(key).as_array(key);
  std::vector<std::int64_t> out;
  for (const Value& v : a) out.push_back(v.as_int(key));
  return out;
}

}  // namespace w2s::toml
