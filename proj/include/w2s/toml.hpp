// Minimal TOML-subset reader: [dotted.sections], bare keys, strings, bools,
// numbers, and (nested, possibly multi-line) arrays. Enough for the system,
// HMM and experiment config files; not a general TOML implementation.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "w2s/common.hpp"

namespace w2s::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> v;

  bool is_array() const { return std::holds_alternative<Array>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }

  double as_double(const std::string& key) const;
  std::int64_t as_int(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  const Array& as_array(const std::string& key) const;
};

class Table {
 public:
  // Throws ValidationError on parse failure.
  static Table parse_file(const std::string& path);
  static Table parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  bool has_section(const std::string& prefix) const;

  const Value& require(const std::string& key) const;

  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  VecD get_vector(const std::string& key) const;
  VecList get_matrix(const std::string& key) const;            // array of arrays
  std::vector<VecList> get_matrix_list(const std::string& key) const;  // 3-deep
  std::vector<std::string> get_string_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  const std::map<std::string, Value>& entries() const { return entries_; }

 private:
  std::map<std::string, Value> entries_;  // fully dotted keys
};

}  // namespace w2s::toml
