// ram/grid_config.hpp

// Copyright 2026 The ram Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// grid.toml reader. The accepted language is a TOML subset: comments,
// [table] headers, bare keys, and values that are integers, floats,
// booleans, basic or literal strings, or arrays of those (arrays may span
// lines). Inline tables, dotted keys, dates and multi-line strings are not
// supported.
//
//   seed = 1                  # base seed
//   repeats = 3
//   seeds = [11, 12, 13]      # optional, one per repeat
//   data = ["fmllr", "raw", "cmn_speaker", "cmn_utterance"]
//   ivectors = ["none", "online/off_spk"]
//   arch = ["ff", "lstm", "gru", "relugru", "mrelugru"]
//
//   [model]     hidden layers delay ff_hidden ff_layers context dropout
//               schedule ("desk", "paper" or a schedule file) max_epochs
//   [ivector]   ubm_components dim ubm_iterations extractor_iterations
//               chunk max_count
//   [fmllr]     components gmm_iterations iterations sat_alternations
//   [decode]    lm_weight lm_floor self_loop
//
// Omitted lists default to every value; the grid is data-major, then
// i-vector mode, then architecture.

#ifndef RAM_GRID_CONFIG_HPP_
#define RAM_GRID_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "ram/error.hpp"
#include "ram/experiment.hpp"

namespace ram {

struct TomlValue {
  enum class Kind { kInteger, kFloat, kBool, kString, kArray };
  Kind kind = Kind::kInteger;
  std::int64_t integer = 0;
  double number = 0.0;
  bool boolean = false;
  std::string text;
  std::vector<TomlValue> items;
};

/// Flat "table.key" -> value map; top-level keys have no prefix.
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

class TomlParser {
 public:
  TomlParser(std::string text, int line) : s_(std::move(text)), line_(line) {}

  TomlValue value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '[') return array();
    if (c == '"') return string_value(basic_string());
    if (c == '\'') return string_value(literal_string());
    if (s_.compare(pos_, 4, "true") == 0) return bool_value(true, 4);
    if (s_.compare(pos_, 5, "false") == 0) return bool_value(false, 5);
    return number();
  }

  void finish() {
    skip_space();
    if (pos_ < s_.size()) fail("unexpected text after value");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError("grid config line " + std::to_string(line_) + ": " + msg);
  }

 private:
  void skip_space() {
    while (pos_ < s_.size()) {
      if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  TomlValue string_value(std::string s) {
    TomlValue v;
    v.kind = TomlValue::Kind::kString;
    v.text = std::move(s);
    return v;
  }

  TomlValue bool_value(bool b, std::size_t len) {
    pos_ += len;
    TomlValue v;
    v.kind = TomlValue::Kind::kBool;
    v.boolean = b;
    return v;
  }

  std::string basic_string() {
    std::string out;
    for (++pos_; pos_ < s_.size(); ++pos_) {
      const char c = s_[pos_];
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c == '\n') break;
      if (c == '\\') {
        if (++pos_ >= s_.size()) break;
        switch (s_[pos_]) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: fail(std::string("unsupported escape \\") + s_[pos_]);
        }
      } else {
        out += c;
      }
    }
    fail("unterminated string");
  }

  std::string literal_string() {
    const std::size_t end = s_.find('\'', pos_ + 1);
    if (end == std::string::npos || s_.find('\n', pos_) < end) fail("unterminated string");
    std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
    pos_ = end + 1;
    return out;
  }

  TomlValue array() {
    TomlValue v;
    v.kind = TomlValue::Kind::kArray;
    ++pos_;
    while (true) {
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      v.items.push_back(value());
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ >= s_.size() || s_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  TomlValue number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '+' ||
                               s_[end] == '-' || s_[end] == '.' || s_[end] == '_'))
      ++end;
    std::string tok;
    for (std::size_t i = pos_; i < end; ++i)
      if (s_[i] != '_') tok += s_[i];
    if (tok.empty()) fail("missing value");
    TomlValue v;
    std::size_t used = 0;
    try {
      if (tok.find_first_of(".eE") == std::string::npos || tok.rfind("0x", 0) == 0) {
        v.kind = TomlValue::Kind::kInteger;
        v.integer = std::stoll(tok, &used, 0);
      } else {
        v.kind = TomlValue::Kind::kFloat;
        v.number = std::stod(tok, &used);
      }
    } catch (const std::exception&) {
      fail("bad value '" + tok + "'");
    }
    if (used != tok.size()) fail("bad value '" + tok + "'");
    pos_ = end;
    return v;
  }

  std::string s_;
  std::size_t pos_ = 0;
  int line_;
};

inline bool brackets_balanced(const std::string& text) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth <= 0;
}

inline std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool bare_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

}  // namespace detail

inline TomlTable parse_toml(std::istream& is) {
  TomlTable out;
  std::string table;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const int start = line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] == '[') {
      const std::size_t close = t.find(']');
      const std::string rest = close == std::string::npos ? "" : detail::trim(t.substr(close + 1));
      table = close == std::string::npos ? "" : detail::trim(t.substr(1, close - 1));
      if (!detail::bare_key(table) || (!rest.empty() && rest[0] != '#'))
        throw IoError("grid config line " + std::to_string(start) + ": bad table header");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw IoError("grid config line " + std::to_string(start) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    if (!detail::bare_key(key)) throw IoError("grid config line " + std::to_string(start) + ": bad key '" + key + "'");
    std::string text = t.substr(eq + 1);
    while (!detail::brackets_balanced(text) && std::getline(is, line)) {
      ++line_no;
      text += '\n' + line;
    }
    detail::TomlParser parser(text, start);
    TomlValue v = parser.value();
    parser.finish();
    const std::string full = table.empty() ? key : table + "." + key;
    if (!out.emplace(full, std::move(v)).second) parser.fail("duplicate key " + full);
  }
  return out;
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const TomlTable& t) : t_(t) {}

  const TomlValue* get(const std::string& key) {
    used_.push_back(key);
    auto it = t_.find(key);
    return it == t_.end() ? nullptr : &it->second;
  }

  void size(const std::string& key, std::size_t& out) {
    if (const TomlValue* v = get(key)) out = to_size(key, *v);
  }

  void uint64(const std::string& key, std::uint64_t& out) {
    if (const TomlValue* v = get(key)) out = to_size(key, *v);
  }

  void real(const std::string& key, double& out) {
    const TomlValue* v = get(key);
    if (!v) return;
    if (v->kind == TomlValue::Kind::kFloat) out = v->number;
    else if (v->kind == TomlValue::Kind::kInteger) out = static_cast<double>(v->integer);
    else throw IoError("grid config: " + key + " must be a number");
  }

  void text(const std::string& key, std::string& out) {
    const TomlValue* v = get(key);
    if (!v) return;
    if (v->kind != TomlValue::Kind::kString) throw IoError("grid config: " + key + " must be a string");
    out = v->text;
  }

  std::vector<std::string> strings(const std::string& key) {
    const TomlValue* v = get(key);
    if (!v) return {};
    if (v->kind != TomlValue::Kind::kArray) throw IoError("grid config: " + key + " must be an array");
    std::vector<std::string> out;
    for (const TomlValue& item : v->items) {
      if (item.kind != TomlValue::Kind::kString) throw IoError("grid config: " + key + " must hold strings");
      out.push_back(item.text);
    }
    if (out.empty()) throw IoError("grid config: " + key + " must not be empty");
    return out;
  }

  std::vector<std::uint64_t> integers(const std::string& key) {
    const TomlValue* v = get(key);
    if (!v) return {};
    if (v->kind != TomlValue::Kind::kArray) throw IoError("grid config: " + key + " must be an array");
    std::vector<std::uint64_t> out;
    for (const TomlValue& item : v->items) out.push_back(to_size(key, item));
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : t_)
      if (std::find(used_.begin(), used_.end(), key) == used_.end())
        throw IoError("grid config: unknown key " + key);
  }

 private:
  static std::uint64_t to_size(const std::string& key, const TomlValue& v) {
    if (v.kind != TomlValue::Kind::kInteger || v.integer < 0)
      throw IoError("grid config: " + key + " must be a nonnegative integer");
    return static_cast<std::uint64_t>(v.integer);
  }

  const TomlTable& t_;
  std::vector<std::string> used_;
};

}  // namespace detail

/// Expands a grid file into one ExperimentConfig per cell.
inline std::vector<ExperimentConfig> parse_grid_config(std::istream& is) {
  const TomlTable table = parse_toml(is);
  detail::ConfigReader r(table);
  ExperimentConfig base;
  r.uint64("seed", base.seed);
  r.size("repeats", base.repeats);
  base.seeds = r.integers("seeds");
  if (!base.seeds.empty() && !table.count("repeats")) base.repeats = base.seeds.size();

  ModelSettings& m = base.model;
  r.size("model.hidden", m.hidden);
  r.size("model.layers", m.layers);
  r.size("model.delay", m.delay);
  r.size("model.ff_hidden", m.ff_hidden);
  r.size("model.ff_layers", m.ff_layers);
  r.size("model.context", m.context);
  r.real("model.dropout", m.dropout);
  r.text("model.schedule", m.schedule);
  r.size("model.max_epochs", m.max_epochs);

  ArtifactSettings& a = base.artifacts;
  r.size("ivector.ubm_components", a.ubm_components);
  r.size("ivector.dim", a.ivector_dim);
  r.size("ivector.ubm_iterations", a.ubm_iterations);
  r.size("ivector.extractor_iterations", a.extractor_iterations);
  r.size("ivector.chunk", a.chunk);
  r.real("ivector.max_count", a.max_count);
  r.size("fmllr.components", a.fmllr_components);
  r.size("fmllr.gmm_iterations", a.fmllr_gmm_iterations);
  r.size("fmllr.iterations", a.fmllr_iterations);
  r.size("fmllr.sat_alternations", a.sat_alternations);

  r.real("decode.lm_weight", base.decode.lm_weight);
  r.real("decode.lm_floor", base.decode.lm_floor);
  r.real("decode.self_loop", base.decode.self_loop);

  std::vector<DataMode> data(kAllDataModes.begin(), kAllDataModes.end());
  std::vector<IvectorMode> ivectors(kAllIvectorModes.begin(), kAllIvectorModes.end());
  std::vector<CellKind> arch(kAllArchitectures.begin(), kAllArchitectures.end());
  try {
    if (auto v = r.strings("data"); !v.empty()) {
      data.clear();
      for (const std::string& s : v) data.push_back(parse_data_mode(s));
    }
    if (auto v = r.strings("ivectors"); !v.empty()) {
      ivectors.clear();
      for (const std::string& s : v) ivectors.push_back(parse_ivector_mode(s));
    }
    if (auto v = r.strings("arch"); !v.empty()) {
      arch.clear();
      for (const std::string& s : v) arch.push_back(parse_cell_kind(s));
    }
  } catch (const ContractError& e) {
    throw IoError(std::string("grid config: ") + e.what());
  }
  r.reject_unknown();

  std::vector<ExperimentConfig> out;
  for (DataMode d : data)
    for (const IvectorMode& iv : ivectors)
      for (CellKind k : arch) {
        ExperimentConfig c = base;
        c.data = d;
        c.ivectors = iv;
        c.arch = k;
        try {
          c.validate();
        } catch (const ContractError& e) {
          throw IoError(std::string("grid config: ") + e.what());
        }
        out.push_back(std::move(c));
      }
  return out;
}

}  // namespace ram

#endif  // RAM_GRID_CONFIG_HPP_
