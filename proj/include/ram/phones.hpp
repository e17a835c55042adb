// ram/phones.hpp

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

// Phone inventory (training symbols and their HMM states) and the
// training-to-scoring symbol map.
//
// phones.tsv:  "symbol<TAB>first_state<TAB>num_states" per phone, in phone
//              index order; states of all phones tile 0..N-1 contiguously.
// map file:    "training_symbol scoring_symbol" per line, "-" deletes.

#ifndef RAM_PHONES_HPP_
#define RAM_PHONES_HPP_

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ram/error.hpp"

namespace ram {

class PhoneInventory {
 public:
  PhoneInventory() = default;

  /// Every phone gets `states_per_phone` consecutive states.
  PhoneInventory(std::vector<std::string> symbols, std::size_t states_per_phone) {
    require(states_per_phone >= 1, "PhoneInventory: states_per_phone must be >= 1");
    for (std::string& s : symbols) add(std::move(s), states_per_phone);
  }

  void add(std::string symbol, std::size_t num_states) {
    require(num_states >= 1, "PhoneInventory: a phone needs at least one state");
    require(!index_.count(symbol), "PhoneInventory: duplicate symbol " + symbol);
    index_[symbol] = symbols_.size();
    symbols_.push_back(std::move(symbol));
    first_.push_back(num_states_total_);
    count_.push_back(num_states);
    for (std::size_t s = 0; s < num_states; ++s) state_phone_.push_back(symbols_.size() - 1);
    num_states_total_ += num_states;
  }

  std::size_t num_phones() const { return symbols_.size(); }
  std::size_t num_states() const { return num_states_total_; }
  const std::string& symbol(std::size_t phone) const { return symbols_.at(phone); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  std::size_t first_state(std::size_t phone) const { return first_.at(phone); }
  std::size_t states_of(std::size_t phone) const { return count_.at(phone); }
  std::size_t last_state(std::size_t phone) const { return first_.at(phone) + count_.at(phone) - 1; }
  std::size_t phone_of_state(std::size_t state) const { return state_phone_.at(state); }

  std::optional<std::size_t> find(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(const std::string& symbol) const {
    auto i = find(symbol);
    require(i.has_value(), "unknown phone symbol '" + symbol + "'");
    return *i;
  }

  std::vector<int> encode(const std::vector<std::string>& seq) const {
    std::vector<int> out;
    for (const std::string& s : seq) out.push_back(static_cast<int>(index(s)));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& seq) const {
    std::vector<std::string> out;
    for (int p : seq) out.push_back(symbol(static_cast<std::size_t>(p)));
    return out;
  }

 private:
  std::vector<std::string> symbols_;
  std::vector<std::size_t> first_, count_, state_phone_;
  std::map<std::string, std::size_t> index_;
  std::size_t num_states_total_ = 0;
};

inline void write_phones(std::ostream& os, const PhoneInventory& inv) {
  for (std::size_t p = 0; p < inv.num_phones(); ++p)
    os << inv.symbol(p) << '\t' << inv.first_state(p) << '\t' << inv.states_of(p) << '\n';
}

inline PhoneInventory read_phones(std::istream& is) {
  PhoneInventory inv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string sym;
    std::size_t first = 0, count = 0;
    if (!(ls >> sym)) continue;
    if (!(ls >> first >> count) || count == 0)
      throw IoError("phones line " + std::to_string(line_no) + ": expected symbol first_state num_states");
    if (first != inv.num_states())
      throw IoError("phones line " + std::to_string(line_no) + ": states must be contiguous");
    inv.add(sym, count);
  }
  if (inv.num_phones() == 0) throw IoError("phones: empty inventory");
  return inv;
}

/// Training symbol -> scoring symbol, with deletions.
class PhoneMap {
 public:
  static constexpr const char* kDelete = "-";

  PhoneMap() = default;

  static PhoneMap identity(const std::vector<std::string>& symbols) {
    PhoneMap m;
    for (const std::string& s : symbols) m.set(s, s);
    return m;
  }

  void set(const std::string& from, const std::string& to) {
    require(!map_.count(from), "PhoneMap: duplicate entry for " + from);
    map_[from] = to == kDelete ? std::nullopt : std::optional<std::string>(to);
  }

  bool contains(const std::string& from) const { return map_.count(from) != 0; }

  /// nullopt means the symbol is deleted.
  const std::optional<std::string>& operator()(const std::string& from) const {
    auto it = map_.find(from);
    require(it != map_.end(), "PhoneMap: unknown symbol '" + from + "'");
    return it->second;
  }

  std::set<std::string> outputs() const {
    std::set<std::string> out;
    for (const auto& [k, v] : map_)
      if (v) out.insert(*v);
    return out;
  }

  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::string, std::optional<std::string>> map_;
};

inline PhoneMap read_phone_map(std::istream& is) {
  PhoneMap m;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string from, to;
    if (!(ls >> from)) continue;
    if (!(ls >> to)) throw IoError("map line " + std::to_string(line_no) + ": expected two columns");
    m.set(from, to);
  }
  return m;
}

inline PhoneMap load_phone_map(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_phone_map(is);
}

/// Maps symbol by symbol, drops deleted symbols, then merges runs of equal
/// adjacent symbols when `collapse` is set.
inline std::vector<std::string> map_phones(const std::vector<std::string>& seq, const PhoneMap& map,
                                           bool collapse = true) {
  std::vector<std::string> out;
  for (const std::string& s : seq) {
    const auto& m = map(s);
    if (!m) continue;
    if (collapse && !out.empty() && out.back() == *m) continue;
    out.push_back(*m);
  }
  return out;
}

}  // namespace ram

#endif  // RAM_PHONES_HPP_
