#pragma once

// Second formatting step: every ordered pair of distinct source cases becomes
// one transaction of marked items (delta of problems plus delta of solutions).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "akd/case_model.hpp"
#include "akd/errors.hpp"
#include "akd/rational.hpp"

namespace akd {

enum class Facet : std::uint8_t { Pb = 0, Sol = 1 };
// Minus: in first only. Equal: in both. Plus: in second only.
enum class Polarity : std::uint8_t { Minus = 0, Equal = 1, Plus = 2 };

inline std::string_view to_string(Facet f) { return f == Facet::Pb ? "pb" : "sol"; }
inline std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::Minus: return "-";
    case Polarity::Equal: return "=";
    case Polarity::Plus: return "+";
  }
  return "?";
}

inline Polarity flip(Polarity p) {
  return p == Polarity::Minus ? Polarity::Plus : (p == Polarity::Plus ? Polarity::Minus : p);
}

// Ordered by (facet, property, polarity); member order matters.
struct Item {
  Facet facet;
  PropertyId property;
  Polarity polarity;

  Item(PropertyId prop, Polarity pol, Facet fac) : facet(fac), property(std::move(prop)), polarity(pol) {}

  // "<facet>:<polarity>:<property>", e.g. "pb:-:a".
  std::string str() const {
    std::string out(to_string(facet));
    out += ':';
    out += to_string(polarity);
    out += ':';
    out += property.str();
    return out;
  }

  static Item parse(std::string_view text) {
    const auto c1 = text.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
    if (c2 == std::string_view::npos) throw ParseError("malformed item '" + std::string(text) + "'");
    const auto fac = text.substr(0, c1);
    const auto pol = text.substr(c1 + 1, c2 - c1 - 1);
    Facet f;
    if (fac == "pb") f = Facet::Pb;
    else if (fac == "sol") f = Facet::Sol;
    else throw ParseError("unknown facet in item '" + std::string(text) + "'");
    Polarity p;
    if (pol == "-") p = Polarity::Minus;
    else if (pol == "=") p = Polarity::Equal;
    else if (pol == "+") p = Polarity::Plus;
    else throw ParseError("unknown polarity in item '" + std::string(text) + "'");
    const auto name = text.substr(c2 + 1);
    if (!PropertyId::valid(name)) throw ParseError("bad property in item '" + std::string(text) + "'");
    return Item(PropertyId(std::string(name)), p, f);
  }

  friend auto operator<=>(const Item&, const Item&) = default;
  friend bool operator==(const Item&, const Item&) = default;
};

using ItemSet = std::set<Item>;

inline ItemSet delta(const PropertySet& first, const PropertySet& second, Facet facet) {
  ItemSet out;
  auto a = first.begin();
  auto b = second.begin();
  while (a != first.end() || b != second.end()) {
    if (b == second.end() || (a != first.end() && *a < *b)) {
      out.emplace(*a++, Polarity::Minus, facet);
    } else if (a == first.end() || *b < *a) {
      out.emplace(*b++, Polarity::Plus, facet);
    } else {
      out.emplace(*a, Polarity::Equal, facet);
      ++a;
      ++b;
    }
  }
  return out;
}

struct Transaction {
  std::string first;
  std::string second;
  ItemSet items;
  friend bool operator==(const Transaction&, const Transaction&) = default;
};

inline Transaction make_transaction(const Case& c1, const Case& c2, const Ontology& onto) {
  if (c1.id == c2.id) throw ValidationError("transaction needs two distinct cases, got '" + c1.id + "' twice");
  const auto f1 = format_case(c1, onto);
  const auto f2 = format_case(c2, onto);
  Transaction t{c1.id, c2.id, delta(f1.problem, f2.problem, Facet::Pb)};
  t.items.merge(delta(f1.solution, f2.solution, Facet::Sol));
  return t;
}

// ---------------------------------------------------------------------------
// Encoded database

using ItemCode = std::uint32_t;

class ItemDictionary {
 public:
  ItemCode intern(const Item& item) {
    auto [it, inserted] = codes_.try_emplace(item, static_cast<ItemCode>(items_.size()));
    if (inserted) items_.push_back(item);
    return it->second;
  }

  std::optional<ItemCode> find(const Item& item) const {
    auto it = codes_.find(item);
    if (it == codes_.end()) return std::nullopt;
    return it->second;
  }

  const Item& item(ItemCode code) const { return items_.at(code); }
  const std::vector<Item>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }

  friend bool operator==(const ItemDictionary& a, const ItemDictionary& b) { return a.items_ == b.items_; }

 private:
  std::vector<Item> items_;
  std::map<Item, ItemCode> codes_;
};

inline constexpr std::uint32_t kNoCase = std::numeric_limits<std::uint32_t>::max();

struct EncodedTransaction {
  std::uint32_t first = kNoCase;  // case index, kNoCase when read from FIMI
  std::uint32_t second = kNoCase;
  std::vector<ItemCode> items;  // ascending
  friend bool operator==(const EncodedTransaction&, const EncodedTransaction&) = default;
};

class TransactionDb {
 public:
  TransactionDb() = default;
  TransactionDb(std::vector<std::string> case_ids, std::vector<EncodedTransaction> rows, ItemDictionary dictionary)
      : case_ids_(std::move(case_ids)), rows_(std::move(rows)), dictionary_(std::move(dictionary)) {}

  // Test and import helper: rows of items, no case pairs.
  static TransactionDb from_items(const std::vector<std::vector<Item>>& rows) {
    ItemDictionary dict;
    std::vector<EncodedTransaction> encoded;
    for (const auto& row : rows) {
      EncodedTransaction t;
      for (const auto& item : row) t.items.push_back(dict.intern(item));
      std::sort(t.items.begin(), t.items.end());
      t.items.erase(std::unique(t.items.begin(), t.items.end()), t.items.end());
      encoded.push_back(std::move(t));
    }
    return TransactionDb({}, std::move(encoded), std::move(dict));
  }

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const std::vector<EncodedTransaction>& rows() const noexcept { return rows_; }
  const ItemDictionary& dictionary() const noexcept { return dictionary_; }
  const std::vector<std::string>& case_ids() const noexcept { return case_ids_; }

  std::pair<std::string, std::string> pair_ids(std::size_t row) const {
    const auto& t = rows_.at(row);
    if (t.first == kNoCase) return {};
    return {case_ids_.at(t.first), case_ids_.at(t.second)};
  }

  Transaction decode(std::size_t row) const {
    auto [a, b] = pair_ids(row);
    Transaction t{std::move(a), std::move(b), {}};
    for (auto code : rows_.at(row).items) t.items.insert(dictionary_.item(code));
    return t;
  }

  friend bool operator==(const TransactionDb&, const TransactionDb&) = default;

 private:
  std::vector<std::string> case_ids_;
  std::vector<EncodedTransaction> rows_;
  ItemDictionary dictionary_;
};

struct BuildOptions {
  unsigned workers = 1;
  std::size_t max_items = 10'000'000;  // materialization cap, total item occurrences
  std::optional<Rational> pair_filter;  // keep pairs with problem Jaccard >= threshold
};

namespace detail {

// Packed item: facet bit, property index, polarity. Numeric order equals the
// canonical Item order because property indices follow name order.
using ItemKey = std::uint32_t;

inline ItemKey pack(Facet f, PropertyIndex p, Polarity pol) {
  return (static_cast<ItemKey>(f) << 31) | (static_cast<ItemKey>(p) << 2) | static_cast<ItemKey>(pol);
}

inline Item unpack(ItemKey key, const Ontology& onto) {
  return Item(onto.property((key & 0x7fffffffu) >> 2), static_cast<Polarity>(key & 3u),
              static_cast<Facet>(key >> 31));
}

struct ClosedCase {
  std::vector<PropertyIndex> problem;
  std::vector<PropertyIndex> solution;
};

inline std::vector<ClosedCase> close_all(const CaseBase& cb) {
  const auto& onto = cb.ontology();
  if (onto.size() >= (1u << 29)) throw GuardError("ontology too large for item packing");
  std::vector<ClosedCase> out;
  out.reserve(cb.size());
  for (const auto& c : cb.cases())
    out.push_back({onto.closure_indices(onto.indices_of(c.problem)), onto.closure_indices(onto.indices_of(c.solution))});
  return out;
}

inline void append_delta(const std::vector<PropertyIndex>& a, const std::vector<PropertyIndex>& b, Facet f,
                         std::vector<ItemKey>& out) {
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      out.push_back(pack(f, a[i++], Polarity::Minus));
    } else if (i == a.size() || b[j] < a[i]) {
      out.push_back(pack(f, b[j++], Polarity::Plus));
    } else {
      out.push_back(pack(f, a[i], Polarity::Equal));
      ++i;
      ++j;
    }
  }
}

inline bool passes_filter(const ClosedCase& x, const ClosedCase& y, const std::optional<Rational>& filter) {
  if (!filter) return true;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < x.problem.size() && j < y.problem.size()) {
    if (x.problem[i] < y.problem[j]) ++i;
    else if (y.problem[j] < x.problem[i]) ++j;
    else { ++inter; ++i; ++j; }
  }
  const std::size_t uni = x.problem.size() + y.problem.size() - inter;
  if (uni == 0) return true;  // 0/0 = 1
  return static_cast<unsigned __int128>(inter) * filter->den >= static_cast<unsigned __int128>(filter->num) * uni;
}

// Keys of the transaction for (x, y), ascending.
inline void pair_keys(const ClosedCase& x, const ClosedCase& y, std::vector<ItemKey>& out) {
  out.clear();
  append_delta(x.problem, y.problem, Facet::Pb, out);
  append_delta(x.solution, y.solution, Facet::Sol, out);
}

struct Chunk {
  std::vector<EncodedTransaction> rows;  // local codes
  std::vector<ItemKey> local_keys;       // local code -> key, first-occurrence order
};

}  // namespace detail

// One transaction per ordered pair (i, j), i != j, in (i, j) index order.
// Item codes are assigned by first occurrence in that order, independent of
// the worker count.
inline TransactionDb build_transaction_db(const CaseBase& cb, const BuildOptions& opts = {}) {
  const auto n = cb.size();
  if (n < 2) throw ValidationError("case base needs at least 2 cases, has " + std::to_string(n));
  if (n > kNoCase) throw GuardError("case base too large");
  const auto closed = detail::close_all(cb);
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(n)));

  std::vector<detail::Chunk> chunks(workers);
  std::atomic<std::size_t> total_items{0};
  std::atomic<bool> overflow{false};

  auto run = [&](unsigned w) {
    auto& chunk = chunks[w];
    std::unordered_map<detail::ItemKey, ItemCode> local;
    std::vector<detail::ItemKey> keys;
    const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
    for (std::size_t i = lo; i < hi && !overflow.load(std::memory_order_relaxed); ++i) {
      std::size_t produced = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || !detail::passes_filter(closed[i], closed[j], opts.pair_filter)) continue;
        detail::pair_keys(closed[i], closed[j], keys);
        EncodedTransaction t{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), {}};
        t.items.reserve(keys.size());
        for (auto k : keys) {
          auto [it, inserted] = local.try_emplace(k, static_cast<ItemCode>(chunk.local_keys.size()));
          if (inserted) chunk.local_keys.push_back(k);
          t.items.push_back(it->second);
        }
        produced += keys.size();
        chunk.rows.push_back(std::move(t));
      }
      if (total_items.fetch_add(produced) + produced > opts.max_items) overflow = true;
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  if (overflow)
    throw TransactionCapError("transaction database exceeds " + std::to_string(opts.max_items) +
                     " items; stream it to a FIMI file instead");

  ItemDictionary dict;
  std::vector<EncodedTransaction> rows;
  std::size_t row_count = 0;
  for (const auto& c : chunks) row_count += c.rows.size();
  rows.reserve(row_count);
  for (auto& chunk : chunks) {
    std::vector<ItemCode> remap(chunk.local_keys.size());
    for (std::size_t k = 0; k < chunk.local_keys.size(); ++k)
      remap[k] = dict.intern(detail::unpack(chunk.local_keys[k], cb.ontology()));
    for (auto& t : chunk.rows) {
      for (auto& code : t.items) code = remap[code];
      std::sort(t.items.begin(), t.items.end());
      rows.push_back(std::move(t));
    }
    chunk = {};
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& c : cb.cases()) ids.push_back(c.id);
  return TransactionDb(std::move(ids), std::move(rows), std::move(dict));
}

// ---------------------------------------------------------------------------
// FIMI: one line per transaction, ascending codes separated by single spaces.

inline json dictionary_sidecar(const ItemDictionary& dict) {
  json out = json::array();
  for (std::size_t code = 0; code < dict.size(); ++code)
    out.push_back({{"code", code}, {"item", dict.item(static_cast<ItemCode>(code)).str()}});
  return out;
}

namespace detail {

inline void write_line(std::ostream& sink, const std::vector<ItemCode>& codes) {
  for (std::size_t k = 0; k < codes.size(); ++k) {
    if (k) sink.put(' ');
    sink << codes[k];
  }
  sink.put('\n');
}

}  // namespace detail

inline json export_fimi(const TransactionDb& db, std::ostream& sink) {
  if (db.empty()) throw ValidationError("cannot export an empty transaction database");
  for (const auto& t : db.rows()) detail::write_line(sink, t.items);
  if (!sink) throw IoError("write failure while exporting FIMI");
  return dictionary_sidecar(db.dictionary());
}

// Writes the same lines and dictionary as export_fimi(build_transaction_db(cb))
// without materializing the database.
inline json stream_fimi(const CaseBase& cb, std::ostream& sink, const BuildOptions& opts = {}) {
  const auto n = cb.size();
  if (n < 2) throw ValidationError("case base needs at least 2 cases, has " + std::to_string(n));
  const auto closed = detail::close_all(cb);
  ItemDictionary dict;
  std::unordered_map<detail::ItemKey, ItemCode> codes;
  std::vector<detail::ItemKey> keys;
  std::vector<ItemCode> line;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !detail::passes_filter(closed[i], closed[j], opts.pair_filter)) continue;
      detail::pair_keys(closed[i], closed[j], keys);
      line.clear();
      for (auto k : keys) {
        auto it = codes.find(k);
        if (it == codes.end()) it = codes.emplace(k, dict.intern(detail::unpack(k, cb.ontology()))).first;
        line.push_back(it->second);
      }
      std::sort(line.begin(), line.end());
      detail::write_line(sink, line);
    }
  if (!sink) throw IoError("write failure while streaming FIMI");
  return dictionary_sidecar(dict);
}

inline ItemDictionary dictionary_from_sidecar(const json& sidecar) {
  if (!sidecar.is_array()) throw ParseError("dictionary sidecar must be an array");
  std::vector<std::optional<Item>> slots(sidecar.size());
  for (const auto& e : sidecar) {
    const auto& code = detail::member(e, "code", "sidecar entry");
    if (!code.is_number_unsigned() || code.get<std::size_t>() >= slots.size())
      throw ParseError("sidecar codes must be dense 0..n-1");
    auto& slot = slots[code.get<std::size_t>()];
    if (slot) throw ParseError("duplicate sidecar code " + code.dump());
    slot = Item::parse(detail::as_string(detail::member(e, "item", "sidecar entry"), "sidecar item"));
  }
  ItemDictionary dict;
  for (const auto& s : slots)
    if (dict.intern(*s) != dict.size() - 1) throw ParseError("duplicate item in sidecar: " + s->str());
  return dict;
}

inline TransactionDb read_fimi(std::istream& in, const json& sidecar) {
  auto dict = dictionary_from_sidecar(sidecar);
  std::vector<EncodedTransaction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    EncodedTransaction t;
    std::istringstream ss(line);
    std::string token;
    while (ss >> token) {
      std::uint64_t code = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), code);
      if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad item code '" + token + "'");
      if (code >= dict.size())
        throw ParseError("line " + std::to_string(line_no) + ": code " + token + " not in dictionary");
      t.items.push_back(static_cast<ItemCode>(code));
    }
    std::sort(t.items.begin(), t.items.end());
    if (std::adjacent_find(t.items.begin(), t.items.end()) != t.items.end())
      throw ParseError("line " + std::to_string(line_no) + ": duplicate item code");
    rows.push_back(std::move(t));
  }
  return TransactionDb({}, std::move(rows), std::move(dict));
}

}  // namespace akd
