#pragma once

// Frequent closed itemset mining over a TransactionDb.
//
// mine_closed_frequent() is a vertical itemset/tidset search in the style of
// CHARM: classes of itemset-tidset pairs are extended
// depth-first, and the four tidset relations between siblings decide whether
// a sibling is folded into the current itemset, removed, or spawns a child
// class. Candidate closed sets go through a registry keyed by
// (support count, tidset hash); entries under one key are merged when they are
// proven to share the same cover, so the registry converges on exactly one
// itemset per cover (its closure) regardless of exploration order. That makes
// the top-level classes independent and lets them run on several workers.
//
// brute_force_fcis() enumerates the full powerset and is the oracle for tests.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "akd/errors.hpp"
#include "akd/rational.hpp"
#include "akd/transactions.hpp"

namespace akd {

using Itemset = std::vector<ItemCode>;  // ascending, duplicate-free

struct Fci {
  std::size_t id = 0;
  Itemset items;
  std::uint64_t count = 0;
  Rational support;  // count / |db|, unreduced
  std::vector<std::size_t> parents;
  std::vector<std::size_t> children;
  friend bool operator==(const Fci& a, const Fci& b) {
    return a.id == b.id && a.items == b.items && a.count == b.count && a.support.num == b.support.num &&
           a.support.den == b.support.den && a.parents == b.parents && a.children == b.children;
  }
};

inline std::uint64_t cover_count(const Itemset& items, const TransactionDb& db) {
  std::uint64_t c = 0;
  for (const auto& t : db.rows())
    if (std::includes(t.items.begin(), t.items.end(), items.begin(), items.end())) ++c;
  return c;
}

inline Rational support(const Itemset& items, const TransactionDb& db) {
  if (db.empty()) throw ValidationError("support on an empty database");
  return {cover_count(items, db), db.size()};
}

// True iff the intersection of all transactions containing `items` is `items`.
inline bool is_closed(const Itemset& items, const TransactionDb& db) {
  if (db.empty()) throw ValidationError("is_closed on an empty database");
  bool any = false;
  Itemset common;
  Itemset scratch;
  for (const auto& t : db.rows()) {
    if (!std::includes(t.items.begin(), t.items.end(), items.begin(), items.end())) continue;
    if (!any) {
      common = t.items;
      any = true;
    } else {
      scratch.clear();
      std::set_intersection(common.begin(), common.end(), t.items.begin(), t.items.end(), std::back_inserter(scratch));
      common.swap(scratch);
    }
    if (common.size() == items.size()) return true;
  }
  if (!any) throw ValidationError("closedness undefined for an itemset with empty cover");
  return common == items;
}

struct MineOptions {
  unsigned workers = 1;
  std::size_t max_fcis = 5'000'000;
};

namespace detail {

using Tidset = std::vector<std::uint32_t>;

inline void intersect(const Tidset& a, const Tidset& b, Tidset& out) {
  out.clear();
  out.reserve(std::min(a.size(), b.size()));
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else { out.push_back(*i); ++i; ++j; }
  }
}

inline std::size_t intersect_count(const Tidset& a, const Tidset& b) {
  std::size_t c = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else { ++c; ++i; ++j; }
  }
  return c;
}

inline std::uint64_t hash_tids(const Tidset& t) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ t.size();
  for (auto v : t) {
    std::uint64_t z = v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    h ^= z ^ (z >> 31);
  }
  return h;
}

inline Itemset unite(const Itemset& a, const Itemset& b) {
  Itemset out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

class VerticalDb {
 public:
  explicit VerticalDb(const TransactionDb& db) : tids_(db.dictionary().size()) {
    for (std::uint32_t row = 0; row < db.size(); ++row)
      for (auto code : db.rows()[row].items) tids_[code].push_back(row);
  }

  const Tidset& tids(ItemCode code) const { return tids_[code]; }
  std::size_t items() const noexcept { return tids_.size(); }

  std::size_t count(const Itemset& items) const {
    if (items.empty()) return std::size_t(-1);
    std::vector<ItemCode> order(items);
    std::sort(order.begin(), order.end(), [&](ItemCode a, ItemCode b) { return tids_[a].size() < tids_[b].size(); });
    Tidset acc = tids_[order[0]];
    Tidset next;
    for (std::size_t k = 1; k < order.size() && !acc.empty(); ++k) {
      intersect(acc, tids_[order[k]], next);
      acc.swap(next);
    }
    return acc.size();
  }

 private:
  std::vector<Tidset> tids_;
};

// One entry per distinct cover. Entries sharing (count, hash) are compared:
// a subset with equal count has the same cover; otherwise the union is
// re-counted on the vertical database.
class ClosedRegistry {
 public:
  explicit ClosedRegistry(const VerticalDb& vdb) : vdb_(&vdb) {}

  void add(const Itemset& items, std::uint64_t count, std::uint64_t hash) {
    auto& bucket = buckets_[Key{count, hash}];
    for (auto& entry : bucket) {
      if (std::includes(entry.begin(), entry.end(), items.begin(), items.end())) return;
      if (std::includes(items.begin(), items.end(), entry.begin(), entry.end())) {
        entry = items;
        return;
      }
      auto merged = unite(entry, items);
      if (vdb_->count(merged) == count) {
        entry = std::move(merged);
        return;
      }
    }
    bucket.push_back(items);
    ++size_;
  }

  void absorb(ClosedRegistry&& other) {
    for (auto& [key, bucket] : other.buckets_)
      for (auto& entry : bucket) add(entry, key.count, key.hash);
    other.buckets_.clear();
    other.size_ = 0;
  }

  std::size_t size() const noexcept { return size_; }

  std::vector<std::pair<Itemset, std::uint64_t>> take() {
    std::vector<std::pair<Itemset, std::uint64_t>> out;
    out.reserve(size_);
    for (auto& [key, bucket] : buckets_)
      for (auto& entry : bucket) out.emplace_back(std::move(entry), key.count);
    buckets_.clear();
    size_ = 0;
    return out;
  }

 private:
  struct Key {
    std::uint64_t count;
    std::uint64_t hash;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept { return k.hash ^ (k.count * 0x9e3779b97f4a7c15ull); }
  };

  const VerticalDb* vdb_;
  std::unordered_map<Key, std::vector<Itemset>, KeyHash> buckets_;
  std::size_t size_ = 0;
};

class CharmSearch {
 public:
  struct Node {
    Itemset ext;  // items added on top of the class prefix
    Tidset tids;
  };

  CharmSearch(std::uint64_t min_count, std::size_t max_fcis, const std::atomic<bool>& abort)
      : min_count_(min_count), max_fcis_(max_fcis), abort_(abort) {}

  // Processes klass[i] of a class whose members j < i may already have been
  // folded or removed; `skip(j)` reports members removed before i's turn.
  template <class Skip>
  void process(const std::vector<Node>& klass, std::size_t i, const Itemset& prefix, std::vector<char>& removed,
               Skip&& skip, ClosedRegistry& registry) {
    Itemset x = unite(prefix, klass[i].ext);
    const Tidset& ti = klass[i].tids;
    std::vector<Node> children;
    Tidset y;
    for (std::size_t j = i + 1; j < klass.size(); ++j) {
      if (removed[j] || skip(j)) continue;
      const Tidset& tj = klass[j].tids;
      intersect(ti, tj, y);
      if (y.size() < min_count_) continue;
      const bool covers_i = y.size() == ti.size();
      const bool covers_j = y.size() == tj.size();
      if (covers_i && covers_j) {
        removed[j] = 1;
        x = unite(x, klass[j].ext);
      } else if (covers_i) {
        x = unite(x, klass[j].ext);
      } else if (covers_j) {
        removed[j] = 1;
        children.push_back({klass[j].ext, std::move(y)});
        y = {};
      } else {
        children.push_back({klass[j].ext, std::move(y)});
        y = {};
      }
    }
    if (!children.empty()) extend(children, x, registry);
    registry.add(x, ti.size(), hash_tids(ti));
    if (registry.size() > max_fcis_) throw GuardError("more than " + std::to_string(max_fcis_) + " closed itemsets");
  }

  void extend(std::vector<Node>& klass, const Itemset& prefix, ClosedRegistry& registry) {
    if (abort_.load(std::memory_order_relaxed)) return;
    std::stable_sort(klass.begin(), klass.end(),
                     [](const Node& a, const Node& b) { return a.tids.size() < b.tids.size(); });
    std::vector<char> removed(klass.size(), 0);
    for (std::size_t i = 0; i < klass.size(); ++i) {
      if (removed[i]) continue;
      process(klass, i, prefix, removed, [](std::size_t) { return false; }, registry);
    }
  }

 private:
  std::uint64_t min_count_;
  std::size_t max_fcis_;
  const std::atomic<bool>& abort_;
};

// Rank of each code in canonical Item order.
inline std::vector<std::size_t> canonical_rank(const ItemDictionary& dict) {
  std::vector<ItemCode> order(dict.size());
  std::iota(order.begin(), order.end(), ItemCode{0});
  std::sort(order.begin(), order.end(), [&](ItemCode a, ItemCode b) { return dict.item(a) < dict.item(b); });
  std::vector<std::size_t> rank(dict.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

}  // namespace detail

// Parents/children = immediate subset/superset relation within `fcis`.
// Links refer to Fci::id.
inline void lattice_links(std::vector<Fci>& fcis) {
  const std::size_t f = fcis.size();
  ItemCode max_code = 0;
  for (auto& x : fcis) {
    x.parents.clear();
    x.children.clear();
    if (!x.items.empty()) max_code = std::max(max_code, x.items.back());
  }
  std::vector<std::vector<std::size_t>> postings(static_cast<std::size_t>(max_code) + 1);
  std::optional<std::size_t> empty_set;
  for (std::size_t k = 0; k < f; ++k) {
    if (fcis[k].items.empty()) empty_set = k;
    for (auto code : fcis[k].items) postings[code].push_back(k);
  }

  std::vector<std::uint32_t> hits(f, 0);
  std::vector<std::size_t> touched, subsets, kept;
  for (std::size_t j = 0; j < f; ++j) {
    const auto& target = fcis[j].items;
    touched.clear();
    for (auto code : target)
      for (auto k : postings[code]) {
        if (hits[k]++ == 0) touched.push_back(k);
      }
    subsets.clear();
    for (auto k : touched) {
      if (hits[k] == fcis[k].items.size() && fcis[k].items.size() < target.size()) subsets.push_back(k);
      hits[k] = 0;
    }
    if (empty_set && !target.empty()) subsets.push_back(*empty_set);
    std::sort(subsets.begin(), subsets.end(), [&](std::size_t a, std::size_t b) {
      return fcis[a].items.size() != fcis[b].items.size() ? fcis[a].items.size() > fcis[b].items.size() : a < b;
    });
    kept.clear();
    for (auto s : subsets) {
      const auto& cand = fcis[s].items;
      const bool covered = std::any_of(kept.begin(), kept.end(), [&](std::size_t m) {
        return std::includes(fcis[m].items.begin(), fcis[m].items.end(), cand.begin(), cand.end());
      });
      if (!covered) kept.push_back(s);
    }
    for (auto p : kept) {
      fcis[j].parents.push_back(fcis[p].id);
      fcis[p].children.push_back(fcis[j].id);
    }
  }
  for (auto& x : fcis) {
    std::sort(x.parents.begin(), x.parents.end());
    std::sort(x.children.begin(), x.children.end());
  }
}

// Sorts by (descending count, canonical item sequence), assigns ids in that
// order and fills lattice links.
inline void canonicalize(std::vector<Fci>& fcis, const ItemDictionary& dict) {
  const auto rank = detail::canonical_rank(dict);
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> keys;
  keys.reserve(fcis.size());
  for (std::size_t k = 0; k < fcis.size(); ++k) {
    std::vector<std::size_t> r;
    for (auto code : fcis[k].items) r.push_back(rank[code]);
    std::sort(r.begin(), r.end());
    keys.emplace_back(std::move(r), k);
  }
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    const auto ca = fcis[a.second].count, cb = fcis[b.second].count;
    if (ca != cb) return ca > cb;
    return a.first < b.first;
  });
  std::vector<Fci> sorted;
  sorted.reserve(fcis.size());
  for (const auto& [r, k] : keys) {
    sorted.push_back(std::move(fcis[k]));
    sorted.back().id = sorted.size() - 1;
  }
  fcis = std::move(sorted);
  lattice_links(fcis);
}

inline std::vector<Fci> mine_closed_frequent(const TransactionDb& db, const SupportThreshold& sigma,
                                             const MineOptions& opts = {}) {
  if (db.empty()) throw ValidationError("cannot mine an empty database");
  const std::uint64_t n = db.size();
  const std::uint64_t min_count = sigma.min_count(n);
  const detail::VerticalDb vdb(db);

  std::vector<detail::CharmSearch::Node> top;
  bool some_item_everywhere = false;
  for (ItemCode code = 0; code < vdb.items(); ++code) {
    const auto& t = vdb.tids(code);
    if (t.size() == n) some_item_everywhere = true;
    if (t.size() >= min_count) top.push_back({{code}, t});
  }
  std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.tids.size() < b.tids.size(); });

  // Sequential pre-pass fixing which top-level members a sequential search
  // would have removed before each index is processed.
  constexpr std::size_t kNever = std::size_t(-1);
  std::vector<std::size_t> removed_by(top.size(), kNever);
  for (std::size_t i = 0; i < top.size(); ++i) {
    if (removed_by[i] != kNever) continue;
    for (std::size_t j = i + 1; j < top.size(); ++j) {
      if (removed_by[j] != kNever) continue;
      if (detail::intersect_count(top[i].tids, top[j].tids) == top[j].tids.size()) removed_by[j] = i;
    }
  }

  const unsigned workers = std::max(1u, opts.workers);
  std::vector<detail::ClosedRegistry> registries(workers, detail::ClosedRegistry(vdb));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto run = [&](unsigned w) {
    detail::CharmSearch search(min_count, opts.max_fcis, abort);
    try {
      for (std::size_t i; (i = next.fetch_add(1)) < top.size() && !abort.load();) {
        if (removed_by[i] != kNever) continue;
        std::vector<char> removed(top.size(), 0);
        search.process(top, i, {}, removed, [&](std::size_t j) { return removed_by[j] < i; }, registries[w]);
      }
    } catch (...) {
      abort = true;
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  if (failure) std::rethrow_exception(failure);

  for (unsigned w = 1; w < workers; ++w) registries[0].absorb(std::move(registries[w]));

  std::vector<Fci> out;
  for (auto& [items, count] : registries[0].take()) out.push_back({0, std::move(items), count, {count, n}, {}, {}});
  if (!some_item_everywhere) out.push_back({0, {}, n, {n, n}, {}, {}});
  if (out.size() > opts.max_fcis) throw GuardError("more than " + std::to_string(opts.max_fcis) + " closed itemsets");
  canonicalize(out, db.dictionary());
  return out;
}

inline std::vector<Fci> brute_force_fcis(const TransactionDb& db, const SupportThreshold& sigma) {
  if (db.empty()) throw ValidationError("cannot mine an empty database");
  std::vector<ItemCode> universe;
  for (const auto& t : db.rows()) universe.insert(universe.end(), t.items.begin(), t.items.end());
  std::sort(universe.begin(), universe.end());
  universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
  if (universe.size() > 20)
    throw GuardError("brute force limited to 20 distinct items, database has " + std::to_string(universe.size()));

  std::vector<std::uint32_t> masks;
  for (const auto& t : db.rows()) {
    std::uint32_t m = 0;
    for (auto code : t.items)
      m |= 1u << (std::lower_bound(universe.begin(), universe.end(), code) - universe.begin());
    masks.push_back(m);
  }
  const std::uint64_t n = db.size();
  const auto min_count = sigma.min_count(n);
  const std::uint32_t full = universe.size() == 32 ? ~0u : ((1u << universe.size()) - 1);
  std::vector<Fci> out;
  for (std::uint64_t cand = 0; cand <= full; ++cand) {
    const auto c = static_cast<std::uint32_t>(cand);
    std::uint64_t count = 0;
    std::uint32_t common = full;
    for (auto m : masks)
      if ((m & c) == c) {
        ++count;
        common &= m;
      }
    if (count < min_count || common != c) continue;
    Itemset items;
    for (std::size_t b = 0; b < universe.size(); ++b)
      if (c & (1u << b)) items.push_back(universe[b]);
    out.push_back({0, std::move(items), count, {count, n}, {}, {}});
  }
  canonicalize(out, db.dictionary());
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines: {"id", "items", "count", "support", "parents", "children"}

inline json to_json(const Fci& f, const ItemDictionary& dict) {
  std::vector<Item> items;
  for (auto code : f.items) items.push_back(dict.item(code));
  std::sort(items.begin(), items.end());
  json arr = json::array();
  for (const auto& it : items) arr.push_back(it.str());
  return {{"id", f.id},         {"items", std::move(arr)},  {"count", f.count},
          {"support", f.support.str()}, {"parents", f.parents}, {"children", f.children}};
}

// Items are interned into `dict`.
inline Fci fci_from_json(const json& j, ItemDictionary& dict) {
  Fci f;
  f.id = detail::member(j, "id", "fci").get<std::size_t>();
  for (const auto& s : detail::member(j, "items", "fci"))
    f.items.push_back(dict.intern(Item::parse(detail::as_string(s, "fci item"))));
  std::sort(f.items.begin(), f.items.end());
  f.count = detail::member(j, "count", "fci").get<std::uint64_t>();
  const auto sup = detail::as_string(detail::member(j, "support", "fci"), "fci support");
  const auto slash = sup.find('/');
  if (slash == std::string::npos) throw ParseError("fci support must be 'count/N'");
  f.support = {detail::parse_u64(std::string_view(sup).substr(0, slash), sup),
               detail::parse_u64(std::string_view(sup).substr(slash + 1), sup)};
  f.parents = detail::member(j, "parents", "fci").get<std::vector<std::size_t>>();
  f.children = detail::member(j, "children", "fci").get<std::vector<std::size_t>>();
  return f;
}

}  // namespace akd
