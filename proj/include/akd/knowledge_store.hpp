#pragma once

// Workspace persistence: mined FCIs, the rule table and the append-only log of
// analyst review events. The rule table is always the fold of the events over
// the candidates generated from the FCIs; load_workspace() re-checks that.
//
// Directory layout:
//   casebase.json  fcis.jsonl  rules.jsonl  events.jsonl  manifest.json
// manifest.json is written last and carries SHA-256 hashes of the other four.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "akd/case_model.hpp"
#include "akd/errors.hpp"
#include "akd/miner.hpp"
#include "akd/rational.hpp"
#include "akd/rule_engine.hpp"
#include "akd/transactions.hpp"

namespace akd {

enum class ReviewAction { Created, Edited, Accepted, Rejected, Reopened };

inline std::string_view to_string(ReviewAction a) {
  switch (a) {
    case ReviewAction::Created: return "created";
    case ReviewAction::Edited: return "edited";
    case ReviewAction::Accepted: return "accepted";
    case ReviewAction::Rejected: return "rejected";
    case ReviewAction::Reopened: return "reopened";
  }
  return "?";
}

inline ReviewAction parse_review_action(std::string_view s) {
  for (auto a : {ReviewAction::Created, ReviewAction::Edited, ReviewAction::Accepted, ReviewAction::Rejected,
                 ReviewAction::Reopened})
    if (to_string(a) == s) return a;
  throw ParseError("unknown review action '" + std::string(s) + "'");
}

struct ReviewEvent {
  std::uint64_t sequence = 0;
  std::string timestamp;  // UTC, ISO 8601
  RuleId rule_id = 0;
  ReviewAction action = ReviewAction::Edited;
  AdaptationRule payload;  // rule snapshot after the action
  std::string actor;
  friend bool operator==(const ReviewEvent&, const ReviewEvent&) = default;
};

struct Workspace {
  CaseBase case_base;
  SupportThreshold sigma{Rational{0, 1}};
  std::optional<Rational> pair_filter;
  std::size_t n_transactions = 0;
  ItemDictionary dictionary;  // FCI items, codes in canonical item order
  std::vector<Fci> fcis;      // indexed by id
  std::vector<AdaptationRule> rules;  // ascending id
  std::vector<ReviewEvent> events;

  const AdaptationRule* rule(RuleId id) const {
    auto it = std::lower_bound(rules.begin(), rules.end(), id, [](const AdaptationRule& r, RuleId v) { return r.id < v; });
    return it != rules.end() && it->id == id ? &*it : nullptr;
  }

  std::uint64_t last_sequence() const { return events.empty() ? 0 : events.back().sequence; }

  friend bool operator==(const Workspace& a, const Workspace& b) {
    return a.case_base == b.case_base && a.sigma == b.sigma && a.pair_filter.has_value() == b.pair_filter.has_value() &&
           (!a.pair_filter || (a.pair_filter->num == b.pair_filter->num && a.pair_filter->den == b.pair_filter->den)) &&
           a.n_transactions == b.n_transactions && a.dictionary == b.dictionary && a.fcis == b.fcis &&
           a.rules == b.rules && a.events == b.events;
  }
};

// One candidate per FCI with a solution item, rule ids 0, 1, ... in FCI order.
inline std::vector<AdaptationRule> initial_candidates(const std::vector<Fci>& fcis, const ItemDictionary& dict) {
  std::vector<AdaptationRule> out;
  for (const auto& f : fcis) {
    const bool has_sol = std::any_of(f.items.begin(), f.items.end(),
                                     [&](ItemCode c) { return dict.item(c).facet == Facet::Sol; });
    if (has_sol) out.push_back(fci_to_rule_candidate(f, dict, static_cast<RuleId>(out.size())));
  }
  return out;
}

// Re-encodes `fcis` (coded against `source`) into a dictionary holding only
// their items, in canonical order, and derives the candidate rules.
inline Workspace make_workspace(CaseBase cb, SupportThreshold sigma, std::optional<Rational> pair_filter,
                                std::size_t n_transactions, std::vector<Fci> fcis, const ItemDictionary& source) {
  std::set<Item> used;
  for (const auto& f : fcis)
    for (auto c : f.items) used.insert(source.item(c));
  ItemDictionary dict;
  for (const auto& i : used) dict.intern(i);
  for (auto& f : fcis) {
    for (auto& c : f.items) c = *dict.find(source.item(c));
    std::sort(f.items.begin(), f.items.end());
  }
  Workspace w{std::move(cb), sigma, pair_filter, n_transactions, std::move(dict), std::move(fcis), {}, {}};
  w.rules = initial_candidates(w.fcis, w.dictionary);
  return w;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

// Applies one event to the rule table; throws TransitionError or
// ValidationError on an illegal event.
inline void apply_event(std::vector<AdaptationRule>& rules, const std::vector<Fci>& fcis, const ReviewEvent& e) {
  const auto& p = e.payload;
  if (p.id != e.rule_id)
    throw ValidationError("event " + std::to_string(e.sequence) + " payload is rule " + std::to_string(p.id) +
                          ", not " + std::to_string(e.rule_id));
  validate(p);
  auto it = std::lower_bound(rules.begin(), rules.end(), e.rule_id,
                             [](const AdaptationRule& r, RuleId v) { return r.id < v; });
  const bool exists = it != rules.end() && it->id == e.rule_id;

  if (e.action == ReviewAction::Created) {
    if (exists) throw TransitionError("rule " + std::to_string(e.rule_id) + " already exists");
    if (p.source_fci >= fcis.size())
      throw ValidationError("rule " + std::to_string(p.id) + " cites unknown FCI " + std::to_string(p.source_fci));
    if (p.status != RuleStatus::Candidate) throw TransitionError("created rules start as candidates");
    rules.insert(it, p);
    return;
  }
  if (!exists) throw ValidationError("unknown rule id " + std::to_string(e.rule_id));
  if (p.source_fci != it->source_fci)
    throw ValidationError("rule " + std::to_string(p.id) + " cannot change its source FCI");

  const auto from = it->status;
  RuleStatus allowed_from = RuleStatus::Candidate;
  RuleStatus to = RuleStatus::Candidate;
  switch (e.action) {
    case ReviewAction::Edited: break;
    case ReviewAction::Accepted: to = RuleStatus::Accepted; break;
    case ReviewAction::Rejected: to = RuleStatus::Rejected; break;
    case ReviewAction::Reopened:
      if (from == RuleStatus::Candidate) throw TransitionError("rule " + std::to_string(p.id) + " is not closed");
      allowed_from = from;
      break;
    case ReviewAction::Created: break;
  }
  if (from != allowed_from)
    throw TransitionError("cannot apply '" + std::string(to_string(e.action)) + "' to " +
                          std::string(to_string(from)) + " rule " + std::to_string(p.id));
  if (p.status != to)
    throw TransitionError("'" + std::string(to_string(e.action)) + "' must leave the rule " +
                          std::string(to_string(to)));
  *it = p;
}

}  // namespace detail

inline Workspace record_event(Workspace w, const ReviewEvent& e) {
  if (e.sequence != w.last_sequence() + 1)
    throw StaleSequenceError("event sequence " + std::to_string(e.sequence) + " is stale; expected " +
                             std::to_string(w.last_sequence() + 1));
  detail::apply_event(w.rules, w.fcis, e);
  w.events.push_back(e);
  return w;
}

// Analyst decision on rule `id`: `edits` may set pb_conditions, sol_keep,
// sol_remove, sol_add and explanation. For "created", `id` is ignored and the
// next free id is used; `edits` must then name source_fci.
inline ReviewEvent make_event(const Workspace& w, RuleId id, ReviewAction action, const json& edits,
                              std::string actor, std::string timestamp = utc_now()) {
  if (!edits.is_null() && !edits.is_object()) throw ParseError("rule edits must be an object");
  AdaptationRule r;
  if (action == ReviewAction::Created) {
    r.id = w.rules.empty() ? 0 : w.rules.back().id + 1;
    const auto src = edits.find("source_fci");
    if (src == edits.end() || !src->is_number_integer() || src->get<std::int64_t>() < 0)
      throw ValidationError("created rule needs source_fci");
    r.source_fci = src->get<std::size_t>();
    if (r.source_fci >= w.fcis.size()) throw ValidationError("unknown FCI " + std::to_string(r.source_fci));
  } else {
    const auto* current = w.rule(id);
    if (!current) throw ValidationError("unknown rule id " + std::to_string(id));
    r = *current;
  }
  if (edits.is_object()) {
    for (const auto& [key, value] : edits.items()) {
      if (key == "pb_conditions") r.pb_conditions = detail::item_set(value, "pb_conditions");
      else if (key == "sol_keep") r.sol_keep = detail::property_set(value, "sol_keep");
      else if (key == "sol_remove") r.sol_remove = detail::property_set(value, "sol_remove");
      else if (key == "sol_add") r.sol_add = detail::property_set(value, "sol_add");
      else if (key == "explanation") r.explanation = detail::as_string(value, "explanation");
      else if (key == "source_fci" && action == ReviewAction::Created) continue;
      else throw ValidationError("field '" + key + "' is not editable");
    }
  }
  switch (action) {
    case ReviewAction::Accepted: r.status = RuleStatus::Accepted; break;
    case ReviewAction::Rejected: r.status = RuleStatus::Rejected; break;
    default: r.status = RuleStatus::Candidate; break;
  }
  for (const auto& p : r.sol_keep) (void)w.case_base.ontology().require(p);
  for (const auto& p : r.sol_remove) (void)w.case_base.ontology().require(p);
  for (const auto& p : r.sol_add) (void)w.case_base.ontology().require(p);
  for (const auto& i : r.pb_conditions) (void)w.case_base.ontology().require(i.property);
  return {w.last_sequence() + 1, std::move(timestamp), r.id, action, std::move(r), std::move(actor)};
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const ReviewEvent& e) {
  return {{"sequence", e.sequence},
          {"timestamp", e.timestamp},
          {"rule_id", e.rule_id},
          {"action", std::string(to_string(e.action))},
          {"payload", to_json(e.payload)},
          {"actor", e.actor}};
}

inline ReviewEvent event_from_json(const json& j) {
  ReviewEvent e;
  e.sequence = detail::member(j, "sequence", "event").get<std::uint64_t>();
  e.timestamp = detail::as_string(detail::member(j, "timestamp", "event"), "event timestamp");
  e.rule_id = detail::member(j, "rule_id", "event").get<RuleId>();
  e.action = parse_review_action(detail::as_string(detail::member(j, "action", "event"), "event action"));
  e.payload = rule_from_json(detail::member(j, "payload", "event"));
  e.actor = detail::as_string(detail::member(j, "actor", "event"), "event actor");
  return e;
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

// Opaque version tag of the event log.
inline std::string events_etag(const Workspace& w) {
  std::string log;
  for (const auto& e : w.events) log += to_json(e).dump() + "\n";
  return sha256_hex(log).substr(0, 32);
}

namespace detail {

inline const char* const kWorkspaceFiles[] = {"casebase.json", "fcis.jsonl", "rules.jsonl", "events.jsonl"};

inline std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

inline void write_all(int fd, std::string_view data, const std::filesystem::path& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write '" + path.string() + "': " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Write to a sibling temp file, fsync, rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("open '" + tmp.string() + "': " + std::strerror(errno));
  try {
    write_all(fd, data, tmp);
    if (::fsync(fd) != 0) throw IoError("fsync '" + tmp.string() + "': " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename '" + tmp.string() + "': " + ec.message());
}

inline void sync_directory(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace detail

// Exclusive advisory lock on <dir>/.lock, released on destruction or process
// exit.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& dir) {
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("open '" + path.string() + "': " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw IoError("workspace '" + dir.string() + "' is locked by another writer");
    }
  }
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;
  ~WorkspaceLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

inline std::string manifest_hash(const std::filesystem::path& dir) {
  return sha256_hex(detail::read_file(dir / "manifest.json"));
}

// Returns the hash of the new manifest. With `expected_manifest`, the save is
// refused when the directory's current manifest differs from it (another
// writer got there first).
inline std::string save_workspace(const Workspace& w, const std::filesystem::path& dir,
                                  const std::optional<std::string>& expected_manifest = std::nullopt) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("create '" + dir.string() + "': " + ec.message());
  WorkspaceLock lock(dir);
  if (expected_manifest && std::filesystem::exists(dir / "manifest.json") &&
      manifest_hash(dir) != *expected_manifest)
    throw IntegrityError("workspace '" + dir.string() + "' was modified concurrently (manifest hash mismatch)");

  std::vector<json> fcis, rules, events;
  for (const auto& f : w.fcis) fcis.push_back(to_json(f, w.dictionary));
  for (const auto& r : w.rules) rules.push_back(to_json(r));
  for (const auto& e : w.events) events.push_back(to_json(e));
  const std::string contents[] = {to_json(w.case_base).dump(2) + "\n", detail::jsonl(fcis), detail::jsonl(rules),
                                  detail::jsonl(events)};

  json hashes = json::object();
  for (std::size_t k = 0; k < 4; ++k) {
    detail::write_file_atomic(dir / detail::kWorkspaceFiles[k], contents[k]);
    hashes[detail::kWorkspaceFiles[k]] = sha256_hex(contents[k]);
  }
  json manifest = {{"sigma", w.sigma.value().str()},
                   {"pair_filter", w.pair_filter ? json(w.pair_filter->str()) : json(nullptr)},
                   {"n_cases", w.case_base.size()},
                   {"n_transactions", w.n_transactions},
                   {"n_fcis", w.fcis.size()},
                   {"n_rules", w.rules.size()},
                   {"n_events", w.events.size()},
                   {"hashes", std::move(hashes)}};
  const auto text = manifest.dump(2) + "\n";
  detail::write_file_atomic(dir / "manifest.json", text);
  detail::sync_directory(dir);
  return sha256_hex(text);
}

inline Workspace load_workspace(const std::filesystem::path& dir) {
  for (const char* name : {"manifest.json", "casebase.json", "fcis.jsonl", "rules.jsonl", "events.jsonl"})
    if (!std::filesystem::exists(dir / name)) throw IoError("workspace file missing: " + (dir / name).string());

  const auto manifest = detail::parse_document(detail::read_file(dir / "manifest.json"));
  const auto& hashes = detail::member(manifest, "hashes", "manifest");
  std::string contents[4];
  for (std::size_t k = 0; k < 4; ++k) {
    contents[k] = detail::read_file(dir / detail::kWorkspaceFiles[k]);
    const auto expected = detail::as_string(detail::member(hashes, detail::kWorkspaceFiles[k], "manifest.hashes"),
                                            "manifest hash");
    if (sha256_hex(contents[k]) != expected)
      throw IntegrityError(std::string("hash mismatch for ") + detail::kWorkspaceFiles[k]);
  }

  auto lines = [](const std::string& text) {
    std::vector<json> out;
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) out.push_back(detail::parse_document(std::string_view(text).substr(start, end - start)));
      start = end + 1;
    }
    return out;
  };

  Workspace w;
  w.case_base = load_case_base(contents[0]);
  w.sigma = SupportThreshold::parse(detail::as_string(detail::member(manifest, "sigma", "manifest"), "sigma"));
  if (auto pf = manifest.find("pair_filter"); pf != manifest.end() && !pf->is_null())
    w.pair_filter = Rational::parse(detail::as_string(*pf, "pair_filter"));
  w.n_transactions = detail::member(manifest, "n_transactions", "manifest").get<std::size_t>();

  // Canonical dictionary: every FCI item, in item order.
  const auto fci_lines = lines(contents[1]);
  std::set<Item> used;
  for (const auto& j : fci_lines)
    for (const auto& s : detail::member(j, "items", "fci")) used.insert(Item::parse(detail::as_string(s, "fci item")));
  for (const auto& i : used) w.dictionary.intern(i);
  for (const auto& j : fci_lines) {
    w.fcis.push_back(fci_from_json(j, w.dictionary));
    if (w.fcis.back().id != w.fcis.size() - 1) throw ParseError("fcis.jsonl ids must be 0..n-1 in order");
  }
  for (const auto& j : lines(contents[2])) w.rules.push_back(rule_from_json(j));
  for (const auto& j : lines(contents[3])) w.events.push_back(event_from_json(j));

  if (detail::member(manifest, "n_fcis", "manifest").get<std::size_t>() != w.fcis.size() ||
      detail::member(manifest, "n_rules", "manifest").get<std::size_t>() != w.rules.size() ||
      detail::member(manifest, "n_cases", "manifest").get<std::size_t>() != w.case_base.size())
    throw IntegrityError("manifest counts disagree with workspace files");

  // Replay.
  auto table = initial_candidates(w.fcis, w.dictionary);
  std::uint64_t seq = 0;
  for (const auto& e : w.events) {
    if (e.sequence != seq + 1) throw ReplayError(e.rule_id, "sequence " + std::to_string(e.sequence) + " out of order");
    try {
      detail::apply_event(table, w.fcis, e);
    } catch (const ReplayError&) {
      throw;
    } catch (const Error& err) {
      throw ReplayError(e.rule_id, err.what());
    }
    seq = e.sequence;
  }
  const auto n = std::max(table.size(), w.rules.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (k < table.size() && k < w.rules.size() && table[k] == w.rules[k]) continue;
    const auto id = k < w.rules.size() ? w.rules[k].id : table[k].id;
    throw ReplayError(k < table.size() ? std::min(id, table[k].id) : id, "rule table differs from event log");
  }
  return w;
}

}  // namespace akd
