#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "akd/knowledge_store.hpp"
#include "support/fixtures.hpp"

using namespace akd;
using namespace akd::testing;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("akd_ks_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

Workspace iex_workspace() {
  auto cb = iex_case_base();
  auto db = build_transaction_db(cb);
  const auto sigma = SupportThreshold::parse("0.3");
  auto fcis = mine_closed_frequent(db, sigma);
  return make_workspace(std::move(cb), sigma, std::nullopt, db.size(), std::move(fcis), db.dictionary());
}

RuleId iex_rule(const Workspace& w) {
  for (const auto& r : w.rules)
    if (r.pb_conditions == items({"pb:-:a", "pb:=:c", "pb:+:d"})) return r.id;
  ADD_FAILURE() << "no Iex rule";
  return -1;
}

void overwrite(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

}  // namespace

TEST(Workspace, CandidatesComeFromSolutionBearingFcis) {
  auto w = iex_workspace();
  ASSERT_FALSE(w.rules.empty());
  for (std::size_t k = 0; k < w.rules.size(); ++k) {
    EXPECT_EQ(w.rules[k].id, static_cast<RuleId>(k));
    EXPECT_EQ(w.rules[k].status, RuleStatus::Candidate);
    EXPECT_LT(w.rules[k].source_fci, w.fcis.size());
  }
  for (std::size_t k = 1; k < w.rules.size(); ++k) EXPECT_LT(w.rules[k - 1].source_fci, w.rules[k].source_fci);
  // Dictionary is canonical: codes ascend with item order.
  for (ItemCode c = 1; c < w.dictionary.size(); ++c) EXPECT_LT(w.dictionary.item(c - 1), w.dictionary.item(c));
}

TEST(RecordEvent, AcceptThenReopen) {
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  w = record_event(w, make_event(w, id, ReviewAction::Accepted, {{"explanation", "swap A for C"}}, "ana"));
  EXPECT_EQ(w.rule(id)->status, RuleStatus::Accepted);
  EXPECT_EQ(w.rule(id)->explanation, "swap A for C");
  EXPECT_EQ(w.events.size(), 1u);
  EXPECT_EQ(w.events[0].sequence, 1u);
  EXPECT_EQ(w.events[0].actor, "ana");
  w = record_event(w, make_event(w, id, ReviewAction::Reopened, nullptr, "ana"));
  EXPECT_EQ(w.rule(id)->status, RuleStatus::Candidate);
}

TEST(RecordEvent, IllegalTransitions) {
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  EXPECT_THROW(record_event(w, make_event(w, id, ReviewAction::Reopened, nullptr, "a")), TransitionError);
  // Empty explanation on accept.
  EXPECT_THROW(record_event(w, make_event(w, id, ReviewAction::Accepted, nullptr, "a")), ValidationError);
  w = record_event(w, make_event(w, id, ReviewAction::Rejected, nullptr, "a"));
  EXPECT_THROW(record_event(w, make_event(w, id, ReviewAction::Accepted, {{"explanation", "x"}}, "a")),
               TransitionError);
  EXPECT_THROW(record_event(w, make_event(w, id, ReviewAction::Edited, {{"explanation", "x"}}, "a")),
               TransitionError);
  // Hand-built payload claiming the wrong status.
  auto e = make_event(w, id, ReviewAction::Reopened, nullptr, "a");
  e.payload.status = RuleStatus::Accepted;
  e.payload.explanation = "x";
  EXPECT_THROW(record_event(w, e), TransitionError);
}

TEST(RecordEvent, StaleSequence) {
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  auto e = make_event(w, id, ReviewAction::Edited, {{"explanation", "note"}}, "a");
  w = record_event(w, e);
  EXPECT_THROW(record_event(w, e), StaleSequenceError);
  e.sequence = 5;
  EXPECT_THROW(record_event(w, e), StaleSequenceError);
}

TEST(RecordEvent, EditsKeepSourceFci) {
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  const auto fci = w.rule(id)->source_fci;
  w = record_event(w, make_event(w, id, ReviewAction::Edited,
                                 {{"pb_conditions", {"pb:-:a"}}, {"sol_add", {"C", "B"}}, {"sol_keep", json::array()}},
                                 "a"));
  EXPECT_EQ(w.rule(id)->source_fci, fci);
  EXPECT_EQ(w.rule(id)->pb_conditions, items({"pb:-:a"}));
  EXPECT_EQ(w.rule(id)->sol_add, props({"B", "C"}));
  auto e = make_event(w, id, ReviewAction::Edited, nullptr, "a");
  e.payload.source_fci = fci + 1;
  EXPECT_THROW(record_event(w, e), ValidationError);
}

TEST(RecordEvent, EditValidation) {
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  EXPECT_THROW(make_event(w, id, ReviewAction::Edited, {{"status", "accepted"}}, "a"), ValidationError);
  EXPECT_THROW(make_event(w, id, ReviewAction::Edited, {{"sol_add", {"Z"}}}, "a"), UnknownPropertyError);
  EXPECT_THROW(make_event(w, 9999, ReviewAction::Edited, nullptr, "a"), ValidationError);
  // keep and remove overlap
  EXPECT_THROW(record_event(w, make_event(w, id, ReviewAction::Edited, {{"sol_keep", {"A"}}}, "a")),
               ValidationError);
}

TEST(RecordEvent, CreatedRuleGetsNextId) {
  auto w = iex_workspace();
  const auto before = w.rules.back().id;
  w = record_event(w, make_event(w, 0, ReviewAction::Created,
                                 {{"source_fci", 0}, {"pb_conditions", {"pb:+:d"}}, {"sol_add", {"C"}}}, "a"));
  EXPECT_EQ(w.rules.back().id, before + 1);
  EXPECT_EQ(w.rules.back().status, RuleStatus::Candidate);
  EXPECT_THROW(make_event(w, 0, ReviewAction::Created, {{"source_fci", 100000}}, "a"), ValidationError);
  auto bad = make_event(w, 0, ReviewAction::Created, {{"source_fci", 0}}, "a");
  bad.payload.source_fci = 100000;
  EXPECT_THROW(record_event(w, bad), ValidationError);
}

TEST(Persistence, RoundTripIsIdentity) {
  TempDir dir;
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  w = record_event(w, make_event(w, id, ReviewAction::Accepted, {{"explanation", "because"}}, "ana", "2026-01-01T00:00:00Z"));
  save_workspace(w, dir.path);
  for (const char* f : {"casebase.json", "fcis.jsonl", "rules.jsonl", "events.jsonl", "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir.path / f)) << f;
  const auto loaded = load_workspace(dir.path);
  EXPECT_EQ(loaded, w);
  EXPECT_EQ(events_etag(loaded), events_etag(w));
  const auto manifest = json::parse(detail::read_file(dir.path / "manifest.json"));
  EXPECT_EQ(manifest["sigma"], "3/10");
  EXPECT_EQ(manifest["n_cases"], 6);
  EXPECT_EQ(manifest["n_transactions"], 30);
  EXPECT_EQ(manifest["n_rules"], w.rules.size());
}

TEST(Persistence, SavingTwiceIsByteStable) {
  TempDir a, b;
  auto w = iex_workspace();
  save_workspace(w, a.path);
  save_workspace(load_workspace(a.path), b.path);
  for (const char* f : {"casebase.json", "fcis.jsonl", "rules.jsonl", "events.jsonl", "manifest.json"})
    EXPECT_EQ(detail::read_file(a.path / f), detail::read_file(b.path / f)) << f;
}

TEST(Persistence, TamperedFileFailsHashCheck) {
  TempDir dir;
  save_workspace(iex_workspace(), dir.path);
  overwrite(dir.path / "rules.jsonl", detail::read_file(dir.path / "rules.jsonl") + "\n");
  EXPECT_THROW(load_workspace(dir.path), IntegrityError);
}

TEST(Persistence, ReplayDivergenceNamesRule) {
  TempDir dir;
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  auto forged = w;
  forged.rules[static_cast<std::size_t>(id)].status = RuleStatus::Rejected;
  save_workspace(forged, dir.path);
  try {
    load_workspace(dir.path);
    FAIL() << "expected ReplayError";
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.rule_id(), id);
  }
}

TEST(Persistence, ReplayRejectsIllegalLoggedEvent) {
  TempDir dir;
  auto w = iex_workspace();
  const auto id = iex_rule(w);
  auto e = make_event(w, id, ReviewAction::Reopened, nullptr, "a");
  w.events.push_back(e);  // bypasses record_event
  save_workspace(w, dir.path);
  try {
    load_workspace(dir.path);
    FAIL() << "expected ReplayError";
  } catch (const ReplayError& err) {
    EXPECT_EQ(err.rule_id(), id);
  }
}

TEST(Persistence, ConcurrentModificationDetected) {
  TempDir dir;
  auto w = iex_workspace();
  const auto h0 = save_workspace(w, dir.path);
  EXPECT_EQ(h0, manifest_hash(dir.path));
  const auto id = iex_rule(w);
  auto w1 = record_event(w, make_event(w, id, ReviewAction::Rejected, nullptr, "one"));
  auto w2 = record_event(w, make_event(w, id, ReviewAction::Edited, {{"explanation", "e"}}, "two"));
  const auto h1 = save_workspace(w1, dir.path, h0);
  EXPECT_THROW(save_workspace(w2, dir.path, h0), IntegrityError);
  EXPECT_EQ(load_workspace(dir.path), w1);
  EXPECT_NO_THROW(save_workspace(w1, dir.path, h1));
}

TEST(Persistence, SingleWriterLock) {
  TempDir dir;
  save_workspace(iex_workspace(), dir.path);
  WorkspaceLock held(dir.path);
  EXPECT_THROW(save_workspace(iex_workspace(), dir.path), IoError);
}

TEST(Persistence, MissingFile) {
  TempDir dir;
  save_workspace(iex_workspace(), dir.path);
  std::filesystem::remove(dir.path / "events.jsonl");
  EXPECT_THROW(load_workspace(dir.path), IoError);
}

TEST(Persistence, RandomReviewSessionsRoundTrip) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    TempDir dir;
    auto cb = random_case_base(rng, 8, 6, 0.2, 0.4);
    auto db = build_transaction_db(cb);
    const auto sigma = SupportThreshold::parse("1/4");
    auto w = make_workspace(cb, sigma, std::nullopt, db.size(), mine_closed_frequent(db, sigma), db.dictionary());
    if (w.rules.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, w.rules.size() - 1);
    std::uniform_int_distribution<int> act(0, 3);
    for (int step = 0; step < 30; ++step) {
      const auto id = w.rules[pick(rng)].id;
      const ReviewAction a[] = {ReviewAction::Edited, ReviewAction::Accepted, ReviewAction::Rejected,
                                ReviewAction::Reopened};
      try {
        w = record_event(w, make_event(w, id, a[act(rng)], {{"explanation", "step " + std::to_string(step)}}, "r"));
      } catch (const TransitionError&) {
      } catch (const ValidationError&) {
      }
    }
    save_workspace(w, dir.path);
    EXPECT_EQ(load_workspace(dir.path), w) << "trial " << trial;
  }
}
