#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "akd/cli.hpp"
#include "support/fixtures.hpp"

using namespace akd;
using namespace akd::testing;

namespace {

const std::filesystem::path kData = AKD_TEST_DATA;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "akd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("akd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string iex_workspace(const TempDir& tmp) {
  const auto ws = tmp / "ws";
  const auto r = run({"mine", (kData / "iex_casebase.json").string(), "--sigma", "0.3", "--out", ws});
  EXPECT_EQ(r.code, 0) << r.err;
  return ws;
}

RuleId accept_iex_rule(const std::string& ws) {
  auto w = load_workspace(ws);
  for (const auto& r : w.rules)
    if (r.pb_conditions == items({"pb:-:a", "pb:=:c", "pb:+:d"})) {
      w = record_event(w, make_event(w, r.id, ReviewAction::Accepted,
                                     {{"explanation", "d instead of a calls for C instead of A"}}, "test"));
      save_workspace(w, ws);
      return r.id;
    }
  ADD_FAILURE() << "Iex rule missing";
  return -1;
}

}  // namespace

TEST(CliMine, IexWorkspace) {
  TempDir tmp;
  const auto ws = tmp / "ws";
  const auto r = run({"mine", (kData / "iex_casebase.json").string(), "--sigma", "0.3", "--out", ws});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["n_cases"], 6);
  EXPECT_EQ(summary["n_pairs"], 30);
  EXPECT_EQ(summary["n_transactions"], 30);
  EXPECT_EQ(summary["sigma"], "3/10");
  EXPECT_EQ(summary["min_count"], 9);
  const auto w = load_workspace(ws);
  EXPECT_EQ(summary["n_candidates"], w.rules.size());
  bool found = false;
  for (const auto& f : w.fcis) {
    std::vector<std::string> names;
    for (auto c : f.items) names.push_back(w.dictionary.item(c).str());
    if (names == std::vector<std::string>(std::begin(kIexItems), std::end(kIexItems))) found = f.count == 9;
  }
  EXPECT_TRUE(found);
}

TEST(CliMine, TwoCaseBase) {
  TempDir tmp;
  const auto r = run({"mine", (kData / "two_cases.json").string(), "--sigma", "1/2", "-o", tmp / "ws"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["n_transactions"], 2);
  EXPECT_EQ(summary["n_pairs"], 2);
}

TEST(CliMine, InputErrorsExitOne) {
  TempDir tmp;
  EXPECT_EQ(run({"mine", tmp / "missing.json", "--sigma", "0.3", "--out", tmp / "ws"}).code, 1);
  EXPECT_EQ(run({"mine", (kData / "iex_casebase.json").string(), "--out", tmp / "ws"}).code, 1);
  EXPECT_EQ(run({"mine", (kData / "iex_casebase.json").string(), "--sigma", "1.5", "--out", tmp / "ws"}).code, 1);
  EXPECT_EQ(run({"mine", (kData / "iex_casebase.json").string(), "--sigma", "abc", "--out", tmp / "ws"}).code, 1);
  const auto cyc = run({"mine", (kData / "cyclic_casebase.json").string(), "--sigma", "0.3", "--out", tmp / "ws"});
  EXPECT_EQ(cyc.code, 1);
  EXPECT_NE(cyc.err.find("cycle"), std::string::npos);
  EXPECT_TRUE(cyc.out.empty());
  write(tmp / "bad.json", "{ not json");
  EXPECT_EQ(run({"mine", tmp / "bad.json", "--sigma", "0.3", "--out", tmp / "ws"}).code, 1);
  EXPECT_EQ(run({"bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST(CliMine, GuardViolationsExitTwo) {
  TempDir tmp;
  const auto cb = (kData / "iex_casebase.json").string();
  const auto items = run({"mine", cb, "--sigma", "0.3", "--out", tmp / "a", "--max-items", "10"});
  EXPECT_EQ(items.code, 2);
  EXPECT_TRUE(items.out.empty());
  // The capped database is spilled to FIMI instead.
  const auto spilled = detail::read_file(tmp.path / "a" / "transactions.fimi");
  EXPECT_EQ(lines(spilled).size(), 30u);
  std::istringstream in(spilled);
  const auto db = read_fimi(in, json::parse(detail::read_file(tmp.path / "a" / "transactions.dict.json")));
  const auto direct = build_transaction_db(load_case_base_file(cb));
  ASSERT_EQ(db.size(), direct.size());
  for (std::size_t k = 0; k < db.size(); ++k) EXPECT_EQ(db.decode(k).items, direct.decode(k).items);
  EXPECT_EQ(run({"mine", cb, "--sigma", "0", "--out", tmp / "b", "--max-fcis", "3"}).code, 2);
}

TEST(CliMine, DeterministicAcrossRunsAndWorkers) {
  TempDir tmp;
  const auto cb = (kData / "iex_casebase.json").string();
  ASSERT_EQ(run({"mine", cb, "--sigma", "0.1", "--out", tmp / "one"}).code, 0);
  ASSERT_EQ(run({"mine", cb, "--sigma", "0.1", "--out", tmp / "four", "--workers", "4"}).code, 0);
  for (const char* f : {"casebase.json", "fcis.jsonl", "rules.jsonl", "events.jsonl", "manifest.json"})
    EXPECT_EQ(detail::read_file(tmp.path / "one" / f), detail::read_file(tmp.path / "four" / f)) << f;
}

TEST(CliMine, PairFilterReducesTransactions) {
  TempDir tmp;
  const auto r = run({"mine", (kData / "iex_casebase.json").string(), "--sigma", "0.3", "--out", tmp / "ws",
                      "--pair-filter", "1/2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(r.out);
  EXPECT_LT(summary["n_transactions"].get<int>(), 30);
  EXPECT_EQ(summary["n_pairs"], 30);
}

TEST(CliMine, EmptyFciHiddenByDefault) {
  TempDir tmp;
  write(tmp / "disjoint.json", R"({"ontology":{"properties":["a","b","c","A","B","C"],"entails":[]},
    "cases":[{"id":"1","problem":["a"],"solution":["A"]},{"id":"2","problem":["b"],"solution":["B"]},
             {"id":"3","problem":["c"],"solution":["C"]}]})");
  const auto hidden = run({"mine", tmp / "disjoint.json", "--sigma", "0", "--out", tmp / "ws"});
  ASSERT_EQ(hidden.code, 0) << hidden.err;
  const auto shown = run({"mine", tmp / "disjoint.json", "--sigma", "0", "--out", tmp / "ws", "--show-empty-fci"});
  ASSERT_EQ(shown.code, 0);
  EXPECT_EQ(json::parse(shown.out)["n_fcis"].get<int>(), json::parse(hidden.out)["n_fcis"].get<int>() + 1);
  const auto w = load_workspace(tmp / "ws");
  EXPECT_TRUE(std::any_of(w.fcis.begin(), w.fcis.end(), [](const Fci& f) { return f.items.empty(); }));
  const auto exported = run({"export", tmp / "ws", "--format", "jsonl"});
  EXPECT_EQ(lines(exported.out).size(), w.fcis.size() - 1);
  EXPECT_EQ(lines(run({"export", tmp / "ws", "--format", "jsonl", "--show-empty-fci"}).out).size(), w.fcis.size());
}

TEST(CliSolve, IexWithAcceptedRule) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto id = accept_iex_rule(ws);
  const auto r = run({"solve", ws, (kData / "target_cd.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["status"], "solved");
  EXPECT_EQ(j["solution"], json({"B", "C"}));
  EXPECT_EQ(j["used_case"], "x2");
  EXPECT_EQ(j["used_rules"], json({id}));
  EXPECT_EQ(j["trace"][0]["explanation"], "d instead of a calls for C instead of A");
}

TEST(CliSolve, IdentityFallback) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto r = run({"solve", ws, (kData / "target_ac.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["adaptation"], "identity");
  EXPECT_EQ(j["used_case"], "x2");
  EXPECT_EQ(j["solution"], json({"A", "B"}));
  EXPECT_TRUE(j["used_rules"].empty());
}

TEST(CliSolve, NoSolutionExitsThree) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto r = run({"solve", ws, (kData / "target_cd.json").string(), "--k", "2"});
  EXPECT_EQ(r.code, 3);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["status"], "no-solution");
  EXPECT_EQ(j["candidates"].size(), 2u);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliSolve, UnknownPropertyExitsOne) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto r = run({"solve", ws, (kData / "target_unknown.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("zz"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(run({"solve", ws, (kData / "target_cd.json").string(), "--k", "0"}).code, 1);
}

TEST(CliSolve, TamperedWorkspaceExitsOne) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  write(ws + "/rules.jsonl", "");
  EXPECT_EQ(run({"solve", ws, (kData / "target_cd.json").string()}).code, 1);
}

TEST(CliExport, FimiTwoCases) {
  TempDir tmp;
  ASSERT_EQ(run({"mine", (kData / "two_cases.json").string(), "--sigma", "0.5", "--out", tmp / "ws"}).code, 0);
  const auto r = run({"export", tmp / "ws", "--format", "fimi", "--sidecar", tmp / "dict.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).size(), 2u);
  std::istringstream in(r.out);
  const auto parsed = read_fimi(in, json::parse(detail::read_file(tmp / "dict.json")));
  const auto rebuilt = rebuild_transactions(load_workspace(tmp / "ws"));
  ASSERT_EQ(parsed.size(), rebuilt.size());
  EXPECT_EQ(parsed.dictionary(), rebuilt.dictionary());
  for (std::size_t k = 0; k < parsed.size(); ++k) EXPECT_EQ(parsed.rows()[k].items, rebuilt.rows()[k].items);
}

TEST(CliExport, JsonlFcisAndRules) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto w = load_workspace(ws);
  const auto fcis = lines(run({"export", ws, "--format", "jsonl"}).out);
  ASSERT_EQ(fcis.size(), w.fcis.size());
  EXPECT_EQ(json::parse(fcis[0]), to_json(w.fcis[0], w.dictionary));
  const auto rules = lines(run({"export", ws, "--format", "jsonl", "--what", "rules"}).out);
  ASSERT_EQ(rules.size(), w.rules.size());
  EXPECT_EQ(rule_from_json(json::parse(rules[0])), w.rules[0]);
}

TEST(CliExport, EmptyRuleTable) {
  TempDir tmp;
  write(tmp / "nosol.json", R"({"ontology":{"properties":["a","b"],"entails":[]},
    "cases":[{"id":"1","problem":["a"],"solution":[]},{"id":"2","problem":["b"],"solution":[]}]})");
  ASSERT_EQ(run({"mine", tmp / "nosol.json", "--sigma", "0", "--out", tmp / "ws"}).code, 0);
  const auto r = run({"export", tmp / "ws", "--format", "jsonl", "--what", "rules"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
}

TEST(CliExport, UnknownFormat) {
  TempDir tmp;
  const auto ws = iex_workspace(tmp);
  const auto r = run({"export", ws, "--format", "csv"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("mine"), std::string::npos);
}
