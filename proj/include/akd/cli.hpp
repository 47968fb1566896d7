#pragma once

// Command-line driver. Payloads go to `out`, human messages to `err`.
//
// Exit codes:
//   0  success
//   1  bad arguments, unreadable or invalid input, integrity failure
//   2  a resource guard stopped transaction building or mining
//   3  solve found no solution (diagnostics are still printed)

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "akd/pipeline.hpp"
#include "akd/service.hpp"

namespace akd {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitGuard = 2, kExitNoSolution = 3 };

namespace detail {

struct CliConfig {
  std::string casebase;
  std::string workspace;
  std::string target;
  std::string sigma;
  std::string pair_filter;
  std::string format;
  std::string what = "fcis";
  std::string sidecar;
  std::string static_dir;
  std::string host = "127.0.0.1";
  std::optional<std::size_t> k;  // default: every case
  unsigned workers = 1;
  int port = 7474;
  std::size_t max_items = 10'000'000;
  std::size_t max_fcis = 5'000'000;
  bool hide_empty_fci = true;
};

inline int cmd_mine(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::filesystem::path dir = cfg.workspace;
  if (std::filesystem::exists(dir) && !std::filesystem::is_directory(dir))
    throw IoError("output '" + dir.string() + "' exists and is not a directory");
  MineConfig mc;
  mc.sigma = SupportThreshold::parse(cfg.sigma);
  mc.workers = cfg.workers;
  if (!cfg.pair_filter.empty()) mc.pair_filter = SupportThreshold::parse(cfg.pair_filter).value();
  mc.max_items = cfg.max_items;
  mc.max_fcis = cfg.max_fcis;

  auto cb = load_case_base_file(cfg.casebase);
  const auto n = cb.size();
  std::optional<Workspace> mined;
  try {
    mined = mine_workspace(cb, mc);
  } catch (const TransactionCapError& e) {
    // Too large to mine in memory: spill the transactions for an external miner.
    std::filesystem::create_directories(dir);
    const auto fimi = dir / "transactions.fimi";
    std::ofstream sink(fimi, std::ios::binary | std::ios::trunc);
    const auto sidecar = stream_fimi(cb, sink, {mc.workers, mc.max_items, mc.pair_filter});
    sink.close();
    if (!sink) throw IoError("write '" + fimi.string() + "' failed");
    write_file_atomic(dir / "transactions.dict.json", sidecar.dump(2) + "\n");
    err << "transactions spilled to " << fimi.string() << "\n";
    throw;
  }
  const auto& w = *mined;
  save_workspace(w, dir);

  std::size_t shown_fcis = 0;
  for (const auto& f : w.fcis) shown_fcis += shown(f, cfg.hide_empty_fci);
  out << json{{"n_cases", n},
              {"n_pairs", n * (n - 1)},
              {"n_transactions", w.n_transactions},
              {"sigma", w.sigma.value().str()},
              {"min_count", w.sigma.min_count(w.n_transactions)},
              {"n_fcis", shown_fcis},
              {"n_candidates", w.rules.size()},
              {"workspace", dir.string()}}
             .dump()
      << "\n";
  err << "mined " << shown_fcis << " FCIs and " << w.rules.size() << " candidate rules from " << w.n_transactions
      << " transactions into " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_solve(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto w = load_workspace(cfg.workspace);
  const auto tgt = target_from_json(parse_document(read_file(cfg.target)));
  const auto outcome = solve_in_workspace(w, tgt, cfg.k.value_or(w.case_base.size()));
  out << solve_payload(outcome);
  if (std::holds_alternative<NoSolutionReport>(outcome)) {
    err << "no solution: no retrieved case has a matching accepted rule\n";
    return kExitNoSolution;
  }
  return kExitOk;
}

inline int cmd_export(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto w = load_workspace(cfg.workspace);
  if (cfg.format == "fimi") {
    const auto db = rebuild_transactions(w, cfg.workers);
    const auto sidecar = export_fimi(db, out);
    if (!cfg.sidecar.empty()) write_file_atomic(cfg.sidecar, sidecar.dump(2) + "\n");
    err << "exported " << db.size() << " transactions over " << db.dictionary().size() << " items\n";
  } else if (cfg.what == "rules") {
    for (const auto& r : w.rules) out << to_json(r).dump() << "\n";
  } else {
    for (const auto& f : w.fcis)
      if (shown(f, cfg.hide_empty_fci)) out << to_json(f, w.dictionary).dump() << "\n";
  }
  return kExitOk;
}

inline int cmd_serve(const CliConfig& cfg, std::ostream&, std::ostream& err) {
  ServiceOptions opts;
  opts.host = cfg.host;
  opts.port = cfg.port;
  opts.static_dir = cfg.static_dir;
  opts.hide_empty_fci = cfg.hide_empty_fci;
  opts.default_k = cfg.k;
  ReviewService service(cfg.workspace, opts);
  if (!service.bind(cfg.port)) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  err << "serving " << cfg.workspace << " on http://" << cfg.host << ":" << cfg.port << "\n" << std::flush;
  service.listen_after_bind();
  return kExitOk;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::CliConfig cfg;
  CLI::App app{"Adaptation knowledge discovery from a case base", "akd"};
  app.require_subcommand(1);

  auto hide_flag = [&](CLI::App* sub) {
    sub->add_flag("--hide-empty-fci,!--show-empty-fci", cfg.hide_empty_fci,
                  "Hide the empty FCI from listings (default on)");
  };

  auto* mine = app.add_subcommand("mine", "Build transactions, mine FCIs and write a workspace");
  mine->add_option("casebase", cfg.casebase, "Case base JSON file")->required()->check(CLI::ExistingFile);
  mine->add_option("--sigma", cfg.sigma, "Minimum support, e.g. 0.05 or 1/20")->required();
  mine->add_option("-o,--out", cfg.workspace, "Workspace directory to write")->required();
  mine->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
  mine->add_option("--pair-filter", cfg.pair_filter, "Keep only pairs with problem Jaccard >= threshold");
  mine->add_option("--max-items", cfg.max_items, "Cap on total transaction items");
  mine->add_option("--max-fcis", cfg.max_fcis, "Cap on mined FCIs");
  hide_flag(mine);

  auto* solve = app.add_subcommand("solve", "Solve a target problem with the accepted rules");
  solve->add_option("workspace", cfg.workspace, "Workspace directory")->required()->check(CLI::ExistingDirectory);
  solve->add_option("target", cfg.target, "Target JSON file {\"problem\": [...]}")->required()->check(CLI::ExistingFile);
  solve->add_option("--k", cfg.k, "Retrieval depth (default: all cases)")->check(CLI::PositiveNumber);

  auto* exp = app.add_subcommand("export", "Write transactions (fimi) or FCIs/rules (jsonl) to standard output");
  exp->add_option("workspace", cfg.workspace, "Workspace directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--format", cfg.format, "fimi or jsonl")->required()->check(CLI::IsMember({"fimi", "jsonl"}));
  exp->add_option("--what", cfg.what, "jsonl content: fcis or rules")->check(CLI::IsMember({"fcis", "rules"}));
  exp->add_option("--sidecar", cfg.sidecar, "Item dictionary output for fimi");
  exp->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
  hide_flag(exp);

  auto* serve = app.add_subcommand("serve", "Run the review service");
  serve->add_option("workspace", cfg.workspace, "Workspace directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--port", cfg.port, "TCP port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", cfg.host, "Bind address");
  serve->add_option("--static", cfg.static_dir, "UI asset directory served at /");
  serve->add_option("--k", cfg.k, "Default retrieval depth (default: all cases)")->check(CLI::PositiveNumber);
  hide_flag(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (mine->parsed()) return detail::cmd_mine(cfg, out, err);
    if (solve->parsed()) return detail::cmd_solve(cfg, out, err);
    if (exp->parsed()) return detail::cmd_export(cfg, out, err);
    return detail::cmd_serve(cfg, out, err);
  } catch (const GuardError& e) {
    err << "error: " << e.what() << "\n";
    return kExitGuard;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace akd
