#include "weightflow/cli.hpp"

#include "csv.hpp"
#include "weightflow/config.hpp"
#include "weightflow/metrics.hpp"
#include "weightflow/plot.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace weightflow {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeError("cannot write " + path.string());
  f << text;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

/// Directory-safe form of a strategy id.
std::string slug(const std::string& id) {
  std::string s;
  for (char c : id) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return s.empty() ? "strategy" : s;
}

RunConfig load_config(const CommonFlags& flags) {
  std::optional<fs::path> data_dir;
  if (const char* env = std::getenv("WEIGHTFLOW_DATA_DIR"); env && *env) data_dir = fs::path(env);
  RunConfig config = load_run_config(flags.config, data_dir);
  if (flags.seed) {
    config.seed = *flags.seed;
    config.broker.seed = *flags.seed;
  }
  if (!flags.out.empty()) config.output = flags.out;
  return config;
}

std::string iso_utc(fs::file_time_type t) {
  const auto sys = std::chrono::time_point_cast<std::chrono::seconds>(
      t - fs::file_time_type::clock::now() + std::chrono::system_clock::now());
  const auto days = std::chrono::floor<std::chrono::days>(sys);
  const std::chrono::hh_mm_ss hms(sys - days);
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return Date(static_cast<std::int32_t>(days.time_since_epoch().count())).iso() + buf;
}

PlotSeries series_of(const EquityLedger& ledger, const std::string& name) {
  return {name, ledger.dates, ledger.equity};
}

void write_notes(const fs::path& path, const std::vector<std::string>& notes) {
  std::string text;
  for (const auto& n : notes) text += n + "\n";
  write_text(path, text);
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(const CommonFlags& flags, std::ostream& out) {
  const RunConfig config = load_config(flags);
  const MarketPanel panel = load_panel(config.data);
  std::string retrieved_at;
  if (config.data.snapshot) {
    retrieved_at = iso_utc(fs::last_write_time(*config.data.snapshot / "manifest.json"));
  } else {
    auto newest = fs::last_write_time(config.data.prices.front());
    for (const auto& p : config.data.prices) newest = std::max(newest, fs::last_write_time(p));
    retrieved_at = iso_utc(newest);
  }
  const DataSnapshot snap = persist_snapshot(panel, config.output / "snapshots", config.data.source_id, retrieved_at);
  out << "snapshot " << snap.digest << "\n";
  out << "manifest " << (snap.location / "manifest.json").string() << "\n";
  out << panel.num_assets() << " assets, " << panel.num_dates() << " dates (" << panel.calendar.front().iso()
      << " to " << panel.calendar.back().iso() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- backtest

struct Variant {
  std::string label;
  PipelineSpec spec;
};

std::vector<Variant> expand(const RunConfig& config, const std::string& ablate, const std::string& only) {
  std::vector<Variant> variants;
  for (const auto& spec : config.strategies) {
    if (!only.empty() && spec.id != only) continue;
    if (ablate.empty()) {
      variants.push_back({spec.id, spec});
    } else if (ablate == "timing") {
      PipelineSpec without = spec;
      without.timing.reset();
      without.id = spec.id + " (No Timing)";
      PipelineSpec with = spec;
      if (!with.timing) with.timing = config.ablation_timing;
      with.id = spec.id + " (With Timing)";
      variants.push_back({without.id, without});
      variants.push_back({with.id, with});
    } else {
      PipelineSpec without = spec;
      without.overlay.reset();
      without.id = spec.id + " (No Overlay)";
      PipelineSpec with = spec;
      if (!with.overlay) with.overlay = config.ablation_overlay;
      with.id = spec.id + " (With Overlay)";
      variants.push_back({without.id, without});
      variants.push_back({with.id, with});
    }
  }
  if (variants.empty()) throw ConfigError("no strategy with id '" + only + "'");
  return variants;
}

int cmd_backtest(const CommonFlags& flags, const std::string& ablate, const std::string& only, std::ostream& out,
                 std::ostream& err) {
  const RunConfig config = load_config(flags);
  const MarketPanel panel = load_panel(config.data);
  const auto variants = expand(config, ablate, only);
  std::vector<PipelineSpec> specs;
  for (const auto& v : variants) specs.push_back(v.spec);

  // Trajectories are recomputed here for export; the grid recomputes its own.
  const auto results = ablation_grid(specs, panel, config.fill_timing, config.initial_equity);
  std::vector<MetricsReport> reports;
  std::vector<PlotSeries> curves;
  std::exception_ptr first_failure;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const fs::path dir = config.output / slug(r.spec_id);
    if (!r.ledger) {
      err << "strategy '" << r.spec_id << "' failed: " << r.error << "\n";
      write_text(dir / "error.txt", r.error + "\n");
      if (!first_failure) first_failure = r.exception;
      continue;
    }
    const EquityLedger& ledger = *r.ledger;
    if (ledger.size() == 0) {
      err << "strategy '" << r.spec_id << "' never rebalanced inside the horizon\n";
      continue;
    }
    write_with(dir / "ledger.csv", [&](std::ostream& s) { write_ledger_csv(ledger, s); });
    write_with(dir / "gross.csv", [&](std::ostream& s) { write_gross_csv(ledger, s); });
    const WeightTrajectory traj = run_pipeline(specs[i], panel);
    write_with(dir / "weights.csv", [&](std::ostream& s) { write_trajectory_csv(traj, s); });
    std::vector<std::string> notes = ledger.notes;
    for (const auto& rec : traj.records) {
      for (const auto& n : rec.notes) notes.push_back(rec.date.iso() + ": " + n);
    }
    write_notes(dir / "notes.txt", notes);
    write_with(dir / "equity.svg", [&](std::ostream& s) {
      write_line_svg(s, {series_of(ledger, "net"), {"gross", ledger.dates, ledger.gross_equity}}, r.spec_id);
    });
    MetricsReport m = compute_metrics(ledger);
    write_with(dir / "metrics.csv", [&](std::ostream& s) { write_metrics_csv({m}, s); });
    reports.push_back(m);
    curves.push_back(series_of(ledger, r.spec_id));
  }
  write_with(config.output / "metrics.csv", [&](std::ostream& s) { write_metrics_csv(reports, s); });
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& m : reports) all.push_back(to_json(m));
  write_text(config.output / "metrics.json", all.dump(2) + "\n");
  write_with(config.output / "equity.svg", [&](std::ostream& s) { write_line_svg(s, curves, "Equity"); });

  for (const auto& m : reports) {
    out << m.strategy << ": growth x" << format_double(m.cumulative_return) << ", sharpe "
        << (m.sharpe ? format_double(*m.sharpe) : std::string("n/a")) << ", max dd " << format_double(m.max_drawdown)
        << "\n";
  }
  out << "wrote " << (config.output / "metrics.csv").string() << "\n";
  if (first_failure) std::rethrow_exception(first_failure);
  return kExitOk;
}

// ---------------------------------------------------------------- paper

int cmd_paper(const CommonFlags& flags, const std::string& only, const std::string& resume,
              std::optional<std::uint64_t> kill_after, std::ostream& out) {
  const RunConfig config = load_config(flags);
  const MarketPanel panel = load_panel(config.data);
  const PipelineSpec& spec = only.empty() ? config.strategies.front() : config.strategy(only);

  execution::PaperOptions options;
  options.fill_timing = config.fill_timing;
  options.initial_equity = config.initial_equity;
  options.integer_shares = config.integer_shares;
  options.journal = resume.empty() ? config.output / "journal.jsonl" : fs::path(resume);
  options.resume = !resume.empty();
  options.kill_after = kill_after;
  if (options.resume && !fs::exists(options.journal)) {
    throw DataError("journal to resume not found", options.journal.string());
  }

  execution::PaperSessionResult result;
  try {
    result = execution::run_paper_session(spec, panel, config.broker, config.guardrails, options);
  } catch (const execution::SessionKilled& e) {
    out << e.what() << "; resume with --resume " << options.journal.string() << "\n";
    throw;
  }

  const fs::path dir = config.output;
  write_with(dir / "paper_ledger.csv", [&](std::ostream& s) { write_ledger_csv(result.ledger, s); });
  write_with(dir / "reconciliation.csv",
             [&](std::ostream& s) { execution::write_reconciliation_csv(result.reconciliation, s); });
  write_text(dir / "state.json", execution::state_json(result.state));
  write_notes(dir / "paper_notes.txt", result.notes);
  if (result.ledger.size() > 0) {
    MetricsReport m = compute_metrics(result.ledger);
    m.strategy = spec.id + " (paper)";
    write_with(dir / "paper_metrics.csv", [&](std::ostream& s) { write_metrics_csv({m}, s); });
    write_with(dir / "paper_equity.svg",
               [&](std::ostream& s) { write_line_svg(s, {series_of(result.ledger, spec.id)}, spec.id + " (paper)"); });
  }

  double worst_te = 0.0;
  for (const auto& r : result.reconciliation) worst_te = std::max(worst_te, r.tracking_error);
  const auto& c = result.state.counters;
  out << "paper session '" << spec.id << "': " << result.reconciliation.size() << " rebalances, "
      << result.state.last_seq << " journal records\n";
  out << "final equity " << format_double(result.ledger.equity.empty() ? 0.0 : result.ledger.equity.back())
      << ", rejection rate " << format_double(c.rejection_rate()) << ", guardrail triggers " << c.guardrail_triggers
      << ", max tracking error " << format_double(worst_te) << "\n";
  if (config.broker.ideal() && !config.integer_shares) {
    const EquityLedger bt = run_backtest(spec, panel, config.fill_timing, config.initial_equity);
    double gap = 0.0;
    for (std::size_t k = 0; k < std::min(bt.size(), result.ledger.size()); ++k) {
      gap = std::max(gap, std::abs(result.ledger.equity[k] - bt.equity[k]) / bt.equity[k]);
    }
    out << "ideal broker: max relative gap to backtest " << format_double(gap) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

std::vector<MetricsReport> read_metrics_file(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("metrics file not found", path.string());
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(std::string("invalid JSON: ") + e.what(), path.string());
    }
    std::vector<MetricsReport> out;
    if (j.is_array()) {
      for (const auto& e : j) out.push_back(metrics_from_json(e));
    } else {
      out.push_back(metrics_from_json(j));
    }
    return out;
  }
  return read_metrics_csv(path);
}

std::string cell(const std::string& v) {
  if (v.empty()) return "n/a";
  auto num = std::strtod(v.c_str(), nullptr);
  if (v.find_first_not_of("0123456789") == std::string::npos) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", num);
  return buf;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, std::ostream& out) {
  if (inputs.empty()) throw ConfigError("report needs at least one metrics file");
  std::vector<MetricsReport> rows;
  std::vector<PlotSeries> curves;
  std::set<std::string> seen;
  for (const auto& in : inputs) {
    const fs::path path(in);
    for (auto& m : read_metrics_file(path)) {
      if (!seen.insert(m.strategy).second) throw ConfigError("duplicate strategy id '" + m.strategy + "' in report");
      fs::path ledger = path.parent_path() / slug(m.strategy) / "ledger.csv";
      if (path.filename() == "paper_metrics.csv") ledger = path.parent_path() / "paper_ledger.csv";
      if (fs::exists(ledger)) {
        const csv::Table t = csv::read(ledger);
        PlotSeries s{m.strategy, {}, {}};
        for (const auto& [line, fields] : t.rows) {
          s.dates.push_back(Date::parse(fields.at(0)));
          s.values.push_back(csv::parse_double(fields.at(1)).value_or(kMissing));
        }
        curves.push_back(std::move(s));
      }
      rows.push_back(std::move(m));
    }
  }
  const fs::path dir = out_dir.empty() ? fs::path("report") : fs::path(out_dir);
  write_with(dir / "report.csv", [&](std::ostream& s) { write_metrics_csv(rows, s); });
  std::ostringstream md;
  const auto& cols = metrics_columns();
  md << "|";
  for (const auto& c : cols) md << ' ' << c << " |";
  md << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) md << (i == 0 ? " --- |" : " ---: |");
  md << "\n";
  for (const auto& m : rows) {
    const auto r = metrics_row(m);
    md << "| " << r[0] << " |";
    for (std::size_t i = 1; i < r.size(); ++i) md << ' ' << cell(r[i]) << " |";
    md << "\n";
  }
  write_text(dir / "report.md", md.str());
  if (!curves.empty()) {
    write_with(dir / "report.svg", [&](std::ostream& s) { write_line_svg(s, curves, "Equity comparison"); });
  }
  out << md.str();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weight-centric strategy research and paper-trading engine", "weightflow"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonFlags flags;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", flags.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", flags.out, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Seed for every random component (overrides the config)");
  };

  auto* ingest = app.add_subcommand("ingest", "Normalize raw data into a content-addressed snapshot");
  add_common(ingest);

  std::string ablate;
  std::string only;
  auto* backtest = app.add_subcommand("backtest", "Backtest the configured strategies");
  add_common(backtest);
  backtest->add_option("--ablate", ablate, "Pair every strategy with and without a stage")
      ->check(CLI::IsMember({"timing", "overlay"}));
  backtest->add_option("--strategy", only, "Run only this strategy id");

  std::string resume;
  std::optional<std::uint64_t> kill_after;
  auto* paper = app.add_subcommand("paper", "Paper-trade one strategy through the simulated broker");
  add_common(paper);
  paper->add_option("--strategy", only, "Strategy id (default: the first one)");
  paper->add_option("--resume", resume, "Continue the session recorded in this journal");
  paper->add_option("--kill-after", kill_after, "Simulate a crash after this journal record");

  std::vector<std::string> inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge metrics files into one comparison table");
  report->add_option("inputs", inputs, "Metrics files (CSV or JSON)");
  report->add_option("--out,-o", report_out, "Output directory (default ./report)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (auto* sub : {ingest, backtest, paper}) {
    if (*sub && sub->count("--seed")) flags.seed = seed;
  }

  try {
    if (*ingest) return cmd_ingest(flags, out);
    if (*backtest) return cmd_backtest(flags, ablate, only, out, err);
    if (*paper) return cmd_paper(flags, only, resume, kill_after, out);
    if (*report) return cmd_report(inputs, report_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace weightflow
