// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "support.hpp"

#include "weightflow/allocation.hpp"
#include "weightflow/backtest.hpp"
#include "weightflow/cli.hpp"
#include "weightflow/config.hpp"
#include "weightflow/execution/journal.hpp"
#include "weightflow/metrics.hpp"
#include "weightflow/pipeline.hpp"
#include "weightflow/timing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace weightflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

const fs::path kSource(WF_SOURCE_DIR);

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0 && code != kExitRuntime) std::cerr << e.str();
  return code;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  for (std::string f; std::getline(s, f, ',');) out.push_back(f);
  return out;
}

/// Rows of a CSV file without its header.
std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split(line));
  }
  return rows;
}

// ---------------------------------------------------------------- 1

Outcome deployment_consistency() {
  const fs::path cfg = kSource / "configs" / "consistency.json";
  const RunConfig config = load_run_config(cfg);
  const MarketPanel panel = load_panel(config.data);
  if (panel.num_assets() != 4 || panel.num_dates() != 500) {
    return {false, "bundled panel is " + std::to_string(panel.num_assets()) + " x " +
                       std::to_string(panel.num_dates())};
  }
  const fs::path out = wf_test::scratch_dir("acc_consistency");
  const auto start = Clock::now();
  if (cli({"backtest", "-c", cfg.string(), "-o", (out / "bt").string()}) != 0) return {false, "backtest failed"};
  if (cli({"paper", "-c", cfg.string(), "-o", (out / "paper").string()}) != 0) return {false, "paper failed"};
  const double elapsed = seconds_since(start);

  const auto bt = csv_rows(out / "bt" / config.strategies.front().id / "ledger.csv");
  const auto pp = csv_rows(out / "paper" / "paper_ledger.csv");
  if (bt.size() != pp.size() || bt.empty()) return {false, "ledger lengths differ"};
  double worst = 0.0;
  for (std::size_t k = 0; k < bt.size(); ++k) {
    if (bt[k][0] != pp[k][0]) return {false, "dates differ at row " + std::to_string(k)};
    const double a = std::stod(bt[k][1]);
    const double b = std::stod(pp[k][1]);
    worst = std::max(worst, std::abs(a - b) / std::abs(a));
  }
  return {worst <= 1e-9 && elapsed < 5.0, std::to_string(bt.size()) + " dates, max relative gap " + fmt(worst) +
                                              ", " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome backtest_exactness() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = 40 + trial % 60;
    const Index cols = 2 + trial % 4;
    const MarketPanel p = wf_test::make_panel(wf_test::random_prices(rng, rows, cols, 0.02));
    const double every = trial % 3 == 0 ? 1.0 : 0.2;  // daily or sparse rebalancing
    WeightTrajectory traj;
    traj.spec_id = "random";
    for (Index t = 0; t < rows; ++t) {
      if (t > 0 && u(rng) > every) continue;
      std::map<std::string, double> w;
      double total = 0.0;
      for (const auto& s : p.assets) total += (w[s] = u(rng));
      const double gross = u(rng) < 0.25 ? 0.6 : 1.0;
      for (auto& [s, v] : w) v *= gross / total;
      RebalanceRecord r;
      r.row = t;
      r.date = p.calendar[t];
      r.final = r.base = r.timing = WeightVector(r.date, w);
      traj.records.push_back(r);
    }
    const EquityLedger l = run_backtest(traj, p, BacktestOptions{0.0});

    // Closed form: equity_t = prod (1 + w_t . r_t) with w_t the weights held
    // over day t, i.e. the last target drifted by intervening returns.
    VectorXd held = VectorXd::Zero(cols);
    std::size_t next = 0;
    double equity = 1.0;
    for (Index t = 0; t < rows; ++t) {
      if (t > 0) {
        const VectorXd r = p.returns.row(t).transpose();
        const double growth = 1.0 + held.dot(r);
        equity *= growth;
        held = held.cwiseProduct((VectorXd::Ones(cols) + r)) / growth;
      }
      if (next < traj.records.size() && traj.records[next].row == t) {
        for (Index j = 0; j < cols; ++j) held(j) = traj.records[next].final[p.assets[static_cast<std::size_t>(j)]];
        ++next;
      }
      worst = std::max(worst, std::abs(l.equity[static_cast<std::size_t>(t)] / equity - 1.0));
    }
  }
  return {worst <= 1e-10, "100 trajectories, max relative error " + fmt(worst)};
}

// ---------------------------------------------------------------- 3

template <typename F>
double grid_minimum(F&& f) {
  constexpr int steps = 1000;
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d w;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      w << i / double(steps), j / double(steps), (steps - i - j) / double(steps);
      best = std::min(best, f(w));
    }
  }
  return best;
}

Outcome qp_oracle() {
  const auto start = Clock::now();
  const Date day = Date::parse("2024-06-03");
  std::mt19937_64 rng(3003);
  std::normal_distribution<double> z(0.0, 0.25);
  std::normal_distribution<double> m(0.05, 0.05);
  std::uniform_real_distribution<double> g(0.5, 5.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd a(3, 3);
    for (auto& x : a.reshaped()) x = z(rng);
    CovarianceEstimate est;
    est.assets = {"A", "B", "C"};
    est.sigma = a * a.transpose();
    est.mu = VectorXd(3);
    for (auto& x : est.mu) x = m(rng);
    const double gamma = g(rng);
    const MatrixXd& sigma = est.sigma;
    auto vec = [&](const WeightVector& w) { return Eigen::Vector3d(w["A"], w["B"], w["C"]); };

    const Eigen::Vector3d wmin = vec(allocate_min_variance(est, 1.0, day));
    const double gmin = grid_minimum([&](const Eigen::Vector3d& w) { return w.dot(sigma * w); });
    worst = std::max(worst, std::abs(wmin.dot(sigma * wmin) - gmin));

    auto f = [&](const Eigen::Vector3d& w) { return gamma * w.dot(sigma * w) - w.dot(est.mu); };
    const Eigen::Vector3d wmv = vec(allocate_mean_variance(est, gamma, 1.0, day));
    worst = std::max(worst, std::abs(f(wmv) - grid_minimum(f)));
  }
  double diag_err = 0.0;
  std::uniform_real_distribution<double> var(0.005, 0.2);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 6;
    CovarianceEstimate est;
    VectorXd v(n);
    for (auto& x : v) x = var(rng);
    for (Index i = 0; i < n; ++i) est.assets.push_back(std::string(1, static_cast<char>('A' + i)));
    est.mu = VectorXd::Zero(n);
    est.sigma = v.asDiagonal();
    const WeightVector w = allocate_min_variance(est, 1.0, day);
    const VectorXd inv = v.cwiseInverse() / v.cwiseInverse().sum();
    for (Index i = 0; i < n; ++i) diag_err = std::max(diag_err, std::abs(w[est.assets[static_cast<std::size_t>(i)]] - inv(i)));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-6 && diag_err <= 1e-8 && elapsed < 60.0,
          "max |solver - grid| objective gap " + fmt(worst) + ", inverse-variance error " + fmt(diag_err) + ", " +
              fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------- 4

Outcome kama_oracle() {
  std::mt19937_64 rng(4004);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> p(1000);
    double x = 100.0;
    for (auto& v : p) {
      v = x;
      x = std::max(1.0, x + z(rng));
    }
    const int n = 5 + trial % 20;
    const double fast = 2.0 + trial % 3, slow = 30.0;
    const VectorXd got = kama_series(Eigen::Map<const VectorXd>(p.data(), 1000), {static_cast<Index>(n), fast, slow});
    // Direct recursion: KAMA_t = KAMA_{t-1} + SC_t (P_t - KAMA_{t-1}), seeded with P_n.
    double k = p[static_cast<std::size_t>(n)];
    for (std::size_t t = static_cast<std::size_t>(n); t < 1000; ++t) {
      if (t > static_cast<std::size_t>(n)) {
        double path = 0.0;
        for (std::size_t i = t - n + 1; i <= t; ++i) path += std::fabs(p[i] - p[i - 1]);
        const double er = path > 0.0 ? std::fabs(p[t] - p[t - n]) / path : 0.0;
        const double sc = std::pow(er * (2.0 / (fast + 1.0) - 2.0 / (slow + 1.0)) + 2.0 / (slow + 1.0), 2.0);
        k = k + sc * (p[t] - k);
      }
      worst = std::max(worst, std::abs(got(static_cast<Index>(t)) - k));
    }
  }
  bool fixed = true;
  for (double level : {1.0, 42.5, 1234.5678}) {
    const VectorXd k = kama_series(VectorXd::Constant(300, level));
    for (Index t = 10; t < 300; ++t) fixed = fixed && k(t) == level;
  }
  return {worst <= 1e-12 && fixed,
          "30 walks of 1000 points, max error " + fmt(worst) + (fixed ? ", fixed point exact" : ", fixed point broken")};
}

// ---------------------------------------------------------------- 5

Outcome cost_accounting() {
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double entry_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const MarketPanel p = wf_test::make_panel(wf_test::random_prices(rng, 30, 4));
    const double p0 = std::pow(10.0, 2.0 + 5.0 * u(rng));
    std::map<std::string, double> w;
    double total = 0.0;
    for (const auto& s : p.assets) total += (w[s] = u(rng));
    for (auto& [s, v] : w) v /= total;
    WeightTrajectory traj;
    RebalanceRecord r;
    r.row = 0;
    r.date = p.calendar[0];
    r.final = r.base = r.timing = WeightVector(r.date, w);
    traj.records.push_back(r);
    BacktestOptions o{0.001};
    o.initial_equity = p0;
    const EquityLedger l = run_backtest(traj, p, o);
    entry_err = std::max(entry_err, std::abs(l.cost[0] - 0.001 * p0) / p0);
    entry_err = std::max(entry_err, std::abs(l.equity[0] - (p0 - 0.001 * p0)) / p0);
  }

  bool monotone = true;
  const std::vector<double> sweep{0.0, 0.0001, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02};
  for (int trial = 0; trial < 50; ++trial) {
    const MarketPanel p = wf_test::make_panel(wf_test::random_prices(rng, 120, 3, 0.02));
    PipelineSpec spec;
    spec.schedule = trial % 2 ? Schedule::kWeekly : Schedule::kDaily;
    if (trial % 3 == 0) {
      spec.allocator.kind = AllocatorSpec::Kind::kMinVariance;
      spec.allocator.window = 30;
    }
    const WeightTrajectory traj = run_pipeline(spec, p);
    std::vector<double> previous;
    for (double c : sweep) {
      const EquityLedger l = run_backtest(traj, p, BacktestOptions{c});
      if (!previous.empty()) {
        for (std::size_t t = 0; t < l.equity.size(); ++t) monotone = monotone && l.equity[t] <= previous[t];
      }
      previous = l.equity;
    }
  }
  return {entry_err <= 1e-15 && monotone,
          "entry cost relative error " + fmt(entry_err) + ", 50-case sweep " + (monotone ? "monotone" : "NOT monotone")};
}

// ---------------------------------------------------------------- 6

MatrixXd regime_path(std::mt19937_64& rng, Index assets) {
  const Index n = 500;
  MatrixXd close(n, assets);
  std::normal_distribution<double> z(0.0, 0.004);
  close.row(0).setConstant(100.0);
  for (Index t = 1; t < n; ++t) {
    double drift = 0.0008;  // bull
    if (t >= 260 && t < 320) drift = std::pow(0.6, 1.0 / 60.0) - 1.0;  // -40% over 60 days
    if (t >= 320) drift = 0.0012;  // recovery
    for (Index j = 0; j < assets; ++j) close(t, j) = close(t - 1, j) * (1.0 + drift + z(rng));
  }
  return close;
}

/// Buy-and-hold metrics of a user-supplied daily close file (`date,...,close` with a header).
std::optional<std::string> spy_check(bool& ok) {
  const char* path = std::getenv("WEIGHTFLOW_SPY_CSV");
  if (!path || !*path) return std::nullopt;
  std::ifstream in(path);
  if (!in) {
    ok = false;
    return std::string("cannot read ") + path;
  }
  std::string line;
  std::getline(in, line);
  auto header = split(line);
  std::size_t date_col = 0, close_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string h = header[i];
    std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
    if (h == "date") date_col = i;
    if (h == "close" && close_col == header.size()) close_col = i;
    if (h == "adj close" || h == "adj_close") close_col = i;
  }
  if (close_col == header.size()) {
    ok = false;
    return std::string("no close column in ") + path;
  }
  const Date first = Date::parse("2018-01-07"), last = Date::parse("2025-10-24");
  std::vector<std::pair<Date, double>> closes;
  while (std::getline(in, line)) {
    const auto f = split(line);
    if (f.size() <= std::max(date_col, close_col)) continue;
    const Date d = Date::parse(f[date_col]);
    if (first <= d && d <= last) closes.emplace_back(d, std::stod(f[close_col]));
  }
  std::sort(closes.begin(), closes.end());
  std::vector<double> curve;
  for (const auto& [d, c] : closes) curve.push_back(c);
  const MetricsReport m = compute_metrics(curve);
  const bool cum_ok = std::abs(m.cumulative_return / 2.63 - 1.0) <= 0.10;
  const bool sharpe_ok = m.sharpe && std::abs(*m.sharpe / 0.84 - 1.0) <= 0.10;
  ok = cum_ok && sharpe_ok;
  return "SPY cumulative " + fmt(m.cumulative_return) + " (2.63), sharpe " + (m.sharpe ? fmt(*m.sharpe) : "n/a") +
         " (0.84)";
}

Outcome timing_ablation() {
  std::mt19937_64 rng(6006);
  int wins = 0;
  double plain_sum = 0.0, timed_sum = 0.0;
  const int paths = 10;
  for (int k = 0; k < paths; ++k) {
    const MarketPanel p = wf_test::make_panel(regime_path(rng, 4));
    PipelineSpec plain;
    plain.id = "ew";
    plain.schedule = Schedule::kWeekly;
    PipelineSpec timed = plain;
    timed.id = "ew-tsmom";
    timed.timing = TimingSpec{TimingSpec::Kind::kTsmom, {}, 20};
    const double dd_plain = drawdown(run_backtest(plain, p).equity).max;
    const double dd_timed = drawdown(run_backtest(timed, p).equity).max;
    wins += dd_timed > dd_plain;
    plain_sum += dd_plain;
    timed_sum += dd_timed;
  }
  bool ok = wins == paths;
  std::string detail = std::to_string(wins) + "/" + std::to_string(paths) + " paths, mean max dd untimed " +
                       fmt(plain_sum / paths) + " vs timed " + fmt(timed_sum / paths);
  bool spy_ok = true;
  if (auto spy = spy_check(spy_ok)) {
    detail += "; " + *spy;
    ok = ok && spy_ok;
  } else {
    detail += "; SPY check skipped (set WEIGHTFLOW_SPY_CSV)";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 7

Outcome crash_recovery() {
  const fs::path cfg = kSource / "configs" / "paper_faulty.json";
  const fs::path dir = wf_test::scratch_dir("acc_crash");
  if (cli({"paper", "-c", cfg.string(), "-o", (dir / "full").string()}) != 0) return {false, "uninterrupted run failed"};
  const std::string want_state = slurp(dir / "full" / "state.json");
  const std::string want_journal = slurp(dir / "full" / "journal.jsonl");
  const auto records = execution::read_journal(dir / "full" / "journal.jsonl");
  const std::uint64_t total = records.back().seq;

  std::mt19937_64 rng(7007);
  std::uniform_int_distribution<std::uint64_t> pick(1, total - 1);
  std::set<std::uint64_t> kills;
  while (kills.size() < 20) kills.insert(pick(rng));
  int identical = 0;
  std::string first_bad;
  for (std::uint64_t k : kills) {
    const fs::path run = dir / ("kill_" + std::to_string(k));
    const int killed = cli({"paper", "-c", cfg.string(), "-o", run.string(), "--kill-after", std::to_string(k)});
    const int resumed =
        cli({"paper", "-c", cfg.string(), "-o", run.string(), "--resume", (run / "journal.jsonl").string()});
    const bool same = killed == kExitRuntime && resumed == 0 && slurp(run / "state.json") == want_state &&
                      slurp(run / "journal.jsonl") == want_journal;
    identical += same;
    if (!same && first_bad.empty()) first_bad = ", first mismatch at kill " + std::to_string(k);
  }
  return {identical == 20, std::to_string(identical) + "/20 kill points (of " + std::to_string(total) +
                               " records) resumed to byte-identical state and journal" + first_bad};
}

// ---------------------------------------------------------------- 8

Outcome reconciliation_fidelity() {
  const fs::path dir = wf_test::scratch_dir("acc_recon");
  const fs::path ideal_cfg = kSource / "configs" / "consistency.json";
  if (cli({"paper", "-c", ideal_cfg.string(), "-o", (dir / "ideal").string()}) != 0) return {false, "ideal run failed"};
  double ideal_te = 0.0;
  const auto ideal_rows = csv_rows(dir / "ideal" / "reconciliation.csv");
  for (const auto& r : ideal_rows) ideal_te = std::max(ideal_te, std::stod(r[1]));

  const std::uint64_t seed = 7;
  nlohmann::json j = nlohmann::json::parse(slurp(ideal_cfg));
  j["data"]["prices"] = {(kSource / "data" / "prices.csv").string()};
  j["strategies"][0]["schedule"] = "weekly";
  j["broker"] = {{"slippage_bps", 20}, {"rejection_probability", 0.05}};
  j["seed"] = seed;
  const fs::path faulty_cfg = dir / "faulty.json";
  wf_test::write_file(faulty_cfg, j.dump(2));
  if (cli({"paper", "-c", faulty_cfg.string(), "-o", (dir / "faulty").string()}) != 0) {
    return {false, "faulty run failed"};
  }
  const auto rows = csv_rows(dir / "faulty" / "reconciliation.csv");
  double te = 0.0;
  for (const auto& r : rows) te = std::max(te, std::stod(r[1]));
  const double rejection_rate = std::stod(rows.back()[2]);

  // Which submitted orders the broker must reject follows from the seed alone.
  std::set<std::uint64_t> expected, journaled;
  for (const auto& r : execution::read_journal(dir / "faulty" / "journal.jsonl")) {
    if (r.kind == execution::RecordKind::kOrderSubmitted) {
      const auto id = r.payload.at("order_id").get<std::uint64_t>();
      if (execution::seeded_uniform(seed, id, 1) < 0.05) expected.insert(id);
    } else if (r.kind == execution::RecordKind::kRejection && r.payload.at("reason") == "broker_rejected") {
      journaled.insert(r.payload.at("order_id").get<std::uint64_t>());
    }
  }
  const bool ok = ideal_te <= 1e-9 && te > 0.0 && rejection_rate > 0.0 && !expected.empty() && expected == journaled;
  return {ok, "ideal max L1 " + fmt(ideal_te) + " over " + std::to_string(ideal_rows.size()) +
                  " rebalances; faulty max L1 " + fmt(te) + ", rejection rate " + fmt(rejection_rate) + ", " +
                  std::to_string(journaled.size()) + "/" + std::to_string(expected.size()) +
                  " broker rejections journaled"};
}

// ---------------------------------------------------------------- 9

Outcome metrics_oracle() {
  std::mt19937_64 rng(9009);
  std::normal_distribution<double> z(0.0004, 0.012);
  double worst = 0.0;
  bool periods_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> e{100.0};
    for (int i = 0; i < 252; ++i) e.push_back(e.back() * (1.0 + z(rng)));
    const MetricsReport m = compute_metrics(e);
    std::vector<double> r;
    for (std::size_t i = 1; i < e.size(); ++i) r.push_back(e[i] / e[i - 1] - 1.0);
    const double n = static_cast<double>(r.size());
    double mean = 0.0, ss = 0.0, down = 0.0, wins = 0.0;
    for (double x : r) mean += x / n;
    for (double x : r) {
      ss += (x - mean) * (x - mean);
      if (x < 0) down += x * x;
      wins += x > 0;
    }
    const double sd = std::sqrt(ss / (n - 1));
    const double cum = e.back() / e.front();
    const double ann = std::pow(cum, 252.0 / n) - 1.0;
    double peak = e[0], mdd = 0.0;
    for (double v : e) {
      peak = std::max(peak, v);
      mdd = std::min(mdd, v / peak - 1.0);
    }
    const double err = std::max({std::abs(m.cumulative_return - cum), std::abs(m.annualized_return - ann),
                                 std::abs(m.annualized_volatility - sd * std::sqrt(252.0)),
                                 std::abs(*m.sharpe - mean / sd * std::sqrt(252.0)),
                                 std::abs(*m.sortino - mean / std::sqrt(down / n) * std::sqrt(252.0)),
                                 std::abs(m.max_drawdown - mdd), std::abs(*m.calmar - ann / -mdd),
                                 std::abs(m.win_rate - wins / n)});
    worst = std::max(worst, err);
    periods_ok = periods_ok && m.periods == 252;
  }

  int property_failures = 0;
  std::uniform_real_distribution<double> scale(0.01, 1e6);
  std::uniform_int_distribution<int> len(5, 400);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> e{1.0};
    const int days = len(rng);
    for (int i = 0; i < days; ++i) e.push_back(e.back() * (1.0 + z(rng)));
    std::vector<double> scaled(e);
    const double k = scale(rng);
    for (auto& v : scaled) v *= k;
    const MetricsReport a = compute_metrics(e);
    const MetricsReport b = compute_metrics(scaled);
    bool ok = std::abs(a.cumulative_return - b.cumulative_return) <= 1e-12 &&
              std::abs(a.annualized_volatility - b.annualized_volatility) <= 1e-12 &&
              std::abs(a.max_drawdown - b.max_drawdown) <= 1e-12 &&
              a.max_drawdown_duration == b.max_drawdown_duration && a.win_rate == b.win_rate &&
              (!a.sharpe || std::abs(*a.sharpe - *b.sharpe) <= 1e-9);
    if (a.max_drawdown < 0.0) {
      ok = ok && a.calmar && std::abs(*a.calmar * -a.max_drawdown - a.annualized_return) <= 1e-12;
    }
    property_failures += !ok;
  }
  return {worst <= 1e-10 && periods_ok && property_failures == 0,
          "max error vs direct formulas " + fmt(worst) + ", " + std::to_string(1000 - property_failures) +
              "/1000 property cases"};
}

// ---------------------------------------------------------------- 10

PipelineSpec mutation_spec(int trial) {
  PipelineSpec spec;
  spec.id = "mutation-" + std::to_string(trial);
  spec.schedule = trial % 2 ? Schedule::kMonthly : Schedule::kWeekly;
  switch (trial % 3) {
    case 1:
      spec.selector.kind = SelectorSpec::Kind::kTopQuantile;
      spec.selector.score_source = "momentum";
      spec.selector.momentum_lookback = 40;
      spec.selector.quantile = 0.5;
      break;
    case 2:
      spec.selector.kind = SelectorSpec::Kind::kTopQuantile;
      spec.selector.score_source = "scores";
      spec.selector.quantile = 0.4;
      break;
    default:
      break;
  }
  switch ((trial / 3) % 3) {
    case 1:
      spec.allocator.kind = AllocatorSpec::Kind::kMinVariance;
      spec.allocator.window = 50;
      break;
    case 2:
      spec.allocator.kind = AllocatorSpec::Kind::kMeanVariance;
      spec.allocator.window = 50;
      spec.allocator.risk_aversion = 3.0;
      break;
    default:
      break;
  }
  switch ((trial / 9) % 3) {
    case 1:
      spec.timing = TimingSpec{TimingSpec::Kind::kKama, {}, 20};
      break;
    case 2:
      spec.timing = TimingSpec{TimingSpec::Kind::kTsmom, {}, 30};
      break;
    default:
      break;
  }
  if (trial % 4 == 3) spec.overlay = OverlaySpec{};
  return spec;
}

Outcome lookahead_mutation() {
  std::mt19937_64 rng(10010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int clean = 0;
  std::size_t checked = 0;
  std::string first_bad;
  for (int trial = 0; trial < 50; ++trial) {
    const Index rows = 220, cols = 5;
    MarketPanel p = wf_test::make_panel(wf_test::random_prices(rng, rows, cols, 0.015));
    p.open = p.close * 0.999;
    MatrixXd scores(rows, cols);
    for (auto& x : scores.reshaped()) x = u(rng);
    p.scores = scores;
    VectorXd vix(rows);
    for (auto& v : vix) v = 10.0 + 30.0 * u(rng);
    p.aux["VIX"] = vix;

    const PipelineSpec spec = mutation_spec(trial);
    const WeightTrajectory base = run_pipeline(spec, p);
    bool trial_ok = !base.records.empty();
    for (const auto& rec : base.records) {
      const Index after = rows - rec.row - 1;
      if (after == 0) continue;
      MarketPanel m = p;
      const MatrixXd noise = wf_test::random_prices(rng, rows, cols, 0.06, -0.002) * (0.5 + u(rng));
      m.close.bottomRows(after) = noise.bottomRows(after);
      m.open.bottomRows(after) = noise.bottomRows(after) * 1.01;
      m.returns = compute_returns(m.close);
      for (auto& x : m.scores->bottomRows(after).reshaped()) x = u(rng);
      for (Index t = rec.row + 1; t < rows; ++t) m.aux["VIX"](t) = 10.0 + 70.0 * u(rng);
      const WeightTrajectory again = run_pipeline(spec, m);
      const RebalanceRecord* same = again.find(rec.date);
      ++checked;
      if (!same || !(same->final == rec.final)) {
        trial_ok = false;
        if (first_bad.empty()) first_bad = ", first change in trial " + std::to_string(trial) + " at " + rec.date.iso();
      }
    }
    clean += trial_ok;
  }
  return {clean == 50, std::to_string(clean) + "/50 trials unchanged across " + std::to_string(checked) +
                           " mutated rebalance dates" + first_bad};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"deployment consistency (backtest vs ideal paper)", deployment_consistency},
      {"zero-cost backtest equals the closed-form product", backtest_exactness},
      {"QP solutions vs 0.001 simplex grid", qp_oracle},
      {"KAMA vs direct recursion", kama_oracle},
      {"entry cost and cost monotonicity", cost_accounting},
      {"TSMOM moderates a crash drawdown", timing_ablation},
      {"crash recovery via --resume", crash_recovery},
      {"reconciliation fidelity", reconciliation_fidelity},
      {"metrics vs direct formulas", metrics_oracle},
      {"lookahead mutation", lookahead_mutation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
