#include "support.hpp"

#include "weightflow/pipeline.hpp"

#include <doctest.h>

#include <sstream>

using namespace weightflow;

namespace {

class NegativeAllocator : public Allocator {
 public:
  explicit NegativeAllocator(Index bad_row) : bad_row_(bad_row) {}
  WeightVector allocate(const History& history, const CandidateSet& candidates, Diagnostics&) const override {
    WeightVector w = allocate_equal(candidates, history.date());
    if (history.now() == bad_row_) w.weights.begin()->second = -0.1;
    return w;
  }

 private:
  Index bad_row_;
};

class PeekingTiming : public TimingRule {
 public:
  WeightVector adjust(const History& history, const WeightVector& base, Diagnostics&) const override {
    (void)history.close(history.now() + 1, 0);
    return base;
  }
};

class DoublingTiming : public TimingRule {
 public:
  WeightVector adjust(const History&, const WeightVector& base, Diagnostics&) const override {
    WeightVector w = base;
    for (auto& [s, v] : w.weights) v *= 1.5;
    return w;
  }
};

MarketPanel demo_panel(std::uint64_t seed, Index rows = 120, Index cols = 4) {
  std::mt19937_64 rng(seed);
  MarketPanel p = wf_test::make_panel(wf_test::random_prices(rng, rows, cols));
  VectorXd vix(rows);
  std::uniform_real_distribution<double> u(10.0, 40.0);
  for (auto& v : vix) v = u(rng);
  p.aux["VIX"] = vix;
  return p;
}

}  // namespace

TEST_CASE("weight vector basics and feasibility") {
  const Date d = Date::parse("2024-01-02");
  WeightVector w(d, {{"A", 0.5}, {"B", 0.3}});
  CHECK(w.gross() == 0.8);
  CHECK(w.cash() == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(w["C"] == 0.0);
  CHECK_FALSE(check_feasible(w, {}));
  CHECK(check_feasible(WeightVector(d, {{"A", -0.01}}), {}));
  CHECK(check_feasible(WeightVector(d, {{"A", 0.7}, {"B", 0.4}}), {}));
  CHECK(check_feasible(WeightVector(d, {{"A", kMissing}}), {}));
  CHECK_FALSE(check_feasible(WeightVector(d, {{"A", 1.5}}), {1.5, true, 1e-10}));
}

TEST_CASE("restricting weights to candidates") {
  const Date d = Date::parse("2024-01-02");
  const WeightVector w(d, {{"A", 0.5}, {"B", 0.5}});
  CHECK(restrict_weights(w, CandidateSet({"A"}), true).weights == std::map<std::string, double>{{"A", 1.0}});
  const WeightVector cash = restrict_weights(w, CandidateSet({"A"}), false);
  CHECK(cash.weights == std::map<std::string, double>{{"A", 0.5}});
  CHECK(cash.cash() == 0.5);
  CHECK(restrict_weights(w, CandidateSet({"A", "B"}), true) == w);
}

TEST_CASE("history refuses to read past now") {
  const MarketPanel p = demo_panel(41, 30, 2);
  const History h(p, 10);
  CHECK(h.close(10, 0) == p.close(10, 0));
  CHECK_THROWS_AS(h.close(11, 0), LookaheadError);
  CHECK_THROWS_AS(h.ret(11, 1), LookaheadError);
  CHECK_THROWS_AS(h.date_at(11), LookaheadError);
  CHECK(h.close_history(0).size() == 11);
  CHECK(h.return_history(1).size() == 11);
  CHECK(h.aux_history("VIX").size() == 11);
  CHECK(*h.aux("VIX") == p.aux.at("VIX")(10));
}

TEST_CASE("equal weight over four assets gives a quarter each on every date") {
  const MarketPanel p = demo_panel(42);
  PipelineSpec spec;
  spec.id = "ew";
  const WeightTrajectory t = run_pipeline(spec, p);
  REQUIRE(t.records.size() == 120);
  for (const auto& r : t.records) {
    for (const auto& s : {"A", "B", "C", "D"}) CHECK(r.final[s] == 0.25);
    CHECK(r.final == r.base);
  }
}

TEST_CASE("an overlay that never scales leaves the timing weights alone") {
  MarketPanel p = demo_panel(43);
  p.aux["VIX"].setConstant(12.0);
  PipelineSpec spec;
  spec.timing = TimingSpec{TimingSpec::Kind::kTsmom, {}, 20};
  spec.overlay = OverlaySpec{};
  const WeightTrajectory t = run_pipeline(spec, p);
  for (const auto& r : t.records) CHECK(r.final == r.timing);
}

TEST_CASE("identity stages are no-ops") {
  const MarketPanel p = demo_panel(44);
  PipelineSpec plain;
  PipelineSpec with = plain;
  with.timing = TimingSpec{TimingSpec::Kind::kIdentity, {}, 20};
  with.overlay = OverlaySpec{OverlaySpec::Kind::kIdentity, {}, "VIX"};
  const auto a = run_pipeline(plain, p);
  const auto b = run_pipeline(with, p);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) CHECK(a.records[k].final == b.records[k].final);
}

TEST_CASE("invariant violations stop the pipeline at the offending date") {
  const MarketPanel p = demo_panel(45);
  PipelineSpec spec;
  spec.schedule = Schedule::kDaily;

  PipelineStages stages;
  stages.allocator = std::make_unique<NegativeAllocator>(37);
  try {
    run_pipeline(Pipeline(spec, p, std::move(stages)));
    FAIL("expected RuntimeError");
  } catch (const RuntimeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("allocate") != std::string::npos);
    CHECK(msg.find(p.calendar[37].iso()) != std::string::npos);
  }

  PipelineStages peek;
  peek.timing = std::make_unique<PeekingTiming>();
  CHECK_THROWS_AS(run_pipeline(Pipeline(spec, p, std::move(peek))), LookaheadError);

  PipelineStages grow;
  grow.timing = std::make_unique<DoublingTiming>();
  CHECK_THROWS_AS(run_pipeline(Pipeline(spec, p, std::move(grow))), RuntimeError);
}

TEST_CASE("schedules") {
  const MarketPanel p = demo_panel(46, 60);
  const auto& cal = p.calendar;
  const auto weekly = schedule_rows(Schedule::kWeekly, cal, 0, 59, nullptr);
  for (Index i : weekly) {
    CHECK((i == 0 || cal[i].iso_week_key() != cal[i - 1].iso_week_key()));
  }
  CHECK(weekly.size() == 12);  // 60 weekdays from a Monday
  const auto monthly = schedule_rows(Schedule::kMonthly, cal, 0, 59, nullptr);
  CHECK(monthly.front() == 0);
  for (std::size_t k = 1; k < monthly.size(); ++k) {
    CHECK(cal[monthly[k]].month_key() != cal[monthly[k] - 1].month_key());
  }
  CHECK(schedule_rows(Schedule::kDaily, cal, 5, 9, nullptr).size() == 5);

  EventDates ev;
  ev.global = {Date(cal[10].days() + 1)};  // a Saturday lands on the next trading day
  ev.per_symbol["A"] = {cal[30]};
  const auto on_event = schedule_rows(Schedule::kOnEvent, cal, 0, 59, &ev);
  CHECK(on_event == std::vector<Index>{0, cal.first_at_or_after(Date(cal[10].days() + 1)), 30});
  CHECK_THROWS_AS(schedule_rows(Schedule::kOnEvent, cal, 0, 59, nullptr), ConfigError);
}

TEST_CASE("top quantile pipeline uses only past scores") {
  MarketPanel p = demo_panel(47);
  MatrixXd scores(120, 4);
  for (Index t = 0; t < 120; ++t) scores.row(t) << t % 4, (t + 1) % 4, (t + 2) % 4, (t + 3) % 4;
  p.scores = scores;
  PipelineSpec spec;
  spec.selector.kind = SelectorSpec::Kind::kTopQuantile;
  spec.selector.quantile = 0.25;
  const auto t = run_pipeline(spec, p);
  for (const auto& r : t.records) {
    Index best = 0;
    scores.row(r.row).maxCoeff(&best);
    CHECK(r.final.weights == std::map<std::string, double>{{p.assets[best], 1.0}});
  }
}

TEST_CASE("spec parsing") {
  const nlohmann::json j = {
      {"id", "mv"},
      {"selector", {{"kind", "top_quantile"}, {"quantile", 0.5}, {"score_source", "momentum"}}},
      {"allocator", {{"kind", "mean_variance"}, {"risk_aversion", 3.0}, {"window", 60}}},
      {"timing", {{"kind", "kama"}, {"er_window", 8}}},
      {"overlay", {{"kind", "vix"}, {"target", 18.0}, {"mode", "threshold"}, {"floor", 0.2}}},
      {"schedule", "weekly"},
      {"cost_bps", 5},
      {"start", "2021-02-01"}};
  const PipelineSpec s = parse_pipeline_spec(j);
  CHECK(s.selector.kind == SelectorSpec::Kind::kTopQuantile);
  CHECK(s.allocator.risk_aversion == 3.0);
  CHECK(s.timing->kama.er_window == 8);
  CHECK(s.overlay->params.mode == OverlayMode::kThreshold);
  CHECK(s.cost_rate == doctest::Approx(0.0005).epsilon(1e-15));
  CHECK(*s.start == Date::parse("2021-02-01"));
  const PipelineSpec again = parse_pipeline_spec(nlohmann::json::parse(to_json(s).dump()));
  CHECK(to_json(again) == to_json(s));

  CHECK_THROWS_AS(parse_pipeline_spec({{"id", "x"}, {"selecter", {{"kind", "all"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_spec({{"id", "x"}, {"allocator", {{"kind", "magic"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_spec({{"id", "x"}, {"schedule", "hourly"}}), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_spec({{"id", "x"}, {"allocator", {{"kind", "equal"}, {"window", "ten"}}}}),
                  ConfigError);
}

TEST_CASE("validation catches missing inputs before running") {
  const MarketPanel p = demo_panel(48);
  PipelineSpec spec;
  spec.universe = {"A", "ZZZ"};
  CHECK_THROWS_AS(Pipeline(spec, p), ConfigError);
  spec = {};
  spec.selector.kind = SelectorSpec::Kind::kTopQuantile;  // scores requested, none ingested
  CHECK_THROWS_AS(Pipeline(spec, p), ConfigError);
  spec = {};
  spec.overlay = OverlaySpec{OverlaySpec::Kind::kVix, {}, "VXX"};
  CHECK_THROWS_AS(Pipeline(spec, p), ConfigError);
}

TEST_CASE("trajectory csv") {
  const MarketPanel p = demo_panel(49, 10, 2);
  PipelineSpec spec;
  spec.schedule = Schedule::kWeekly;
  std::ostringstream out;
  write_trajectory_csv(run_pipeline(spec, p), out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "date,symbol,w_base,w_timing,w_final");
  std::getline(in, line);
  CHECK(line == p.calendar[0].iso() + ",A,0.5,0.5,0.5");
}

TEST_CASE("weights on a rebalance date ignore data after it") {
  const MarketPanel p = demo_panel(50, 200);
  PipelineSpec spec;
  spec.schedule = Schedule::kWeekly;
  spec.allocator.kind = AllocatorSpec::Kind::kMinVariance;
  spec.allocator.window = 40;
  spec.timing = TimingSpec{TimingSpec::Kind::kKama, {}, 20};
  spec.overlay = OverlaySpec{};
  const auto base = run_pipeline(spec, p);
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    const auto& rec = base.records[static_cast<std::size_t>(10 + trial * 5)];
    MarketPanel mutated = p;
    const MatrixXd noise = wf_test::random_prices(rng, p.num_dates(), p.num_assets(), 0.05);
    mutated.close.bottomRows(p.num_dates() - rec.row - 1) = noise.bottomRows(p.num_dates() - rec.row - 1);
    mutated.returns = compute_returns(mutated.close);
    mutated.aux["VIX"].tail(p.num_dates() - rec.row - 1).setConstant(80.0);
    PipelineSpec cut = spec;
    cut.end = rec.date;
    const auto again = run_pipeline(cut, mutated);
    CHECK(again.records.back().final == rec.final);
  }
}
