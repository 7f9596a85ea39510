#include "weightflow/pipeline.hpp"

#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace weightflow {

namespace fs = std::filesystem;
using jsonutil::check_keys;
using jsonutil::get_or;
using jsonutil::get_required;

// ---------------------------------------------------------------- parsing

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

SelectorSpec parse_selector(const nlohmann::json& j) {
  constexpr std::string_view ctx = "selector";
  check_keys(j, {"kind", "quantile", "score_source", "momentum_lookback", "refresh_on_events", "groups",
                 "benchmark", "max_active", "ir_window"},
             ctx);
  SelectorSpec s;
  const auto kind = get_or<std::string>(j, "kind", "all", ctx);
  if (kind == "all") {
    s.kind = SelectorSpec::Kind::kAll;
  } else if (kind == "top_quantile") {
    s.kind = SelectorSpec::Kind::kTopQuantile;
  } else if (kind == "rotation") {
    s.kind = SelectorSpec::Kind::kRotation;
  } else {
    throw ConfigError("selector: unknown kind '" + kind + "'");
  }
  s.quantile = get_or(j, "quantile", s.quantile, ctx);
  s.score_source = get_or(j, "score_source", s.score_source, ctx);
  s.momentum_lookback = get_or<Index>(j, "momentum_lookback", s.momentum_lookback, ctx);
  s.refresh_on_events = get_or(j, "refresh_on_events", s.refresh_on_events, ctx);
  s.ir_window = get_or<Index>(j, "ir_window", s.ir_window, ctx);
  if (j.contains("groups")) {
    s.groups.groups = get_required<std::map<std::string, std::vector<std::string>>>(j, "groups", ctx);
  }
  s.groups.benchmark = get_or<std::string>(j, "benchmark", "", ctx);
  s.groups.max_active = get_or(j, "max_active", s.groups.max_active, ctx);
  if (s.score_source != "scores" && s.score_source != "momentum") {
    throw ConfigError("selector: score_source must be 'scores' or 'momentum'");
  }
  return s;
}

AllocatorSpec parse_allocator(const nlohmann::json& j, const fs::path& base) {
  constexpr std::string_view ctx = "allocator";
  check_keys(j, {"kind", "risk_aversion", "window", "shrinkage", "cap", "path", "beta_window",
                 "momentum_window"},
             ctx);
  AllocatorSpec a;
  const auto kind = get_or<std::string>(j, "kind", "equal", ctx);
  if (kind == "equal") {
    a.kind = AllocatorSpec::Kind::kEqual;
  } else if (kind == "mean_variance") {
    a.kind = AllocatorSpec::Kind::kMeanVariance;
  } else if (kind == "min_variance") {
    a.kind = AllocatorSpec::Kind::kMinVariance;
  } else if (kind == "external") {
    a.kind = AllocatorSpec::Kind::kExternal;
    a.external_path = resolve(base, get_required<std::string>(j, "path", ctx));
  } else if (kind == "residual_momentum") {
    a.kind = AllocatorSpec::Kind::kResidualMomentum;
  } else {
    throw ConfigError("allocator: unknown kind '" + kind + "'");
  }
  a.risk_aversion = get_or(j, "risk_aversion", a.risk_aversion, ctx);
  a.window = get_or<Index>(j, "window", a.window, ctx);
  a.shrinkage = get_or(j, "shrinkage", a.shrinkage, ctx);
  a.cap = get_or(j, "cap", a.cap, ctx);
  a.beta_window = get_or<Index>(j, "beta_window", a.beta_window, ctx);
  a.momentum_window = get_or<Index>(j, "momentum_window", a.momentum_window, ctx);
  return a;
}

TimingSpec parse_timing(const nlohmann::json& j) {
  constexpr std::string_view ctx = "timing";
  check_keys(j, {"kind", "er_window", "fast", "slow", "lookback"}, ctx);
  TimingSpec t;
  const auto kind = get_required<std::string>(j, "kind", ctx);
  if (kind == "kama") {
    t.kind = TimingSpec::Kind::kKama;
  } else if (kind == "tsmom") {
    t.kind = TimingSpec::Kind::kTsmom;
  } else if (kind == "identity") {
    t.kind = TimingSpec::Kind::kIdentity;
  } else {
    throw ConfigError("timing: unknown kind '" + kind + "'");
  }
  t.kama.er_window = get_or<Index>(j, "er_window", t.kama.er_window, ctx);
  t.kama.fast = get_or(j, "fast", t.kama.fast, ctx);
  t.kama.slow = get_or(j, "slow", t.kama.slow, ctx);
  t.lookback = get_or<Index>(j, "lookback", t.lookback, ctx);
  return t;
}

OverlaySpec parse_overlay(const nlohmann::json& j) {
  constexpr std::string_view ctx = "overlay";
  check_keys(j, {"kind", "target", "mode", "floor", "series"}, ctx);
  OverlaySpec o;
  const auto kind = get_required<std::string>(j, "kind", ctx);
  if (kind == "vix") {
    o.kind = OverlaySpec::Kind::kVix;
  } else if (kind == "identity") {
    o.kind = OverlaySpec::Kind::kIdentity;
  } else {
    throw ConfigError("overlay: unknown kind '" + kind + "'");
  }
  o.params.vix_target = get_or(j, "target", o.params.vix_target, ctx);
  const auto mode = get_or<std::string>(j, "mode", "scale", ctx);
  if (mode == "scale") {
    o.params.mode = OverlayMode::kScale;
  } else if (mode == "threshold") {
    o.params.mode = OverlayMode::kThreshold;
  } else {
    throw ConfigError("overlay: mode must be 'scale' or 'threshold'");
  }
  o.params.floor = get_or(j, "floor", o.params.floor, ctx);
  o.series = get_or(j, "series", o.series, ctx);
  return o;
}

const char* schedule_name(Schedule s) {
  switch (s) {
    case Schedule::kDaily: return "daily";
    case Schedule::kWeekly: return "weekly";
    case Schedule::kMonthly: return "monthly";
    case Schedule::kOnEvent: return "on_event";
  }
  return "daily";
}

}  // namespace

PipelineSpec parse_pipeline_spec(const nlohmann::json& j, const fs::path& base_dir) {
  constexpr std::string_view ctx = "strategy";
  check_keys(j, {"id", "selector", "allocator", "timing", "overlay", "schedule", "universe", "cost_bps",
                 "gross_cap", "start", "end", "events"},
             ctx);
  PipelineSpec spec;
  spec.id = get_required<std::string>(j, "id", ctx);
  if (j.contains("selector")) spec.selector = parse_selector(j.at("selector"));
  if (j.contains("allocator")) spec.allocator = parse_allocator(j.at("allocator"), base_dir);
  if (j.contains("timing") && !j.at("timing").is_null()) spec.timing = parse_timing(j.at("timing"));
  if (j.contains("overlay") && !j.at("overlay").is_null()) spec.overlay = parse_overlay(j.at("overlay"));
  const auto schedule = get_or<std::string>(j, "schedule", "daily", ctx);
  if (schedule == "daily") {
    spec.schedule = Schedule::kDaily;
  } else if (schedule == "weekly") {
    spec.schedule = Schedule::kWeekly;
  } else if (schedule == "monthly") {
    spec.schedule = Schedule::kMonthly;
  } else if (schedule == "on_event") {
    spec.schedule = Schedule::kOnEvent;
  } else {
    throw ConfigError("strategy: unknown schedule '" + schedule + "'");
  }
  spec.universe = get_or(j, "universe", spec.universe, ctx);
  spec.cost_rate = get_or(j, "cost_bps", spec.cost_rate * 1e4, ctx) * 1e-4;
  spec.gross_cap = get_or(j, "gross_cap", spec.gross_cap, ctx);
  if (j.contains("start")) spec.start = jsonutil::get_date(j, "start", ctx);
  if (j.contains("end")) spec.end = jsonutil::get_date(j, "end", ctx);
  if (j.contains("events")) {
    spec.events_path = resolve(base_dir, get_required<std::string>(j, "events", ctx));
    try {
      spec.events = load_event_dates(spec.events_path);
    } catch (const DataError& e) {
      throw DataError(std::string("strategy '") + spec.id + "' events: " + e.what());
    }
  }
  if (!(spec.cost_rate >= 0.0)) throw ConfigError("strategy: cost_bps must be non-negative");
  if (!(spec.gross_cap > 0.0)) throw ConfigError("strategy: gross_cap must be positive");
  return spec;
}

nlohmann::ordered_json to_json(const PipelineSpec& spec) {
  nlohmann::ordered_json j;
  j["id"] = spec.id;
  nlohmann::ordered_json sel;
  switch (spec.selector.kind) {
    case SelectorSpec::Kind::kAll: sel["kind"] = "all"; break;
    case SelectorSpec::Kind::kTopQuantile:
      sel["kind"] = "top_quantile";
      sel["quantile"] = spec.selector.quantile;
      sel["score_source"] = spec.selector.score_source;
      sel["momentum_lookback"] = spec.selector.momentum_lookback;
      sel["refresh_on_events"] = spec.selector.refresh_on_events;
      break;
    case SelectorSpec::Kind::kRotation:
      sel["kind"] = "rotation";
      sel["groups"] = spec.selector.groups.groups;
      sel["benchmark"] = spec.selector.groups.benchmark;
      sel["max_active"] = spec.selector.groups.max_active;
      sel["ir_window"] = spec.selector.ir_window;
      break;
  }
  j["selector"] = sel;
  nlohmann::ordered_json alloc;
  const auto& a = spec.allocator;
  switch (a.kind) {
    case AllocatorSpec::Kind::kEqual: alloc["kind"] = "equal"; break;
    case AllocatorSpec::Kind::kMeanVariance: alloc["kind"] = "mean_variance"; break;
    case AllocatorSpec::Kind::kMinVariance: alloc["kind"] = "min_variance"; break;
    case AllocatorSpec::Kind::kExternal:
      alloc["kind"] = "external";
      alloc["path"] = a.external_path.string();
      break;
    case AllocatorSpec::Kind::kResidualMomentum: alloc["kind"] = "residual_momentum"; break;
  }
  if (a.kind == AllocatorSpec::Kind::kMeanVariance) alloc["risk_aversion"] = a.risk_aversion;
  if (a.kind == AllocatorSpec::Kind::kMeanVariance || a.kind == AllocatorSpec::Kind::kMinVariance) {
    alloc["window"] = a.window;
    alloc["shrinkage"] = a.shrinkage;
    alloc["cap"] = a.cap;
  }
  if (a.kind == AllocatorSpec::Kind::kResidualMomentum) {
    alloc["beta_window"] = a.beta_window;
    alloc["momentum_window"] = a.momentum_window;
  }
  j["allocator"] = alloc;
  if (spec.timing) {
    nlohmann::ordered_json t;
    switch (spec.timing->kind) {
      case TimingSpec::Kind::kIdentity: t["kind"] = "identity"; break;
      case TimingSpec::Kind::kKama:
        t["kind"] = "kama";
        t["er_window"] = spec.timing->kama.er_window;
        t["fast"] = spec.timing->kama.fast;
        t["slow"] = spec.timing->kama.slow;
        break;
      case TimingSpec::Kind::kTsmom:
        t["kind"] = "tsmom";
        t["lookback"] = spec.timing->lookback;
        break;
    }
    j["timing"] = t;
  } else {
    j["timing"] = nullptr;
  }
  if (spec.overlay) {
    nlohmann::ordered_json o;
    o["kind"] = spec.overlay->kind == OverlaySpec::Kind::kVix ? "vix" : "identity";
    if (spec.overlay->kind == OverlaySpec::Kind::kVix) {
      o["target"] = spec.overlay->params.vix_target;
      o["mode"] = spec.overlay->params.mode == OverlayMode::kScale ? "scale" : "threshold";
      o["floor"] = spec.overlay->params.floor;
      o["series"] = spec.overlay->series;
    }
    j["overlay"] = o;
  } else {
    j["overlay"] = nullptr;
  }
  j["schedule"] = schedule_name(spec.schedule);
  j["universe"] = spec.universe;
  j["cost_bps"] = spec.cost_rate * 1e4;
  j["gross_cap"] = spec.gross_cap;
  if (spec.start) j["start"] = spec.start->iso();
  if (spec.end) j["end"] = spec.end->iso();
  if (!spec.events_path.empty()) j["events"] = spec.events_path.string();
  return j;
}

// ---------------------------------------------------------------- stages

namespace {

/// Universe members priced at the history's current row.
std::vector<std::string> tradable_universe(const History& history, const std::vector<std::string>& universe) {
  std::vector<std::string> out;
  for (const auto& sym : universe) {
    if (const auto j = history.asset_index(sym); j && history.tradable(*j)) out.push_back(sym);
  }
  return out;
}

CandidateSet intersect_tradable(const CandidateSet& c, const History& history) {
  std::vector<std::string> out;
  for (const auto& sym : c.symbols()) {
    if (const auto j = history.asset_index(sym); j && history.tradable(*j)) out.push_back(sym);
  }
  return CandidateSet(std::move(out));
}

class AllSelector final : public Selector {
 public:
  explicit AllSelector(std::vector<std::string> universe) : universe_(std::move(universe)) {}
  CandidateSet select(const History& h, const CandidateSet*, Diagnostics&) const override {
    return CandidateSet(tradable_universe(h, universe_));
  }

 private:
  std::vector<std::string> universe_;
};

class TopQuantileSelector final : public Selector {
 public:
  TopQuantileSelector(std::vector<std::string> universe, SelectorSpec spec, std::optional<EventDates> events)
      : universe_(std::move(universe)), spec_(std::move(spec)), events_(std::move(events)) {}

  CandidateSet select(const History& h, const CandidateSet* previous, Diagnostics& diag) const override {
    auto recompute = [&] { return rank(h, diag); };
    if (spec_.refresh_on_events && events_) {
      return intersect_tradable(refresh_on_event(previous ? *previous : CandidateSet{}, *events_, h.date(), recompute),
                                h);
    }
    return recompute();
  }

 private:
  CandidateSet rank(const History& h, Diagnostics& diag) const {
    std::map<std::string, double> scores;
    for (const auto& sym : tradable_universe(h, universe_)) {
      const Index j = *h.asset_index(sym);
      double s = kMissing;
      if (spec_.score_source == "scores") {
        s = h.latest_score(j).value_or(kMissing);
      } else if (h.now() >= spec_.momentum_lookback) {
        const double now = h.close(h.now(), j);
        const double then = h.close(h.now() - spec_.momentum_lookback, j);
        if (!is_missing(then)) s = now / then - 1.0;
      }
      scores[sym] = s;
    }
    try {
      return select_top_quantile(scores, spec_.quantile);
    } catch (const RuntimeError&) {
      diag.warn("top_quantile: no usable scores on " + h.date().iso() + ", holding cash");
      return {};
    }
  }

  std::vector<std::string> universe_;
  SelectorSpec spec_;
  std::optional<EventDates> events_;
};

class RotationSelector final : public Selector {
 public:
  explicit RotationSelector(SelectorSpec spec) : spec_(std::move(spec)) {}
  CandidateSet select(const History& h, const CandidateSet*, Diagnostics& diag) const override {
    CandidateSet chosen = select_rotation_groups(spec_.groups, h, spec_.ir_window);
    if (chosen.empty()) diag.warn("rotation: no group has a defined IR on " + h.date().iso() + ", risk-off");
    return intersect_tradable(chosen, h);
  }

 private:
  SelectorSpec spec_;
};

class EqualAllocator final : public Allocator {
 public:
  WeightVector allocate(const History& h, const CandidateSet& c, Diagnostics&) const override {
    return allocate_equal(c, h.date());
  }
};

class OptimizingAllocator final : public Allocator {
 public:
  explicit OptimizingAllocator(AllocatorSpec spec) : spec_(std::move(spec)) {}

  WeightVector allocate(const History& h, const CandidateSet& c, Diagnostics& diag) const override {
    if (c.size() < 2) return capped_equal(h, c);
    CovarianceEstimate est;
    try {
      est = estimate_moments(h, c, spec_.window, spec_.shrinkage, &diag);
    } catch (const RuntimeError& e) {
      diag.warn(std::string(e.what()) + "; falling back to equal weight");
      return capped_equal(h, c);
    }
    QpDiagnostics info;
    WeightVector w = spec_.kind == AllocatorSpec::Kind::kMinVariance
                         ? allocate_min_variance(est, spec_.cap, h.date(), &info)
                         : allocate_mean_variance(est, spec_.risk_aversion, spec_.cap, h.date(), &info);
    if (info.kkt_residual > 1e-8) {
      throw SolverError("KKT residual " + format_double(info.kkt_residual) + " above tolerance",
                        info.kkt_residual);
    }
    return w;
  }

 private:
  WeightVector capped_equal(const History& h, const CandidateSet& c) const {
    WeightVector w = allocate_equal(c, h.date());
    for (auto& [sym, v] : w.weights) v = std::min(v, spec_.cap);
    return w;
  }

  AllocatorSpec spec_;
};

class ExternalAllocator final : public Allocator {
 public:
  explicit ExternalAllocator(const fs::path& path) : weights_(path) {}
  WeightVector allocate(const History& h, const CandidateSet& c, Diagnostics& diag) const override {
    Date source;
    WeightVector w = weights_.allocate(h.date(), c, &source);
    if (source != h.date()) diag.warn("external weights: using rows dated " + source.iso());
    return w;
  }

 private:
  ExternalWeights weights_;
};

class ResidualMomentumAllocator final : public Allocator {
 public:
  ResidualMomentumAllocator(GroupSpec groups, AllocatorSpec spec) : groups_(std::move(groups)), spec_(std::move(spec)) {}
  WeightVector allocate(const History& h, const CandidateSet& c, Diagnostics&) const override {
    return allocate_residual_momentum(h, groups_, c, spec_.beta_window, spec_.momentum_window);
  }

 private:
  GroupSpec groups_;
  AllocatorSpec spec_;
};

class IdentityTiming final : public TimingRule {
 public:
  WeightVector adjust(const History&, const WeightVector& base, Diagnostics&) const override { return base; }
};

class KamaTiming final : public TimingRule {
 public:
  explicit KamaTiming(KamaParams params) : params_(params) { params_.validate(); }
  WeightVector adjust(const History& h, const WeightVector& base, Diagnostics&) const override {
    std::map<std::string, int> signals;
    for (const auto& [sym, w] : base.weights) {
      const VectorXd s = kama_signal(h.close_history(*h.asset_index(sym)), params_);
      const double now = s(h.now());
      signals[sym] = !is_missing(now) && now == 1.0 ? 1 : 0;
    }
    return apply_timing(base, signals);
  }

 private:
  KamaParams params_;
};

class TsmomTiming final : public TimingRule {
 public:
  explicit TsmomTiming(Index lookback) : lookback_(lookback) {
    if (lookback_ < 1) throw ConfigError("timing: lookback must be >= 1");
  }
  WeightVector adjust(const History& h, const WeightVector& base, Diagnostics&) const override {
    std::map<std::string, int> signals;
    for (const auto& [sym, w] : base.weights) {
      signals[sym] = tsmom_signal(h.return_history(*h.asset_index(sym)), lookback_, h.now()).value_or(0);
    }
    return apply_timing(base, signals);
  }

 private:
  Index lookback_;
};

class IdentityOverlay final : public RiskOverlay {
 public:
  WeightVector apply(const History&, const WeightVector& w, Diagnostics&) const override { return w; }
};

class VixOverlay final : public RiskOverlay {
 public:
  explicit VixOverlay(OverlaySpec spec) : spec_(std::move(spec)) { spec_.params.validate(); }
  WeightVector apply(const History& h, const WeightVector& w, Diagnostics& diag) const override {
    return apply_vix_overlay(w, h.aux(spec_.series), spec_.params, &diag);
  }

 private:
  OverlaySpec spec_;
};

std::vector<std::string> resolved_universe(const PipelineSpec& spec, const MarketPanel& panel) {
  std::vector<std::string> u = spec.universe.empty() ? panel.assets : spec.universe;
  if (spec.selector.kind == SelectorSpec::Kind::kRotation && spec.universe.empty()) {
    std::erase(u, spec.selector.groups.benchmark);
  }
  return u;
}

}  // namespace

std::unique_ptr<Selector> make_selector(const PipelineSpec& spec) {
  switch (spec.selector.kind) {
    case SelectorSpec::Kind::kAll: return std::make_unique<AllSelector>(spec.universe);
    case SelectorSpec::Kind::kTopQuantile:
      return std::make_unique<TopQuantileSelector>(spec.universe, spec.selector, spec.events);
    case SelectorSpec::Kind::kRotation: return std::make_unique<RotationSelector>(spec.selector);
  }
  throw ConfigError("unknown selector");
}

std::unique_ptr<Allocator> make_allocator(const PipelineSpec& spec) {
  switch (spec.allocator.kind) {
    case AllocatorSpec::Kind::kEqual: return std::make_unique<EqualAllocator>();
    case AllocatorSpec::Kind::kMeanVariance:
    case AllocatorSpec::Kind::kMinVariance: return std::make_unique<OptimizingAllocator>(spec.allocator);
    case AllocatorSpec::Kind::kExternal: return std::make_unique<ExternalAllocator>(spec.allocator.external_path);
    case AllocatorSpec::Kind::kResidualMomentum:
      return std::make_unique<ResidualMomentumAllocator>(spec.selector.groups, spec.allocator);
  }
  throw ConfigError("unknown allocator");
}

std::unique_ptr<TimingRule> make_timing(const TimingSpec& spec) {
  switch (spec.kind) {
    case TimingSpec::Kind::kIdentity: return std::make_unique<IdentityTiming>();
    case TimingSpec::Kind::kKama: return std::make_unique<KamaTiming>(spec.kama);
    case TimingSpec::Kind::kTsmom: return std::make_unique<TsmomTiming>(spec.lookback);
  }
  throw ConfigError("unknown timing rule");
}

std::unique_ptr<RiskOverlay> make_overlay(const OverlaySpec& spec) {
  if (spec.kind == OverlaySpec::Kind::kIdentity) return std::make_unique<IdentityOverlay>();
  return std::make_unique<VixOverlay>(spec);
}

// ---------------------------------------------------------------- pipeline

std::vector<Index> schedule_rows(Schedule schedule, const TradingCalendar& calendar, Index first, Index last,
                                 const EventDates* events) {
  std::vector<Index> rows;
  if (first > last) return rows;
  switch (schedule) {
    case Schedule::kDaily:
      for (Index i = first; i <= last; ++i) rows.push_back(i);
      break;
    case Schedule::kWeekly:
    case Schedule::kMonthly: {
      auto key = [&](Index i) {
        return schedule == Schedule::kWeekly ? calendar[i].iso_week_key() : calendar[i].month_key();
      };
      for (Index i = first; i <= last; ++i) {
        if (i == first || key(i) != key(i - 1)) rows.push_back(i);
      }
      break;
    }
    case Schedule::kOnEvent: {
      if (!events) throw ConfigError("on_event schedule requires an events file");
      std::set<Index> picked{first};
      auto add = [&](Date d) {
        const Index i = calendar.first_at_or_after(d);
        if (i >= first && i <= last) picked.insert(i);
      };
      for (Date d : events->global) add(d);
      for (const auto& [sym, dates] : events->per_symbol) {
        for (Date d : dates) add(d);
      }
      rows.assign(picked.begin(), picked.end());
      break;
    }
  }
  return rows;
}

Pipeline::Pipeline(PipelineSpec spec, const MarketPanel& panel, PipelineStages custom)
    : spec_(std::move(spec)), panel_(&panel) {
  spec_.universe = resolved_universe(spec_, panel);
  validate();
  const Index first = spec_.start ? panel.calendar.first_at_or_after(*spec_.start) : 0;
  const Index last = spec_.end ? panel.calendar.last_at_or_before(*spec_.end) : panel.num_dates() - 1;
  rows_ = weightflow::schedule_rows(spec_.schedule, panel.calendar, first, last, spec_.events ? &*spec_.events : nullptr);
  selector_ = custom.selector ? std::move(custom.selector) : make_selector(spec_);
  allocator_ = custom.allocator ? std::move(custom.allocator) : make_allocator(spec_);
  if (custom.timing) {
    timing_ = std::move(custom.timing);
  } else if (spec_.timing) {
    timing_ = make_timing(*spec_.timing);
  }
  if (custom.overlay) {
    overlay_ = std::move(custom.overlay);
  } else if (spec_.overlay) {
    overlay_ = make_overlay(*spec_.overlay);
  }
}

void Pipeline::validate() const {
  const auto& panel = *panel_;
  auto need_asset = [&](const std::string& sym, const std::string& what) {
    if (!panel.asset_index(sym)) throw ConfigError("strategy '" + spec_.id + "': " + what + " " + sym + " not in panel");
  };
  for (const auto& sym : spec_.universe) need_asset(sym, "universe symbol");
  const auto& sel = spec_.selector;
  if (sel.kind == SelectorSpec::Kind::kTopQuantile) {
    if (!(sel.quantile > 0.0 && sel.quantile <= 1.0)) throw ConfigError("selector: quantile must lie in (0, 1]");
    if (sel.score_source == "scores" && !panel.scores) {
      throw ConfigError("strategy '" + spec_.id + "': top_quantile on scores but no score file was ingested");
    }
    if (sel.refresh_on_events && !spec_.events) {
      throw ConfigError("strategy '" + spec_.id + "': refresh_on_events requires an events file");
    }
  }
  if (sel.kind == SelectorSpec::Kind::kRotation || spec_.allocator.kind == AllocatorSpec::Kind::kResidualMomentum) {
    sel.groups.validate();
    need_asset(sel.groups.benchmark, "benchmark");
    for (const auto& [name, members] : sel.groups.groups) {
      for (const auto& sym : members) need_asset(sym, "group member");
    }
  }
  const auto& a = spec_.allocator;
  if (a.kind == AllocatorSpec::Kind::kMeanVariance && !(a.risk_aversion > 0.0)) {
    throw ConfigError("allocator: risk_aversion must be positive");
  }
  if (!(a.cap > 0.0 && a.cap <= 1.0)) throw ConfigError("allocator: cap must lie in (0, 1]");
  if (!(a.shrinkage >= 0.0 && a.shrinkage <= 1.0)) throw ConfigError("allocator: shrinkage must lie in [0, 1]");
  if (a.window < 2) throw ConfigError("allocator: window must be >= 2");
  if (spec_.overlay && spec_.overlay->kind == OverlaySpec::Kind::kVix && !panel.aux.count(spec_.overlay->series)) {
    throw ConfigError("strategy '" + spec_.id + "': overlay needs aux series '" + spec_.overlay->series + "'");
  }
  if (spec_.schedule == Schedule::kOnEvent && !spec_.events) {
    throw ConfigError("strategy '" + spec_.id + "': on_event schedule requires an events file");
  }
}

RebalanceRecord Pipeline::step(Index row, const CandidateSet* previous) const {
  const History history(*panel_, row);
  Diagnostics diag;
  RebalanceRecord rec;
  rec.date = history.date();
  rec.row = row;
  const FeasibilityLimits limits{spec_.gross_cap, true, 1e-10};
  auto check = [&](const WeightVector& w, const char* stage) {
    if (auto problem = check_feasible(w, limits)) {
      throw RuntimeError("stage '" + std::string(stage) + "' emitted infeasible weights on " + rec.date.iso() +
                         ": " + *problem);
    }
  };

  rec.candidates = selector_->select(history, previous, diag);
  for (const auto& sym : rec.candidates.symbols()) {
    const auto j = panel_->asset_index(sym);
    if (!j || !history.tradable(*j)) {
      throw RuntimeError("stage 'select' chose untradable symbol " + sym + " on " + rec.date.iso());
    }
  }

  rec.base = allocator_->allocate(history, rec.candidates, diag);
  rec.base.date = rec.date;
  rec.base = restrict_weights(rec.base, rec.candidates, false);
  check(rec.base, "allocate");

  rec.timing = timing_ ? timing_->adjust(history, rec.base, diag) : rec.base;
  check(rec.timing, "time_adjust");
  for (const auto& [sym, w] : rec.timing.weights) {
    if (w > rec.base[sym] + 1e-15) {
      throw RuntimeError("stage 'time_adjust' increased the weight of " + sym + " on " + rec.date.iso());
    }
  }

  rec.final = overlay_ ? overlay_->apply(history, rec.timing, diag) : rec.timing;
  check(rec.final, "risk_overlay");
  rec.notes = std::move(diag.notes);
  return rec;
}

WeightTrajectory run_pipeline(const PipelineSpec& spec, const MarketPanel& panel) {
  return run_pipeline(Pipeline(spec, panel));
}

WeightTrajectory run_pipeline(const Pipeline& pipeline) {
  WeightTrajectory traj;
  traj.spec_id = pipeline.spec().id;
  const CandidateSet* previous = nullptr;
  for (Index row : pipeline.schedule_rows()) {
    traj.records.push_back(pipeline.step(row, previous));
    previous = &traj.records.back().candidates;
  }
  return traj;
}

const RebalanceRecord* WeightTrajectory::find(Date d) const {
  for (const auto& r : records) {
    if (r.date == d) return &r;
  }
  return nullptr;
}

void write_trajectory_csv(const WeightTrajectory& trajectory, std::ostream& out) {
  out << "date,symbol,w_base,w_timing,w_final\n";
  for (const auto& rec : trajectory.records) {
    std::set<std::string> symbols;
    for (const auto* w : {&rec.base, &rec.timing, &rec.final}) {
      for (const auto& [sym, v] : w->weights) symbols.insert(sym);
    }
    for (const auto& sym : symbols) {
      out << rec.date.iso() << ',' << sym << ',' << format_double(rec.base[sym]) << ','
          << format_double(rec.timing[sym]) << ',' << format_double(rec.final[sym]) << '\n';
    }
  }
}

}  // namespace weightflow
