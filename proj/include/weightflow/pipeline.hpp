#pragma once

#include "weightflow/allocation.hpp"
#include "weightflow/history.hpp"
#include "weightflow/market_data.hpp"
#include "weightflow/selection.hpp"
#include "weightflow/timing.hpp"
#include "weightflow/weights.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

// ---------------------------------------------------------------- stage specs

struct SelectorSpec {
  enum class Kind { kAll, kTopQuantile, kRotation };
  Kind kind = Kind::kAll;
  double quantile = 0.25;
  /// "scores" ranks by the panel's score matrix, "momentum" by trailing return.
  std::string score_source = "scores";
  Index momentum_lookback = 126;
  /// Reselect only on event dates (quarterly reports); requires events.
  bool refresh_on_events = false;
  GroupSpec groups;
  Index ir_window = 63;
};

struct AllocatorSpec {
  enum class Kind { kEqual, kMeanVariance, kMinVariance, kExternal, kResidualMomentum };
  Kind kind = Kind::kEqual;
  double risk_aversion = 1.0;
  Index window = 252;
  double shrinkage = 0.1;
  double cap = 1.0;
  std::filesystem::path external_path;
  Index beta_window = 126;
  Index momentum_window = 63;
};

struct TimingSpec {
  enum class Kind { kIdentity, kKama, kTsmom };
  Kind kind = Kind::kTsmom;
  KamaParams kama;
  Index lookback = 252;
};

struct OverlaySpec {
  enum class Kind { kIdentity, kVix };
  Kind kind = Kind::kVix;
  OverlayParams params;
  std::string series = "VIX";
};

enum class Schedule { kDaily, kWeekly, kMonthly, kOnEvent };

struct PipelineSpec {
  std::string id = "strategy";
  SelectorSpec selector;
  AllocatorSpec allocator;
  std::optional<TimingSpec> timing;
  std::optional<OverlaySpec> overlay;
  Schedule schedule = Schedule::kDaily;
  /// Empty means every panel asset (minus a rotation benchmark).
  std::vector<std::string> universe;
  /// Proportional cost per side as a fraction (0.001 = 10 bps).
  double cost_rate = 0.001;
  double gross_cap = 1.0;
  std::optional<Date> start;
  std::optional<Date> end;
  std::filesystem::path events_path;
  /// Loaded from events_path by the config layer or set directly.
  std::optional<EventDates> events;
};

/// Parses a pipeline spec object; unknown keys raise ConfigError. Relative
/// file paths resolve against `base_dir`.
PipelineSpec parse_pipeline_spec(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json to_json(const PipelineSpec& spec);

// ---------------------------------------------------------------- stages

class Selector {
 public:
  virtual ~Selector() = default;
  virtual CandidateSet select(const History& history, const CandidateSet* previous,
                              Diagnostics& diagnostics) const = 0;
};

class Allocator {
 public:
  virtual ~Allocator() = default;
  virtual WeightVector allocate(const History& history, const CandidateSet& candidates,
                                Diagnostics& diagnostics) const = 0;
};

class TimingRule {
 public:
  virtual ~TimingRule() = default;
  virtual WeightVector adjust(const History& history, const WeightVector& base,
                              Diagnostics& diagnostics) const = 0;
};

class RiskOverlay {
 public:
  virtual ~RiskOverlay() = default;
  virtual WeightVector apply(const History& history, const WeightVector& timed,
                             Diagnostics& diagnostics) const = 0;
};

std::unique_ptr<Selector> make_selector(const PipelineSpec& spec);
std::unique_ptr<Allocator> make_allocator(const PipelineSpec& spec);
std::unique_ptr<TimingRule> make_timing(const TimingSpec& spec);
std::unique_ptr<RiskOverlay> make_overlay(const OverlaySpec& spec);

// ---------------------------------------------------------------- running

struct RebalanceRecord {
  Date date;
  Index row = 0;
  CandidateSet candidates;
  WeightVector base;
  WeightVector timing;
  WeightVector final;
  std::vector<std::string> notes;
};

struct WeightTrajectory {
  std::string spec_id;
  std::vector<RebalanceRecord> records;

  const RebalanceRecord* find(Date d) const;
};

/// Custom stage implementations; a null member uses the stage PipelineSpec describes.
struct PipelineStages {
  std::unique_ptr<Selector> selector;
  std::unique_ptr<Allocator> allocator;
  std::unique_ptr<TimingRule> timing;
  std::unique_ptr<RiskOverlay> overlay;
};

/// A validated spec bound to a panel. Stages are built once and stepped one
/// rebalance at a time, each step seeing only a History truncated at its row.
class Pipeline {
 public:
  Pipeline(PipelineSpec spec, const MarketPanel& panel, PipelineStages custom = {});

  const PipelineSpec& spec() const { return spec_; }
  /// Panel rows on which the schedule rebalances, within [start, end].
  const std::vector<Index>& schedule_rows() const { return rows_; }
  RebalanceRecord step(Index row, const CandidateSet* previous) const;

 private:
  void validate() const;

  PipelineSpec spec_;
  const MarketPanel* panel_;
  std::vector<Index> rows_;
  std::unique_ptr<Selector> selector_;
  std::unique_ptr<Allocator> allocator_;
  std::unique_ptr<TimingRule> timing_;
  std::unique_ptr<RiskOverlay> overlay_;
};

WeightTrajectory run_pipeline(const Pipeline& pipeline);
WeightTrajectory run_pipeline(const PipelineSpec& spec, const MarketPanel& panel);

/// Rebalance rows of a schedule over panel rows [first, last].
std::vector<Index> schedule_rows(Schedule schedule, const TradingCalendar& calendar, Index first, Index last,
                                 const EventDates* events);

/// `date,symbol,w_base,w_timing,w_final`, one row per symbol weighted at any stage.
void write_trajectory_csv(const WeightTrajectory& trajectory, std::ostream& out);

}  // namespace weightflow
