#pragma once

#include "weightflow/backtest.hpp"
#include "weightflow/execution/executor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace weightflow {

struct DataConfig {
  std::vector<std::filesystem::path> prices;
  std::optional<std::filesystem::path> scores;
  std::vector<std::filesystem::path> aux;
  std::optional<std::string> master_symbol;
  OhlcvColumns columns;
  /// Load a persisted snapshot instead of raw files.
  std::optional<std::filesystem::path> snapshot;
  std::string source_id = "local-csv";
};

/// One declarative run: data, strategies, costs, horizon, execution and output.
struct RunConfig {
  std::filesystem::path path;
  DataConfig data;
  std::vector<PipelineSpec> strategies;
  FillTiming fill_timing = FillTiming::kClose;
  double initial_equity = 1.0;
  execution::BrokerSimConfig broker;
  execution::GuardrailConfig guardrails;
  bool integer_shares = false;
  std::filesystem::path output = "out";
  std::uint64_t seed = 42;
  /// Timing and overlay stages swapped in by `--ablate` when a strategy has none.
  TimingSpec ablation_timing;
  OverlaySpec ablation_overlay;

  const PipelineSpec& strategy(const std::string& id) const;
};

/// Parses and validates a run config. Relative data paths resolve against
/// `data_dir` when given, otherwise against the config file's directory.
/// Unknown keys anywhere raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& config_dir,
                           const std::optional<std::filesystem::path>& data_dir = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::optional<std::filesystem::path>& data_dir = std::nullopt);

MarketPanel load_panel(const DataConfig& data);

}  // namespace weightflow
