#include "weightflow/config.hpp"

#include "json_util.hpp"


namespace weightflow {

namespace fs = std::filesystem;
using jsonutil::check_keys;
using jsonutil::get_or;
using jsonutil::get_required;

const PipelineSpec& RunConfig::strategy(const std::string& id) const {
  for (const auto& s : strategies) {
    if (s.id == id) return s;
  }
  throw ConfigError("no strategy with id '" + id + "'");
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const char* key, std::string_view ctx) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  try {
    return v.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(ctx) + ": '" + key + "' must be a path or a list of paths");
  }
}

DataConfig parse_data(const nlohmann::json& j, const fs::path& base) {
  constexpr std::string_view ctx = "data";
  check_keys(j, {"prices", "scores", "aux", "master_symbol", "columns", "snapshot", "source_id"}, ctx);
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  DataConfig d;
  for (const auto& p : string_list(j, "prices", ctx)) d.prices.push_back(resolve(p));
  if (j.contains("scores")) d.scores = resolve(get_required<std::string>(j, "scores", ctx));
  for (const auto& p : string_list(j, "aux", ctx)) d.aux.push_back(resolve(p));
  if (j.contains("master_symbol")) d.master_symbol = get_required<std::string>(j, "master_symbol", ctx);
  if (j.contains("snapshot")) d.snapshot = resolve(get_required<std::string>(j, "snapshot", ctx));
  d.source_id = get_or(j, "source_id", d.source_id, ctx);
  if (j.contains("columns")) {
    const auto& c = j.at("columns");
    check_keys(c, {"date", "symbol", "open", "close"}, "data.columns");
    d.columns.date = get_or(c, "date", d.columns.date, "data.columns");
    d.columns.symbol = get_or(c, "symbol", d.columns.symbol, "data.columns");
    d.columns.open = get_or(c, "open", d.columns.open, "data.columns");
    d.columns.close = get_or(c, "close", d.columns.close, "data.columns");
  }
  if (d.prices.empty() && !d.snapshot) throw ConfigError("data: give either 'prices' or 'snapshot'");
  if (!d.prices.empty() && d.snapshot) throw ConfigError("data: 'prices' and 'snapshot' are exclusive");
  return d;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& config_dir,
                           const std::optional<fs::path>& data_dir) {
  constexpr std::string_view ctx = "config";
  check_keys(j, {"data", "strategies", "cost_bps", "horizon", "fill_timing", "initial_equity", "broker", "guardrails",
                 "integer_shares", "output", "seed", "ablation"},
             ctx);
  RunConfig c;
  const fs::path data_base = data_dir.value_or(config_dir);
  c.data = parse_data(get_required<nlohmann::json>(j, "data", ctx), data_base);

  const auto strategies = get_required<nlohmann::json>(j, "strategies", ctx);
  if (!strategies.is_array() || strategies.empty()) throw ConfigError("config: 'strategies' must be a non-empty list");
  std::optional<Date> start;
  std::optional<Date> end;
  if (j.contains("horizon")) {
    const auto& h = j.at("horizon");
    check_keys(h, {"start", "end"}, "horizon");
    if (h.contains("start")) start = jsonutil::get_date(h, "start", "horizon");
    if (h.contains("end")) end = jsonutil::get_date(h, "end", "horizon");
  }
  const double cost_bps = get_or(j, "cost_bps", 10.0, ctx);
  for (const auto& s : strategies) {
    nlohmann::json spec_json = s;
    if (spec_json.is_object() && !spec_json.contains("cost_bps")) spec_json["cost_bps"] = cost_bps;
    PipelineSpec spec = parse_pipeline_spec(spec_json, data_base);
    if (!spec.start) spec.start = start;
    if (!spec.end) spec.end = end;
    for (const auto& other : c.strategies) {
      if (other.id == spec.id) throw ConfigError("config: duplicate strategy id '" + spec.id + "'");
    }
    c.strategies.push_back(std::move(spec));
  }

  c.fill_timing = parse_fill_timing(get_or<std::string>(j, "fill_timing", "close", ctx));
  c.initial_equity = get_or(j, "initial_equity", c.initial_equity, ctx);
  if (!(c.initial_equity > 0.0)) throw ConfigError("config: initial_equity must be positive");
  if (j.contains("broker")) c.broker = execution::parse_broker_config(j.at("broker"));
  if (j.contains("guardrails")) c.guardrails = execution::parse_guardrail_config(j.at("guardrails"));
  c.integer_shares = get_or(j, "integer_shares", c.integer_shares, ctx);
  const fs::path output(get_or<std::string>(j, "output", "out", ctx));
  c.output = (output.is_absolute() ? output : config_dir / output).lexically_normal();
  c.seed = get_or(j, "seed", c.seed, ctx);
  c.broker.seed = c.seed;

  c.ablation_timing.kind = TimingSpec::Kind::kTsmom;
  c.ablation_overlay.kind = OverlaySpec::Kind::kVix;
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    check_keys(a, {"timing", "overlay"}, "ablation");
    if (a.contains("timing")) {
      PipelineSpec probe = parse_pipeline_spec({{"id", "probe"}, {"timing", a.at("timing")}});
      c.ablation_timing = *probe.timing;
    }
    if (a.contains("overlay")) {
      PipelineSpec probe = parse_pipeline_spec({{"id", "probe"}, {"overlay", a.at("overlay")}});
      c.ablation_overlay = *probe.overlay;
    }
  }
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::optional<fs::path>& data_dir) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  RunConfig c = parse_run_config(j, path.parent_path(), data_dir);
  c.path = path;
  return c;
}

MarketPanel load_panel(const DataConfig& data) {
  if (data.snapshot) return load_snapshot(*data.snapshot);
  for (const auto& p : data.prices) {
    if (!fs::exists(p)) throw DataError("price file not found", p.string());
  }
  IngestOptions options;
  options.columns = data.columns;
  options.master_symbol = data.master_symbol;
  MarketPanel panel = ingest_ohlcv(std::span<const fs::path>(data.prices), options);
  if (data.scores) {
    if (!fs::exists(*data.scores)) throw DataError("score file not found", data.scores->string());
    attach_scores(panel, *data.scores);
  }
  for (const auto& a : data.aux) {
    if (!fs::exists(a)) throw DataError("aux file not found", a.string());
    attach_aux(panel, a);
  }
  return panel;
}

}  // namespace weightflow
