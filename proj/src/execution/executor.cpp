#include "weightflow/execution/executor.hpp"

#include "../json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace weightflow::execution {

// ---------------------------------------------------------------- guardrails

void GuardrailConfig::validate() const {
  if (!(max_order_notional > 0.0)) throw ConfigError("guardrails: max_order_notional must be positive");
  if (!(max_gross_exposure > 0.0)) throw ConfigError("guardrails: max_gross_exposure must be positive");
  if (max_price_age < 1) throw ConfigError("guardrails: max_price_age must be >= 1");
  if (!(max_symbol_weight > 0.0)) throw ConfigError("guardrails: max_symbol_weight must be positive");
  if (!(kill_switch_drawdown > 0.0 && kill_switch_drawdown <= 1.0)) {
    throw ConfigError("guardrails: kill_switch_drawdown must lie in (0, 1]");
  }
  if (!(min_order_notional >= 0.0)) throw ConfigError("guardrails: min_order_notional must be non-negative");
}

GuardrailConfig parse_guardrail_config(const nlohmann::json& j) {
  using namespace jsonutil;
  constexpr std::string_view ctx = "guardrails";
  check_keys(j, {"max_order_notional", "max_gross_exposure", "max_price_age", "max_symbol_weight",
                 "kill_switch_drawdown", "min_order_notional"},
             ctx);
  GuardrailConfig g;
  g.max_order_notional = get_or(j, "max_order_notional", g.max_order_notional, ctx);
  g.max_gross_exposure = get_or(j, "max_gross_exposure", g.max_gross_exposure, ctx);
  g.max_price_age = get_or<Index>(j, "max_price_age", g.max_price_age, ctx);
  g.max_symbol_weight = get_or(j, "max_symbol_weight", g.max_symbol_weight, ctx);
  g.kill_switch_drawdown = get_or(j, "kill_switch_drawdown", g.kill_switch_drawdown, ctx);
  g.min_order_notional = get_or(j, "min_order_notional", g.min_order_notional, ctx);
  g.validate();
  return g;
}

nlohmann::ordered_json to_json(const GuardrailConfig& g) {
  nlohmann::ordered_json j;
  j["max_order_notional"] = g.max_order_notional;
  j["max_gross_exposure"] = g.max_gross_exposure;
  j["max_price_age"] = g.max_price_age;
  j["max_symbol_weight"] = g.max_symbol_weight;
  j["kill_switch_drawdown"] = g.kill_switch_drawdown;
  j["min_order_notional"] = g.min_order_notional;
  return j;
}

GuardedTarget guard_target(const std::map<std::string, double>& target, const std::map<std::string, double>& current,
                           const std::map<std::string, Index>& age, double equity, double peak_equity,
                           bool already_killed, const GuardrailConfig& guards) {
  GuardedTarget g;
  for (const auto& [sym, w] : target) {
    if (w != 0.0) g.weights[sym] = w;
  }
  if (already_killed) {
    g.weights.clear();
    g.kill = true;
  } else if (peak_equity > 0.0 && equity / peak_equity - 1.0 <= -guards.kill_switch_drawdown) {
    g.triggers.push_back({"kill_switch", "", equity / peak_equity - 1.0, -guards.kill_switch_drawdown});
    g.weights.clear();
    g.kill = true;
  }
  for (auto& [sym, w] : g.weights) {
    if (w > guards.max_symbol_weight + 1e-12) {
      g.triggers.push_back({"symbol_cap", sym, w, guards.max_symbol_weight});
      w = guards.max_symbol_weight;
    }
  }
  double gross = 0.0;
  for (const auto& [sym, w] : g.weights) gross += w;
  if (gross > guards.max_gross_exposure + 1e-12) {
    g.triggers.push_back({"gross_exposure", "", gross, guards.max_gross_exposure});
    const double s = guards.max_gross_exposure / gross;
    for (auto& [sym, w] : g.weights) w *= s;
  }
  std::set<std::string> symbols;
  for (const auto& [sym, w] : g.weights) symbols.insert(sym);
  for (const auto& [sym, w] : current) symbols.insert(sym);
  for (const auto& sym : symbols) {
    auto it = age.find(sym);
    if (it == age.end() || it->second <= guards.max_price_age) continue;
    g.triggers.push_back({"stale_price", sym, static_cast<double>(it->second), static_cast<double>(guards.max_price_age)});
    auto held = current.find(sym);
    if (held == current.end() || held->second == 0.0) {
      g.weights.erase(sym);
    } else {
      g.weights[sym] = held->second;
    }
    g.frozen.insert(sym);
  }
  return g;
}

OrderPlan size_orders(const std::map<std::string, double>& weights, const Positions& positions, const PriceMap& prices,
                      double equity, const GuardrailConfig& guards, const SizingOptions& options) {
  if (!(equity > 0.0)) throw RuntimeError("cannot size orders with non-positive equity");
  OrderPlan plan;
  std::set<std::string> symbols;
  for (const auto& [sym, w] : weights) symbols.insert(sym);
  for (const auto& [sym, q] : positions) symbols.insert(sym);
  std::vector<Order> sells;
  std::vector<Order> buys;
  const double threshold = std::max(guards.min_order_notional, 1e-12 * equity);
  const double cap = guards.max_order_notional * equity;
  for (const auto& sym : symbols) {
    if (options.skip.count(sym)) continue;
    auto pit = prices.find(sym);
    if (pit == prices.end() || !(pit->second > 0.0)) {
      plan.triggers.push_back({"missing_price", sym, 0.0, 0.0});
      continue;
    }
    const double price = pit->second;
    auto wit = weights.find(sym);
    auto hit = positions.find(sym);
    const double w = wit == weights.end() ? 0.0 : wit->second;
    const double held = hit == positions.end() ? 0.0 : hit->second;
    double goal = w * equity / price;
    if (options.integer_shares) goal = std::floor(goal);
    double delta = goal - held;
    double notional = std::abs(delta) * price;
    if (notional <= threshold) continue;
    if (notional > cap * (1.0 + 1e-12)) {
      plan.triggers.push_back({"order_notional", sym, notional, cap});
      delta = std::copysign(cap / price, delta);
      if (options.integer_shares) delta = std::trunc(delta);
      if (delta == 0.0) continue;
    }
    Order o;
    o.symbol = sym;
    o.side = delta > 0.0 ? Side::kBuy : Side::kSell;
    o.quantity = std::abs(delta);
    o.reference_price = price;
    (delta > 0.0 ? buys : sells).push_back(std::move(o));
  }
  std::uint64_t id = options.first_order_id;
  for (auto* group : {&sells, &buys}) {
    for (auto& o : *group) {
      o.id = id++;
      plan.orders.push_back(std::move(o));
    }
  }
  return plan;
}

namespace {

std::map<std::string, double> book_weights(const Positions& positions, const PriceMap& prices, double equity) {
  std::map<std::string, double> w;
  for (const auto& [sym, q] : positions) {
    auto it = prices.find(sym);
    if (it != prices.end()) w[sym] = q * it->second / equity;
  }
  return w;
}

}  // namespace

OrderPlan weights_to_orders(const WeightVector& target, const Positions& positions, const PriceMap& prices,
                            double equity, const GuardrailConfig& guards, const SizingOptions& options) {
  if (!(equity > 0.0)) throw RuntimeError("cannot size orders with non-positive equity");
  const GuardedTarget g =
      guard_target(target.weights, book_weights(positions, prices, equity), {}, equity, 0.0, false, guards);
  SizingOptions o = options;
  o.skip.insert(g.frozen.begin(), g.frozen.end());
  OrderPlan plan = size_orders(g.weights, positions, prices, equity, guards, o);
  plan.triggers.insert(plan.triggers.begin(), g.triggers.begin(), g.triggers.end());
  return plan;
}

ReconciliationReport reconcile(const std::map<std::string, double>& target, const Positions& positions,
                               const PriceMap& prices, double equity, const SessionCounters& counters) {
  ReconciliationReport report;
  const auto realized = book_weights(positions, prices, equity);
  std::set<std::string> symbols;
  for (const auto& [sym, w] : target) symbols.insert(sym);
  for (const auto& [sym, w] : realized) symbols.insert(sym);
  for (const auto& sym : symbols) {
    auto t = target.find(sym);
    auto r = realized.find(sym);
    const double gap = (t == target.end() ? 0.0 : t->second) - (r == realized.end() ? 0.0 : r->second);
    report.gaps[sym] = gap;
    report.tracking_error += std::abs(gap);
  }
  report.rejection_rate = counters.rejection_rate();
  report.guardrail_triggers = counters.guardrail_triggers;
  return report;
}

// ---------------------------------------------------------------- session

SessionKilled::SessionKilled(std::uint64_t seq)
    : RuntimeError("session killed after journal record " + std::to_string(seq)), seq_(seq) {}

namespace {

struct ExecPrice {
  double price = kMissing;
  Index age = 0;
};

/// Price used to trade at row e: the open or close of e, else the last close before it.
ExecPrice exec_price(const MarketPanel& panel, Index asset, Index e, bool at_open) {
  const double own = at_open ? panel.open(e, asset) : panel.close(e, asset);
  if (!is_missing(own)) return {own, 0};
  for (Index r = e - 1; r >= 0; --r) {
    if (!is_missing(panel.close(r, asset))) return {panel.close(r, asset), e - r};
  }
  return {};
}

/// Last available close at or before row r.
double mark_price(const MarketPanel& panel, Index asset, Index r) {
  for (; r >= 0; --r) {
    if (!is_missing(panel.close(r, asset))) return panel.close(r, asset);
  }
  return kMissing;
}

std::string timestamp(Date d, bool at_open, int tick) {
  long ms = (at_open ? (9 * 3600 + 30 * 60) : 16 * 3600) * 1000L + tick;
  const long h = ms / 3600000;
  ms %= 3600000;
  const long m = ms / 60000;
  ms %= 60000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "T%02ld:%02ld:%02ld.%03ldZ", h, m, ms / 1000, ms % 1000);
  return d.iso() + buf;
}

nlohmann::ordered_json trigger_json(int rebalance, const GuardrailEvent& t) {
  nlohmann::ordered_json j;
  j["rebalance"] = rebalance;
  j["rule"] = t.rule;
  j["symbol"] = t.symbol;
  j["requested"] = t.requested;
  j["allowed"] = t.allowed;
  return j;
}

class Session {
 public:
  Session(const PipelineSpec& spec, const MarketPanel& panel, const BrokerSimConfig& broker,
          const GuardrailConfig& guards, const PaperOptions& options)
      : spec_(spec), panel_(panel), broker_cfg_(broker), guards_(guards), options_(options), broker_(broker) {
    guards_.validate();
    if (options_.journal.empty()) throw ConfigError("paper session needs a journal path");
    if (!(options_.initial_equity > 0.0)) throw ConfigError("initial equity must be positive");
    at_open_ = options_.fill_timing == FillTiming::kNextOpen;
    if (at_open_ && !panel_.has_open()) throw DataError("next_open fills need open prices in the panel");
  }

  PaperSessionResult run() {
    trajectory_ = run_pipeline(spec_, panel_);
    last_row_ = spec_.end ? panel_.calendar.last_at_or_before(*spec_.end) : panel_.num_dates() - 1;
    digest_ = config_digest();

    std::vector<JournalRecord> existing;
    if (options_.resume) existing = read_journal(options_.journal);
    if (existing.empty()) {
      writer_.emplace(options_.journal, true);
      nlohmann::ordered_json start;
      start["reason"] = "start";
      start["config_digest"] = digest_;
      start["cash"] = options_.initial_equity;
      start["peak_equity"] = options_.initial_equity;
      start["fill_timing"] = to_string(options_.fill_timing);
      exec_date_ = trajectory_.records.empty() ? panel_.calendar[0] : trajectory_.records.front().date;
      emit(RecordKind::kSessionCheckpoint, std::move(start));
    } else {
      resume_from(existing);
      writer_.emplace(options_.journal, false);
    }

    broker_.sync(Account{state_.cash, state_.positions});
    if (!state_.finished) {
      for (int k = state_.completed_rebalance + 1; k < static_cast<int>(trajectory_.records.size()); ++k) {
        rebalance(k);
      }
      nlohmann::ordered_json end;
      end["reason"] = "end";
      end["rebalances"] = state_.completed_rebalance + 1;
      emit(RecordKind::kSessionCheckpoint, std::move(end));
    }
    if (tail_pos_ < tail_.size()) {
      throw RuntimeError("journal holds records past the end of the session");
    }
    writer_.reset();

    PaperSessionResult result;
    const auto records = read_journal(options_.journal);
    result.state = recover_session(records).state;
    const Index first = trajectory_.records.empty() ? 0 : trajectory_.records.front().row;
    result.ledger = session_ledger(records, panel_, spec_.id, first, last_row_, options_.initial_equity);
    result.reconciliation = reconciliation_history(records);
    result.notes = notes_;
    result.records_written = written_;
    return result;
  }

 private:
  std::string config_digest() const {
    nlohmann::ordered_json j;
    j["strategy"] = to_json(spec_);
    j["broker"] = to_json(broker_cfg_);
    j["guardrails"] = to_json(guards_);
    j["fill_timing"] = to_string(options_.fill_timing);
    j["initial_equity"] = options_.initial_equity;
    j["integer_shares"] = options_.integer_shares;
    j["panel"] = panel_digest(panel_);
    j["salt"] = options_.digest_salt;
    return sha256_hex(j.dump());
  }

  /// Restores the state at the last checkpoint; later records become a tail
  /// that the regenerated events must reproduce before anything new is written.
  void resume_from(const std::vector<JournalRecord>& existing) {
    std::size_t cut = 0;
    for (std::size_t i = 0; i < existing.size(); ++i) {
      if (existing[i].kind == RecordKind::kSessionCheckpoint) cut = i + 1;
    }
    if (cut == 0) throw JournalError("journal has no checkpoint to resume from", 0);
    const std::vector<JournalRecord> prefix(existing.begin(), existing.begin() + static_cast<long>(cut));
    state_ = recover_session(prefix).state;
    if (state_.config_digest != digest_) {
      throw ConfigError("journal was written by a different configuration (digest mismatch)");
    }
    restore_clock(existing[cut - 1].ts);
    tail_.assign(existing.begin() + static_cast<long>(cut), existing.end());
    // Replay the tail as well so recovery problems surface before any new write.
    SessionState probe = state_;
    for (const auto& r : tail_) probe.apply(r);
    if (probe.in_rebalance) {
      notes_.push_back("resumed inside rebalance " + std::to_string(probe.current_rebalance) + " with " +
                       std::to_string(probe.open_orders.size() + probe.planned_orders.size()) +
                       " unresolved orders");
    }
  }

  /// Continues the timestamp sequence after the record stamped `ts`.
  void restore_clock(const std::string& ts) {
    int h = 0, m = 0, sec = 0, ms = 0;
    if (ts.size() < 24 || std::sscanf(ts.c_str() + 11, "%d:%d:%d.%d", &h, &m, &sec, &ms) != 4) {
      throw JournalError("bad journal timestamp '" + ts + "'", state_.last_seq);
    }
    exec_date_ = Date::parse(ts.substr(0, 10));
    const long base = (at_open_ ? (9 * 3600 + 30 * 60) : 16 * 3600) * 1000L;
    tick_ = static_cast<int>(((h * 60L + m) * 60L + sec) * 1000L + ms - base) + 1;
  }

  void emit(RecordKind kind, nlohmann::ordered_json payload) {
    JournalRecord r;
    r.seq = state_.last_seq + 1;
    r.ts = timestamp(exec_date_, at_open_, tick_);
    r.kind = kind;
    r.payload = std::move(payload);
    if (tail_pos_ < tail_.size()) {
      if (tail_[tail_pos_].to_line() != r.to_line()) {
        throw RuntimeError("journal record " + std::to_string(r.seq) + " differs from the replayed session");
      }
      ++tail_pos_;
    } else {
      writer_->append(r);
      ++written_;
      if (options_.kill_after && r.seq >= *options_.kill_after) throw SessionKilled(r.seq);
    }
    state_.apply(r);
    ++tick_;
  }

  void rebalance(int k) {
    const RebalanceRecord& rec = trajectory_.records[static_cast<std::size_t>(k)];
    const Index e = rec.row + (at_open_ ? 1 : 0);
    if (e > last_row_) {
      notes_.push_back(rec.date.iso() + ": no trading day left to execute the target");
      return;
    }
    exec_date_ = panel_.calendar[e];
    tick_ = 0;

    std::set<std::string> symbols;
    for (const auto& [sym, q] : state_.positions) symbols.insert(sym);
    for (const auto& [sym, w] : rec.final.weights) symbols.insert(sym);
    PriceMap prices;
    std::map<std::string, Index> age;
    for (const auto& sym : symbols) {
      const auto j = panel_.asset_index(sym);
      if (!j) throw DataError("symbol " + sym + " is not in the panel");
      const ExecPrice p = exec_price(panel_, *j, e, at_open_);
      if (is_missing(p.price)) {
        age[sym] = std::numeric_limits<Index>::max();
        continue;
      }
      prices[sym] = p.price;
      age[sym] = p.age;
    }
    const double equity_pre = book_equity(prices);
    const auto current = book_weights(state_.positions, prices, equity_pre);
    const double peak = std::max(state_.peak_equity, equity_pre);
    const GuardedTarget guarded =
        guard_target(rec.final.weights, current, age, equity_pre, peak, state_.killed, guards_);
    const double turnover = one_sided_turnover(guarded.weights, current);
    const double fee = spec_.cost_rate * traded_fraction(guarded.weights, current) * equity_pre;
    const double equity_post = equity_pre - fee;

    SizingOptions sizing;
    sizing.first_order_id = state_.next_order_id;
    sizing.integer_shares = options_.integer_shares;
    sizing.skip = guarded.frozen;
    const OrderPlan plan = size_orders(guarded.weights, state_.positions, prices, equity_post, guards_, sizing);

    nlohmann::ordered_json tw;
    tw["rebalance"] = k;
    tw["decision_date"] = rec.date.iso();
    tw["exec_date"] = exec_date_.iso();
    tw["target"] = rec.final.weights;
    tw["weights"] = guarded.weights;
    tw["equity_pre"] = equity_pre;
    tw["fee"] = fee;
    tw["turnover"] = turnover;
    tw["prices"] = prices;
    tw["orders"] = nlohmann::ordered_json::array();
    for (const auto& o : plan.orders) {
      nlohmann::ordered_json oj;
      oj["id"] = o.id;
      oj["symbol"] = o.symbol;
      oj["side"] = to_string(o.side);
      oj["quantity"] = o.quantity;
      oj["reference_price"] = o.reference_price;
      tw["orders"].push_back(std::move(oj));
    }
    emit(RecordKind::kTargetWeights, std::move(tw));
    for (const auto& t : guarded.triggers) emit(RecordKind::kGuardrailTrigger, trigger_json(k, t));
    for (const auto& t : plan.triggers) emit(RecordKind::kGuardrailTrigger, trigger_json(k, t));

    const std::vector<Order> planned = state_.planned_orders;
    for (const auto& o : planned) execute(k, o, equity_post);

    const double equity = book_equity(prices);
    const ReconciliationReport rep = reconcile(rec.final.weights, state_.positions, prices, equity, state_.counters);
    nlohmann::ordered_json cp;
    cp["reason"] = "rebalance";
    cp["rebalance"] = k;
    cp["date"] = exec_date_.iso();
    cp["cash"] = state_.cash;
    cp["positions"] = state_.positions;
    cp["equity"] = equity;
    cp["peak_equity"] = state_.peak_equity;
    cp["killed"] = state_.killed;
    cp["tracking_error"] = rep.tracking_error;
    cp["gaps"] = rep.gaps;
    cp["rejection_rate"] = rep.rejection_rate;
    cp["guardrail_triggers"] = rep.guardrail_triggers;
    emit(RecordKind::kSessionCheckpoint, std::move(cp));
  }

  void execute(int k, Order order, double equity) {
    if (order.side == Side::kBuy) {
      const double cost = order.quantity * order.reference_price;
      if (cost > state_.cash + 1e-9 * equity) {
        const double allowed = std::max(state_.cash, 0.0) / order.reference_price;
        emit(RecordKind::kGuardrailTrigger, trigger_json(k, {"insufficient_cash", order.symbol, order.quantity, allowed}));
        if (allowed * order.reference_price <= std::max(guards_.min_order_notional, 1e-12 * equity)) {
          emit(RecordKind::kRejection, rejection_json(order, "insufficient_cash", order.quantity, 1));
          return;
        }
        order.quantity = options_.integer_shares ? std::floor(allowed) : allowed;
      }
    }
    int attempt = 0;
    while (!broker_.connect(order.id, attempt)) {
      if (attempt >= broker_cfg_.max_retries) {
        emit(RecordKind::kRejection, rejection_json(order, "disconnected", order.quantity, attempt + 1));
        return;
      }
      tick_ += std::min(broker_cfg_.backoff_ticks << std::min(attempt, 20), broker_cfg_.max_backoff_ticks);
      ++attempt;
    }
    nlohmann::ordered_json sub;
    sub["order_id"] = order.id;
    sub["symbol"] = order.symbol;
    sub["side"] = to_string(order.side);
    sub["quantity"] = order.quantity;
    sub["reference_price"] = order.reference_price;
    sub["attempts"] = attempt + 1;
    emit(RecordKind::kOrderSubmitted, std::move(sub));

    const int submitted_at = tick_;
    for (const auto& ev : broker_.submit(order, order.reference_price)) {
      tick_ = std::max(tick_, submitted_at + ev.delay);
      if (ev.kind == BrokerEvent::Kind::kFill) {
        nlohmann::ordered_json f;
        f["order_id"] = order.id;
        f["symbol"] = order.symbol;
        f["side"] = to_string(order.side);
        f["quantity"] = ev.quantity;
        f["price"] = ev.price;
        f["partial"] = ev.partial;
        emit(RecordKind::kFill, std::move(f));
      } else {
        emit(RecordKind::kRejection, rejection_json(order, ev.reason, ev.quantity, attempt + 1));
      }
    }
  }

  static nlohmann::ordered_json rejection_json(const Order& o, const std::string& reason, double quantity,
                                               int attempts) {
    nlohmann::ordered_json j;
    j["order_id"] = o.id;
    j["symbol"] = o.symbol;
    j["reason"] = reason;
    j["quantity"] = quantity;
    j["attempts"] = attempts;
    return j;
  }

  double book_equity(const PriceMap& prices) const {
    double equity = state_.cash;
    for (const auto& [sym, q] : state_.positions) {
      auto it = prices.find(sym);
      if (it == prices.end()) throw DataError("no price to value the position in " + sym);
      equity += q * it->second;
    }
    return equity;
  }

  const PipelineSpec& spec_;
  const MarketPanel& panel_;
  BrokerSimConfig broker_cfg_;
  GuardrailConfig guards_;
  PaperOptions options_;
  SimulatedBroker broker_;
  bool at_open_ = false;

  WeightTrajectory trajectory_;
  Index last_row_ = 0;
  std::string digest_;
  SessionState state_;
  std::optional<JournalWriter> writer_;
  std::vector<JournalRecord> tail_;
  std::size_t tail_pos_ = 0;
  std::uint64_t written_ = 0;
  Date exec_date_;
  int tick_ = 0;
  std::vector<std::string> notes_;
};

}  // namespace

PaperSessionResult run_paper_session(const PipelineSpec& spec, const MarketPanel& panel, const BrokerSimConfig& broker,
                                     const GuardrailConfig& guards, const PaperOptions& options) {
  Session session(spec, panel, broker, guards, options);
  return session.run();
}

EquityLedger session_ledger(const std::vector<JournalRecord>& records, const MarketPanel& panel,
                            const std::string& spec_id, Index first_row, Index last_row, double initial_equity) {
  EquityLedger ledger;
  ledger.spec_id = spec_id;
  ledger.initial_equity = initial_equity;

  // Calendar row at which each record takes effect.
  std::vector<Index> effective(records.size(), first_row);
  Index current = first_row;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind == RecordKind::kTargetWeights) {
      const auto idx = panel.calendar.index_of(Date::parse(r.payload.at("exec_date").get<std::string>()));
      if (!idx) throw DataError("journal execution date is not in the panel calendar");
      current = *idx;
    } else if (r.kind == RecordKind::kSessionCheckpoint && r.payload.at("reason") == "start") {
      current = first_row;
    }
    effective[i] = current;
  }

  SessionState state;
  state.cash = initial_equity;
  std::size_t next = 0;
  for (Index t = first_row; t <= last_row; ++t) {
    double turnover = 0.0;
    double cost = 0.0;
    bool traded = false;
    while (next < records.size() && effective[next] <= t) {
      const auto& r = records[next];
      if (r.kind == RecordKind::kTargetWeights) {
        turnover += r.payload.at("turnover").get<double>();
        cost += r.payload.at("fee").get<double>();
        traded = true;
      }
      state.apply(r);
      ++next;
    }
    double equity = state.cash;
    std::map<std::string, double> values;
    for (const auto& [sym, q] : state.positions) {
      const double p = mark_price(panel, *panel.asset_index(sym), t);
      values[sym] = q * p;
      equity += q * p;
    }
    for (auto& [sym, v] : values) v /= equity;
    ledger.dates.push_back(panel.calendar[t]);
    ledger.equity.push_back(equity);
    ledger.gross_equity.push_back(kMissing);
    ledger.turnover.push_back(turnover);
    ledger.cost.push_back(cost);
    ledger.rebalanced.push_back(traded ? 1 : 0);
    ledger.weights.push_back(std::move(values));
  }
  return ledger;
}

std::vector<ReconciliationReport> reconciliation_history(const std::vector<JournalRecord>& records) {
  std::vector<ReconciliationReport> rows;
  for (const auto& r : records) {
    if (r.kind != RecordKind::kSessionCheckpoint || r.payload.at("reason") != "rebalance") continue;
    ReconciliationReport rep;
    rep.date = r.payload.at("date").get<std::string>();
    rep.tracking_error = r.payload.at("tracking_error").get<double>();
    rep.gaps = r.payload.at("gaps").get<std::map<std::string, double>>();
    rep.rejection_rate = r.payload.at("rejection_rate").get<double>();
    rep.guardrail_triggers = r.payload.at("guardrail_triggers").get<std::uint64_t>();
    rows.push_back(std::move(rep));
  }
  return rows;
}

void write_reconciliation_csv(const std::vector<ReconciliationReport>& rows, std::ostream& out) {
  out << "date,tracking_error_l1,rejection_rate,guardrail_triggers\n";
  for (const auto& r : rows) {
    out << r.date << ',' << format_double(r.tracking_error) << ',' << format_double(r.rejection_rate) << ','
        << r.guardrail_triggers << '\n';
  }
}

}  // namespace weightflow::execution
