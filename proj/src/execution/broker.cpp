#include "weightflow/execution/broker.hpp"

#include "../json_util.hpp"

#include <algorithm>
#include <random>

namespace weightflow::execution {

const char* to_string(Side side) { return side == Side::kBuy ? "buy" : "sell"; }

const char* to_string(OrderState state) {
  switch (state) {
    case OrderState::kPending: return "pending";
    case OrderState::kPartiallyFilled: return "partially_filled";
    case OrderState::kFilled: return "filled";
    case OrderState::kRejected: return "rejected";
    case OrderState::kCancelled: return "cancelled";
  }
  return "pending";
}

Side parse_side(const std::string& s) {
  if (s == "buy") return Side::kBuy;
  if (s == "sell") return Side::kSell;
  throw DataError("unknown order side '" + s + "'");
}

OrderState parse_order_state(const std::string& s) {
  for (auto st : {OrderState::kPending, OrderState::kPartiallyFilled, OrderState::kFilled, OrderState::kRejected,
                  OrderState::kCancelled}) {
    if (s == to_string(st)) return st;
  }
  throw DataError("unknown order state '" + s + "'");
}

nlohmann::ordered_json to_json(const Order& o) {
  nlohmann::ordered_json j;
  j["id"] = o.id;
  j["symbol"] = o.symbol;
  j["side"] = to_string(o.side);
  j["quantity"] = o.quantity;
  j["type"] = "market";
  j["reference_price"] = o.reference_price;
  j["created"] = o.created;
  j["state"] = to_string(o.state);
  j["filled"] = o.filled;
  return j;
}

Order order_from_json(const nlohmann::json& j) {
  Order o;
  o.id = j.at("id").get<std::uint64_t>();
  o.symbol = j.at("symbol").get<std::string>();
  o.side = parse_side(j.at("side").get<std::string>());
  o.quantity = j.at("quantity").get<double>();
  o.reference_price = j.at("reference_price").get<double>();
  o.created = j.value("created", std::string());
  o.state = parse_order_state(j.value("state", std::string("pending")));
  o.filled = j.value("filled", 0.0);
  return o;
}

void BrokerSimConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("broker: ") + name + " must lie in [0, 1]");
  };
  prob(partial_fill_probability, "partial_fill_probability");
  prob(rejection_probability, "rejection_probability");
  prob(disconnect_probability, "disconnect_probability");
  if (!(partial_fill_fraction > 0.0 && partial_fill_fraction < 1.0)) {
    throw ConfigError("broker: partial_fill_fraction must lie in (0, 1)");
  }
  if (!(slippage_bps >= 0.0)) throw ConfigError("broker: slippage_bps must be non-negative");
  if (latency_ticks < 0 || max_retries < 0 || backoff_ticks < 0 || max_backoff_ticks < backoff_ticks) {
    throw ConfigError("broker: latency, retries and backoff must be non-negative with max_backoff >= backoff");
  }
  for (const auto& d : disconnects) {
    if (d.failures < 0) throw ConfigError("broker: disconnect failures must be non-negative");
  }
}

bool BrokerSimConfig::ideal() const {
  return slippage_bps == 0.0 && partial_fill_probability == 0.0 && rejection_probability == 0.0 &&
         latency_ticks == 0 && disconnect_probability == 0.0 && disconnects.empty();
}

BrokerSimConfig parse_broker_config(const nlohmann::json& j) {
  using namespace jsonutil;
  constexpr std::string_view ctx = "broker";
  check_keys(j, {"slippage_bps", "partial_fill_probability", "partial_fill_fraction", "remainder",
                 "rejection_probability", "latency_ticks", "disconnect_probability", "disconnects", "max_retries",
                 "backoff_ticks", "max_backoff_ticks"},
             ctx);
  BrokerSimConfig c;
  c.slippage_bps = get_or(j, "slippage_bps", c.slippage_bps, ctx);
  c.partial_fill_probability = get_or(j, "partial_fill_probability", c.partial_fill_probability, ctx);
  c.partial_fill_fraction = get_or(j, "partial_fill_fraction", c.partial_fill_fraction, ctx);
  const auto remainder = get_or<std::string>(j, "remainder", "cancel", ctx);
  if (remainder == "cancel") {
    c.remainder = RemainderPolicy::kCancel;
  } else if (remainder == "refill") {
    c.remainder = RemainderPolicy::kRefill;
  } else {
    throw ConfigError("broker: remainder must be 'cancel' or 'refill'");
  }
  c.rejection_probability = get_or(j, "rejection_probability", c.rejection_probability, ctx);
  c.latency_ticks = get_or(j, "latency_ticks", c.latency_ticks, ctx);
  c.disconnect_probability = get_or(j, "disconnect_probability", c.disconnect_probability, ctx);
  if (j.contains("disconnects")) {
    for (const auto& d : j.at("disconnects")) {
      check_keys(d, {"order", "failures"}, "broker.disconnects");
      c.disconnects.push_back({get_required<std::uint64_t>(d, "order", "broker.disconnects"),
                               get_required<int>(d, "failures", "broker.disconnects")});
    }
  }
  c.max_retries = get_or(j, "max_retries", c.max_retries, ctx);
  c.backoff_ticks = get_or(j, "backoff_ticks", c.backoff_ticks, ctx);
  c.max_backoff_ticks = get_or(j, "max_backoff_ticks", c.max_backoff_ticks, ctx);
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const BrokerSimConfig& c) {
  nlohmann::ordered_json j;
  j["slippage_bps"] = c.slippage_bps;
  j["partial_fill_probability"] = c.partial_fill_probability;
  j["partial_fill_fraction"] = c.partial_fill_fraction;
  j["remainder"] = c.remainder == RemainderPolicy::kCancel ? "cancel" : "refill";
  j["rejection_probability"] = c.rejection_probability;
  j["latency_ticks"] = c.latency_ticks;
  j["disconnect_probability"] = c.disconnect_probability;
  j["disconnects"] = nlohmann::ordered_json::array();
  for (const auto& d : c.disconnects) j["disconnects"].push_back({{"order", d.order_id}, {"failures", d.failures}});
  j["max_retries"] = c.max_retries;
  j["backoff_ticks"] = c.backoff_ticks;
  j["max_backoff_ticks"] = c.max_backoff_ticks;
  j["seed"] = c.seed;
  return j;
}

double seeded_uniform(std::uint64_t seed, std::uint64_t order_id, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(order_id), static_cast<std::uint32_t>(order_id >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 gen(seq);
  // std::generate_canonical is not bit-identical across standard libraries.
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

namespace {

enum Stream : std::uint64_t { kReject = 1, kPartial = 2, kConnect = 16 };

}  // namespace

SimulatedBroker::SimulatedBroker(BrokerSimConfig config, Account initial)
    : config_(std::move(config)), account_(std::move(initial)) {
  config_.validate();
}

bool SimulatedBroker::connect(std::uint64_t order_id, int attempt) {
  int forced = 0;
  for (const auto& d : config_.disconnects) {
    if (d.order_id == order_id) forced = std::max(forced, d.failures);
  }
  if (attempt < forced) return false;
  if (config_.disconnect_probability > 0.0 &&
      seeded_uniform(config_.seed, order_id, kConnect + static_cast<std::uint64_t>(attempt)) <
          config_.disconnect_probability) {
    return false;
  }
  return true;
}

std::vector<BrokerEvent> SimulatedBroker::submit(const Order& order, double market_price) {
  std::vector<BrokerEvent> events;
  if (config_.rejection_probability > 0.0 &&
      seeded_uniform(config_.seed, order.id, kReject) < config_.rejection_probability) {
    events.push_back({BrokerEvent::Kind::kRejection, order.quantity, 0.0, "broker_rejected", config_.latency_ticks});
    return events;
  }
  const double slip = config_.slippage_bps * 1e-4;
  const double price = order.side == Side::kBuy ? market_price * (1.0 + slip) : market_price * (1.0 - slip);
  const bool partial = config_.partial_fill_probability > 0.0 &&
                       seeded_uniform(config_.seed, order.id, kPartial) < config_.partial_fill_probability;
  if (!partial) {
    events.push_back({BrokerEvent::Kind::kFill, order.quantity, price, "", config_.latency_ticks});
    book(order, order.quantity, price);
    return events;
  }
  const double first = order.quantity * config_.partial_fill_fraction;
  const double rest = order.quantity - first;
  events.push_back({BrokerEvent::Kind::kFill, first, price, "", config_.latency_ticks, true});
  book(order, first, price);
  if (config_.remainder == RemainderPolicy::kRefill) {
    events.push_back({BrokerEvent::Kind::kFill, rest, price, "", config_.latency_ticks + 1});
    book(order, rest, price);
  } else {
    events.push_back({BrokerEvent::Kind::kRejection, rest, 0.0, "remainder_cancelled", config_.latency_ticks + 1});
  }
  return events;
}

bool SimulatedBroker::cancel(std::uint64_t) {
  // Market orders settle inside submit, so there is never anything open to cancel.
  return false;
}

void SimulatedBroker::book(const Order& order, double quantity, double price) {
  const double signed_qty = order.side == Side::kBuy ? quantity : -quantity;
  account_.positions[order.symbol] += signed_qty;
  account_.cash -= signed_qty * price;
  if (account_.positions[order.symbol] == 0.0) account_.positions.erase(order.symbol);
}

}  // namespace weightflow::execution
