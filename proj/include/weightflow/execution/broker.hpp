#pragma once

#include "weightflow/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace weightflow::execution {

enum class Side { kBuy, kSell };
enum class OrderState { kPending, kPartiallyFilled, kFilled, kRejected, kCancelled };

const char* to_string(Side side);
const char* to_string(OrderState state);
Side parse_side(const std::string& s);
OrderState parse_order_state(const std::string& s);

/// A market order for a quantity of shares.
struct Order {
  std::uint64_t id = 0;
  std::string symbol;
  Side side = Side::kBuy;
  double quantity = 0.0;
  double reference_price = 0.0;
  std::string created;
  OrderState state = OrderState::kPending;
  double filled = 0.0;

  double signed_quantity() const { return side == Side::kBuy ? quantity : -quantity; }
};

nlohmann::ordered_json to_json(const Order& order);
Order order_from_json(const nlohmann::json& j);

using Positions = std::map<std::string, double>;
using PriceMap = std::map<std::string, double>;

enum class RemainderPolicy { kCancel, kRefill };

struct DisconnectInjection {
  std::uint64_t order_id = 0;
  int failures = 0;
};

/// Fault model of the simulated broker. All randomness derives from `seed`.
struct BrokerSimConfig {
  double slippage_bps = 0.0;
  double partial_fill_probability = 0.0;
  double partial_fill_fraction = 0.5;
  RemainderPolicy remainder = RemainderPolicy::kCancel;
  double rejection_probability = 0.0;
  int latency_ticks = 0;
  /// Each connection attempt fails with this probability.
  double disconnect_probability = 0.0;
  /// Forced failures for specific orders, on top of the random ones.
  std::vector<DisconnectInjection> disconnects;
  int max_retries = 3;
  int backoff_ticks = 1;
  int max_backoff_ticks = 8;
  std::uint64_t seed = 42;

  void validate() const;
  bool ideal() const;
};

BrokerSimConfig parse_broker_config(const nlohmann::json& j);
nlohmann::ordered_json to_json(const BrokerSimConfig& config);

/// Something the broker reports back about a submitted order.
struct BrokerEvent {
  enum class Kind { kFill, kRejection };
  Kind kind = Kind::kFill;
  double quantity = 0.0;
  double price = 0.0;
  std::string reason;
  /// Ticks after submission at which the event arrives.
  int delay = 0;
  bool partial = false;
};

struct Account {
  double cash = 0.0;
  Positions positions;
};

/// Broker verbs the executor relies on. Mirrors a REST brokerage client so a
/// real connection could stand in for the simulator.
class Broker {
 public:
  virtual ~Broker() = default;
  /// True when the given connection attempt for an order succeeds.
  virtual bool connect(std::uint64_t order_id, int attempt) = 0;
  virtual std::vector<BrokerEvent> submit(const Order& order, double market_price) = 0;
  virtual bool cancel(std::uint64_t order_id) = 0;
  virtual Positions positions() const = 0;
  virtual Account account() const = 0;
};

/// In-process broker with seeded slippage, partial fills, rejections,
/// latency and disconnects. Outcomes depend only on (seed, order id), so a
/// replay after a crash reproduces them exactly.
class SimulatedBroker final : public Broker {
 public:
  explicit SimulatedBroker(BrokerSimConfig config, Account initial = {});

  bool connect(std::uint64_t order_id, int attempt) override;
  std::vector<BrokerEvent> submit(const Order& order, double market_price) override;
  bool cancel(std::uint64_t order_id) override;
  Positions positions() const override { return account_.positions; }
  Account account() const override { return account_; }

  /// Overwrites the broker-side book, used after recovery.
  void sync(Account account) { account_ = std::move(account); }
  const BrokerSimConfig& config() const { return config_; }

 private:
  void book(const Order& order, double quantity, double price);

  BrokerSimConfig config_;
  Account account_;
};

/// Uniform draw in [0, 1) for (seed, order, stream); identical on every platform.
double seeded_uniform(std::uint64_t seed, std::uint64_t order_id, std::uint64_t stream);

}  // namespace weightflow::execution
