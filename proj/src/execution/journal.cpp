#include "weightflow/execution/journal.hpp"

#include "weightflow/market_data.hpp"


#include <unistd.h>

namespace weightflow::execution {

namespace {

constexpr RecordKind kAllKinds[] = {RecordKind::kTargetWeights, RecordKind::kOrderSubmitted,
                                    RecordKind::kFill,          RecordKind::kRejection,
                                    RecordKind::kGuardrailTrigger, RecordKind::kSessionCheckpoint};

}  // namespace

const char* to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::kTargetWeights: return "TargetWeights";
    case RecordKind::kOrderSubmitted: return "OrderSubmitted";
    case RecordKind::kFill: return "Fill";
    case RecordKind::kRejection: return "Rejection";
    case RecordKind::kGuardrailTrigger: return "GuardrailTrigger";
    case RecordKind::kSessionCheckpoint: return "SessionCheckpoint";
  }
  return "SessionCheckpoint";
}

RecordKind parse_record_kind(const std::string& s) {
  for (auto k : kAllKinds) {
    if (s == to_string(k)) return k;
  }
  throw DataError("unknown journal record kind '" + s + "'");
}

std::string JournalRecord::to_line() const {
  nlohmann::ordered_json j;
  j["seq"] = seq;
  j["ts"] = ts;
  j["kind"] = to_string(kind);
  j["payload"] = payload;
  return j.dump();
}

JournalRecord JournalRecord::from_line(const std::string& line) {
  const auto j = nlohmann::ordered_json::parse(line);
  if (!j.is_object() || j.size() != 4 || !j.contains("seq") || !j.contains("ts") || !j.contains("kind") ||
      !j.contains("payload") || !j.at("payload").is_object()) {
    throw DataError("journal record must have exactly seq, ts, kind and an object payload");
  }
  JournalRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.ts = j.at("ts").get<std::string>();
  r.kind = parse_record_kind(j.at("kind").get<std::string>());
  r.payload = j.at("payload");
  return r;
}

JournalError::JournalError(const std::string& what, std::uint64_t last_consistent_seq)
    : DataError(what + " (last consistent seq " + std::to_string(last_consistent_seq) + ")"),
      last_seq_(last_consistent_seq) {}

std::vector<JournalRecord> read_journal(const std::filesystem::path& path) {
  std::vector<JournalRecord> records;
  if (!std::filesystem::exists(path)) return records;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::uint64_t last = records.size();
    if (nl == std::string::npos) throw JournalError(path.string() + ": truncated final record", last);
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    JournalRecord r;
    try {
      r = JournalRecord::from_line(line);
    } catch (const std::exception& e) {
      throw JournalError(path.string() + ": corrupt record after seq " + std::to_string(last) + ": " + e.what(),
                         last);
    }
    if (r.seq != last + 1) {
      throw JournalError(path.string() + ": expected seq " + std::to_string(last + 1) + ", found " +
                             std::to_string(r.seq),
                         last);
    }
    records.push_back(std::move(r));
  }
  return records;
}

JournalWriter::JournalWriter(const std::filesystem::path& path, bool truncate) : path_(path.string()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path_.c_str(), truncate ? "wb" : "ab");
  if (!file_) throw RuntimeError("cannot open journal " + path_);
}

JournalWriter::~JournalWriter() {
  if (file_) std::fclose(file_);
}

void JournalWriter::append(const JournalRecord& record) {
  const std::string line = record.to_line() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw RuntimeError("failed writing journal " + path_);
  }
  if (record.kind == RecordKind::kSessionCheckpoint && ::fsync(::fileno(file_)) != 0) {
    throw RuntimeError("fsync failed on journal " + path_);
  }
}

// ---------------------------------------------------------------- state

namespace {

Order take_planned(std::vector<Order>& planned, std::uint64_t id, std::uint64_t seq) {
  for (auto it = planned.begin(); it != planned.end(); ++it) {
    if (it->id == id) {
      Order o = *it;
      planned.erase(it);
      return o;
    }
  }
  throw JournalError("order " + std::to_string(id) + " was never planned", seq - 1);
}

void book(Positions& positions, double& cash, const std::string& symbol, Side side, double qty, double price) {
  const double signed_qty = side == Side::kBuy ? qty : -qty;
  double& held = positions[symbol];
  held += signed_qty;
  cash -= signed_qty * price;
  if (held == 0.0) positions.erase(symbol);
}

}  // namespace

void SessionState::apply(const JournalRecord& r) {
  if (r.seq != last_seq + 1) {
    throw JournalError("record seq " + std::to_string(r.seq) + " does not follow " + std::to_string(last_seq),
                       last_seq);
  }
  const auto& p = r.payload;
  auto fail = [&](const std::string& why) -> JournalError {
    return JournalError("record " + std::to_string(r.seq) + " (" + to_string(r.kind) + "): " + why, last_seq);
  };
  try {
    switch (r.kind) {
      case RecordKind::kSessionCheckpoint: {
        const auto reason = p.at("reason").get<std::string>();
        if (reason == "start") {
          if (last_seq != 0) throw fail("start checkpoint must come first");
          config_digest = p.at("config_digest").get<std::string>();
          cash = p.at("cash").get<double>();
          peak_equity = p.at("peak_equity").get<double>();
        } else if (reason == "rebalance") {
          if (!in_rebalance || p.at("rebalance").get<int>() != current_rebalance) {
            throw fail("checkpoint does not close the open rebalance");
          }
          if (!open_orders.empty() || !planned_orders.empty()) throw fail("orders still outstanding");
          if (p.at("cash").get<double>() != cash || p.at("positions").get<Positions>() != positions) {
            throw fail("checkpoint book disagrees with replayed fills");
          }
          completed_rebalance = current_rebalance;
          in_rebalance = false;
          peak_equity = p.at("peak_equity").get<double>();
        } else if (reason == "end") {
          if (in_rebalance) throw fail("session ended inside a rebalance");
          finished = true;
        } else {
          throw fail("unknown checkpoint reason '" + reason + "'");
        }
        break;
      }
      case RecordKind::kTargetWeights: {
        const int k = p.at("rebalance").get<int>();
        if (in_rebalance || k <= completed_rebalance) throw fail("rebalance out of order");
        current_rebalance = k;
        in_rebalance = true;
        cash -= p.at("fee").get<double>();
        peak_equity = std::max(peak_equity, p.at("equity_pre").get<double>());
        last_target = p.at("target").get<std::map<std::string, double>>();
        last_target_date = p.at("exec_date").get<std::string>();
        planned_orders.clear();
        for (const auto& o : p.at("orders")) {
          Order order = order_from_json(o);
          order.created = r.ts;
          next_order_id = std::max(next_order_id, order.id + 1);
          planned_orders.push_back(std::move(order));
        }
        break;
      }
      case RecordKind::kGuardrailTrigger:
        ++counters.guardrail_triggers;
        if (p.at("rule").get<std::string>() == "kill_switch") killed = true;
        break;
      case RecordKind::kOrderSubmitted: {
        Order o = take_planned(planned_orders, p.at("order_id").get<std::uint64_t>(), r.seq);
        o.quantity = p.at("quantity").get<double>();
        o.state = OrderState::kPending;
        open_orders[o.id] = o;
        ++counters.orders;
        break;
      }
      case RecordKind::kFill: {
        auto it = open_orders.find(p.at("order_id").get<std::uint64_t>());
        if (it == open_orders.end()) throw fail("fill for an order that is not open");
        Order& o = it->second;
        const double qty = p.at("quantity").get<double>();
        book(positions, cash, o.symbol, o.side, qty, p.at("price").get<double>());
        o.filled += qty;
        if (p.value("partial", false)) {
          o.state = OrderState::kPartiallyFilled;
        } else {
          open_orders.erase(it);
        }
        break;
      }
      case RecordKind::kRejection: {
        const auto id = p.at("order_id").get<std::uint64_t>();
        const auto reason = p.at("reason").get<std::string>();
        if (reason == "disconnected" || reason == "insufficient_cash") {
          take_planned(planned_orders, id, r.seq);
          ++counters.orders;
          ++counters.rejections;
        } else {
          if (!open_orders.erase(id)) throw fail("rejection for an order that is not open");
          if (reason == "remainder_cancelled") {
            ++counters.cancellations;
          } else {
            ++counters.rejections;
          }
        }
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed payload: ") + e.what());
  }
  last_seq = r.seq;
}

nlohmann::ordered_json SessionState::to_json() const {
  nlohmann::ordered_json j;
  j["last_seq"] = last_seq;
  j["config_digest"] = config_digest;
  j["cash"] = cash;
  j["positions"] = positions;
  j["open_orders"] = nlohmann::ordered_json::array();
  for (const auto& [id, o] : open_orders) j["open_orders"].push_back(execution::to_json(o));
  j["planned_orders"] = nlohmann::ordered_json::array();
  for (const auto& o : planned_orders) j["planned_orders"].push_back(execution::to_json(o));
  j["next_order_id"] = next_order_id;
  j["last_target"] = last_target;
  j["last_target_date"] = last_target_date;
  j["current_rebalance"] = current_rebalance;
  j["completed_rebalance"] = completed_rebalance;
  j["in_rebalance"] = in_rebalance;
  j["finished"] = finished;
  j["peak_equity"] = peak_equity;
  j["killed"] = killed;
  j["counters"] = {{"orders", counters.orders},
                   {"rejections", counters.rejections},
                   {"cancellations", counters.cancellations},
                   {"guardrail_triggers", counters.guardrail_triggers}};
  return j;
}

std::string state_json(const SessionState& state) { return state.to_json().dump(2) + "\n"; }

RecoveredSession recover_session(const std::vector<JournalRecord>& records, double starting_cash) {
  RecoveredSession out;
  out.state.cash = starting_cash;
  out.state.peak_equity = starting_cash;
  for (const auto& r : records) out.state.apply(r);
  out.records = records.size();
  out.needs_reconciliation = out.state.in_rebalance;
  return out;
}

RecoveredSession recover_session(const std::filesystem::path& journal, double starting_cash) {
  return recover_session(read_journal(journal), starting_cash);
}

}  // namespace weightflow::execution
