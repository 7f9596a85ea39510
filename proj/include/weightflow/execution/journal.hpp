#pragma once

#include "weightflow/execution/broker.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace weightflow::execution {

enum class RecordKind { kTargetWeights, kOrderSubmitted, kFill, kRejection, kGuardrailTrigger, kSessionCheckpoint };

const char* to_string(RecordKind kind);
RecordKind parse_record_kind(const std::string& s);

/// One journal line: `{"seq":..,"ts":..,"kind":..,"payload":{..}}`.
struct JournalRecord {
  std::uint64_t seq = 0;
  std::string ts;
  RecordKind kind = RecordKind::kSessionCheckpoint;
  nlohmann::ordered_json payload;

  std::string to_line() const;
  static JournalRecord from_line(const std::string& line);
};

/// Raised when a journal cannot be trusted past some record. Recovery stops
/// there instead of guessing.
class JournalError : public DataError {
 public:
  JournalError(const std::string& what, std::uint64_t last_consistent_seq);
  std::uint64_t last_consistent_seq() const { return last_seq_; }

 private:
  std::uint64_t last_seq_;
};

/// Reads every record, checking that seq runs 1, 2, 3, ... without gaps and
/// every line parses. A missing file reads as an empty journal.
std::vector<JournalRecord> read_journal(const std::filesystem::path& path);

/// Append-only JSONL writer. Every record is flushed; checkpoints are also
/// fsynced.
class JournalWriter {
 public:
  /// `truncate` starts a new journal; otherwise records are appended.
  JournalWriter(const std::filesystem::path& path, bool truncate);
  ~JournalWriter();
  JournalWriter(const JournalWriter&) = delete;
  JournalWriter& operator=(const JournalWriter&) = delete;

  void append(const JournalRecord& record);

 private:
  std::FILE* file_ = nullptr;
  std::string path_;
};

/// Counters behind the deployment indicators.
struct SessionCounters {
  std::uint64_t orders = 0;  ///< orders that reached the broker or exhausted retries
  std::uint64_t rejections = 0;  ///< broker rejections, disconnects and cash refusals
  std::uint64_t cancellations = 0;  ///< cancelled remainders of partial fills
  std::uint64_t guardrail_triggers = 0;

  double rejection_rate() const {
    return orders == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(orders);
  }
};

/// Everything the executor knows, rebuilt purely from journal records.
struct SessionState {
  std::uint64_t last_seq = 0;
  std::string config_digest;
  double cash = 0.0;
  Positions positions;
  /// Submitted orders still waiting for a fill or rejection.
  std::map<std::uint64_t, Order> open_orders;
  /// Orders planned by the current rebalance but not yet sent.
  std::vector<Order> planned_orders;
  std::uint64_t next_order_id = 1;
  /// Strategy target of the latest rebalance and the date it was executed.
  std::map<std::string, double> last_target;
  std::string last_target_date;
  int current_rebalance = -1;
  int completed_rebalance = -1;
  bool in_rebalance = false;
  bool finished = false;
  double peak_equity = 0.0;
  bool killed = false;
  SessionCounters counters;

  /// Applies one record. Throws JournalError when the record is out of
  /// sequence or inconsistent with the state.
  void apply(const JournalRecord& record);

  /// Canonical serialization used for byte-level state comparison.
  nlohmann::ordered_json to_json() const;
};

struct RecoveredSession {
  SessionState state;
  /// True when the journal stops inside a rebalance: open and planned orders
  /// must be resolved before anything else happens.
  bool needs_reconciliation = false;
  std::size_t records = 0;
};

/// Replays records into a fresh state. An empty journal yields a fresh
/// session holding `starting_cash`.
RecoveredSession recover_session(const std::vector<JournalRecord>& records, double starting_cash = 0.0);
RecoveredSession recover_session(const std::filesystem::path& journal, double starting_cash = 0.0);

/// Writes the recovered state of a session as canonical JSON.
std::string state_json(const SessionState& state);

}  // namespace weightflow::execution
