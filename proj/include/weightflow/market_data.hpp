#pragma once

#include "weightflow/core.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weightflow {

/// Strictly increasing, nonempty list of trading dates.
class TradingCalendar {
 public:
  TradingCalendar() = default;
  explicit TradingCalendar(std::vector<Date> dates);

  const std::vector<Date>& dates() const { return dates_; }
  Index size() const { return static_cast<Index>(dates_.size()); }
  bool empty() const { return dates_.empty(); }
  Date operator[](Index i) const { return dates_[static_cast<std::size_t>(i)]; }
  Date front() const { return dates_.front(); }
  Date back() const { return dates_.back(); }

  std::optional<Index> index_of(Date d) const;
  /// Index of the last date <= d, or -1 when d precedes the calendar.
  Index last_at_or_before(Date d) const;
  /// Index of the first date >= d, or size() when d follows the calendar.
  Index first_at_or_after(Date d) const;

  friend bool operator==(const TradingCalendar&, const TradingCalendar&) = default;

 private:
  std::vector<Date> dates_;
};

/// Provenance of one ingested file.
struct SourceFile {
  std::string path;
  std::string digest;  ///< SHA-256 of the raw bytes
};

/// Calendar-aligned price, return, score and auxiliary matrices over a fixed
/// asset order. Matrices are [date x asset]; missing cells hold NaN.
struct MarketPanel {
  TradingCalendar calendar;
  std::vector<std::string> assets;
  MatrixXd close;
  MatrixXd open;  ///< optional; 0x0 when no open prices were supplied
  MatrixXd returns;
  std::optional<MatrixXd> scores;
  std::map<std::string, VectorXd> aux;
  std::vector<SourceFile> sources;

  Index num_dates() const { return calendar.size(); }
  Index num_assets() const { return static_cast<Index>(assets.size()); }
  bool has_open() const { return open.size() > 0; }
  std::optional<Index> asset_index(std::string_view symbol) const;

  /// Throws DataError when shapes disagree or a present price is not positive.
  void validate() const;
};

/// r[t][i] = close[t][i] / close[t-1][i] - 1; first row and any cell touching a
/// missing price are missing.
MatrixXd compute_returns(const Eigen::Ref<const MatrixXd>& close);

/// Inverse of compute_returns for complete return matrices: rebuilds prices from
/// a base row, ignoring the first row of returns.
MatrixXd compute_prices_from(const Eigen::Ref<const MatrixXd>& returns,
                             const Eigen::Ref<const VectorXd>& base);

struct OhlcvColumns {
  std::string date = "date";
  std::string symbol = "symbol";
  std::string open = "open";
  std::string close = "close";
};

struct IngestOptions {
  OhlcvColumns columns;
  /// When set, the calendar is this symbol's dates instead of the union.
  std::optional<std::string> master_symbol;
};

MarketPanel ingest_ohlcv(const std::filesystem::path& path, const IngestOptions& options = {});
MarketPanel ingest_ohlcv(std::span<const std::filesystem::path> paths,
                         const IngestOptions& options = {});

/// Merges a `date,symbol,score` file into the panel. Scores dated between
/// trading days take effect on the next trading date; unknown symbols are ignored.
void attach_scores(MarketPanel& panel, const std::filesystem::path& path);

/// Merges a `date,name,value` file into panel.aux; dates off the calendar are dropped.
void attach_aux(MarketPanel& panel, const std::filesystem::path& path);

/// Reads a `date[,symbol]` event file; returns global dates plus per-symbol dates.
struct EventDates {
  std::vector<Date> global;
  std::map<std::string, std::vector<Date>> per_symbol;
  bool contains(Date d) const;
};
EventDates load_event_dates(const std::filesystem::path& path);

enum class AlignPolicy {
  kStrict,      ///< every calendar date must exist in the panel
  kMarkMissing  ///< extra dates become all-missing rows
};

MarketPanel align_to_calendar(const MarketPanel& panel, const TradingCalendar& calendar,
                              AlignPolicy policy = AlignPolicy::kStrict);

// Snapshot store: content-addressed directory of normalized CSVs plus manifest.json.

struct DataSnapshot {
  std::string source_id;
  std::string retrieved_at;
  std::string digest;
  std::filesystem::path location;
};

/// Canonical normalized files of a panel, keyed by file name.
std::map<std::string, std::string> normalized_files(const MarketPanel& panel);
std::string panel_digest(const MarketPanel& panel);

DataSnapshot persist_snapshot(const MarketPanel& panel, const std::filesystem::path& store,
                              const std::string& source_id, const std::string& retrieved_at);
/// Reloads a snapshot directory and verifies its digest against the manifest.
MarketPanel load_snapshot(const std::filesystem::path& snapshot_dir);

std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace weightflow
