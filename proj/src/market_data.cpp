#include "weightflow/market_data.hpp"

#include "csv.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace weightflow {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- calendar

TradingCalendar::TradingCalendar(std::vector<Date> dates) : dates_(std::move(dates)) {
  if (dates_.empty()) throw DataError("trading calendar must be nonempty");
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (!(dates_[i - 1] < dates_[i])) {
      throw DataError("trading calendar must be strictly increasing (at " + dates_[i].iso() + ")");
    }
  }
}

std::optional<Index> TradingCalendar::index_of(Date d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return static_cast<Index>(it - dates_.begin());
}

Index TradingCalendar::last_at_or_before(Date d) const {
  auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
  return static_cast<Index>(it - dates_.begin()) - 1;
}

Index TradingCalendar::first_at_or_after(Date d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  return static_cast<Index>(it - dates_.begin());
}

// ---------------------------------------------------------------- panel

std::optional<Index> MarketPanel::asset_index(std::string_view symbol) const {
  auto it = std::lower_bound(assets.begin(), assets.end(), symbol);
  if (it != assets.end() && *it == symbol) return static_cast<Index>(it - assets.begin());
  // Asset order is sorted for ingested panels, but hand-built panels may not be.
  for (std::size_t i = 0; i < assets.size(); ++i) {
    if (assets[i] == symbol) return static_cast<Index>(i);
  }
  return std::nullopt;
}

void MarketPanel::validate() const {
  const Index t = num_dates(), n = num_assets();
  if (t == 0) throw DataError("panel has an empty calendar");
  if (close.rows() != t || close.cols() != n) throw DataError("close matrix shape mismatch");
  if (returns.rows() != t || returns.cols() != n) throw DataError("returns matrix shape mismatch");
  if (has_open() && (open.rows() != t || open.cols() != n)) throw DataError("open matrix shape mismatch");
  if (scores && (scores->rows() != t || scores->cols() != n)) throw DataError("score matrix shape mismatch");
  for (const auto& [name, series] : aux) {
    if (series.size() != t) throw DataError("aux series '" + name + "' length mismatch");
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < t; ++i) {
      const double c = close(i, j);
      if (!is_missing(c) && !(c > 0.0 && std::isfinite(c))) {
        throw DataError("non-positive price for " + assets[static_cast<std::size_t>(j)] + " on " +
                        calendar[i].iso());
      }
    }
  }
}

MatrixXd compute_returns(const Eigen::Ref<const MatrixXd>& close) {
  MatrixXd r = MatrixXd::Constant(close.rows(), close.cols(), kMissing);
  for (Index j = 0; j < close.cols(); ++j) {
    for (Index i = 1; i < close.rows(); ++i) {
      const double prev = close(i - 1, j), cur = close(i, j);
      if (!is_missing(prev) && !is_missing(cur)) r(i, j) = cur / prev - 1.0;
    }
  }
  return r;
}

MatrixXd compute_prices_from(const Eigen::Ref<const MatrixXd>& returns,
                             const Eigen::Ref<const VectorXd>& base) {
  MatrixXd p(returns.rows(), returns.cols());
  if (returns.rows() == 0) return p;
  p.row(0) = base.transpose();
  for (Index i = 1; i < returns.rows(); ++i) {
    p.row(i) = p.row(i - 1).array() * (1.0 + returns.row(i).array());
  }
  return p;
}

// ---------------------------------------------------------------- ingestion

namespace {

struct Bar {
  double open = kMissing;
  double close = kMissing;
};

using BarMap = std::map<std::string, std::map<Date, Bar>>;

double positive_price(const std::string& field, const csv::Table& table, std::size_t line,
                      std::string_view what) {
  auto v = csv::parse_double(field);
  if (!v) throw DataError("malformed " + std::string(what) + " '" + field + "'", table.source, line);
  if (!(*v > 0.0) || !std::isfinite(*v)) {
    throw DataError("non-positive " + std::string(what) + " " + field, table.source, line);
  }
  return *v;
}

Date parse_date_at(const std::string& field, const csv::Table& table, std::size_t line) {
  try {
    return Date::parse(field);
  } catch (const DataError& e) {
    throw DataError(e.what(), table.source, line);
  }
}

void collect_bars(const csv::Table& table, const OhlcvColumns& cols, BarMap& bars,
                  std::map<std::pair<Date, std::string>, std::string>& seen) {
  const auto date_col = *table.column(cols.date);
  const auto sym_col = *table.column(cols.symbol);
  const auto close_col = *table.column(cols.close);
  const auto open_col = table.column(cols.open, false);
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) {
      throw DataError("malformed row: expected " + std::to_string(table.header.size()) +
                          " fields, got " + std::to_string(fields.size()),
                      table.source, line);
    }
    const Date date = parse_date_at(fields[date_col], table, line);
    const std::string& symbol = fields[sym_col];
    if (symbol.empty()) throw DataError("malformed row: empty symbol", table.source, line);
    if (fields[close_col].empty()) throw DataError("malformed row: missing close", table.source, line);
    Bar bar;
    bar.close = positive_price(fields[close_col], table, line, "close");
    if (open_col && !fields[*open_col].empty()) {
      bar.open = positive_price(fields[*open_col], table, line, "open");
    }
    const auto key = std::make_pair(date, symbol);
    const std::string where = table.source + ":" + std::to_string(line);
    if (auto [it, inserted] = seen.emplace(key, where); !inserted) {
      throw DataError("duplicate row for (" + date.iso() + ", " + symbol + "), first seen at " +
                          it->second,
                      table.source, line);
    }
    bars[symbol][date] = bar;
  }
}

MarketPanel panel_from_bars(const BarMap& bars, const IngestOptions& options) {
  if (bars.empty()) throw DataError("no price rows ingested");
  std::vector<Date> dates;
  if (options.master_symbol) {
    auto it = bars.find(*options.master_symbol);
    if (it == bars.end()) throw DataError("master symbol '" + *options.master_symbol + "' not found");
    for (const auto& [d, bar] : it->second) dates.push_back(d);
  } else {
    std::set<Date> all;
    for (const auto& [sym, series] : bars) {
      for (const auto& [d, bar] : series) all.insert(d);
    }
    dates.assign(all.begin(), all.end());
  }

  MarketPanel panel;
  panel.calendar = TradingCalendar(std::move(dates));
  for (const auto& [sym, series] : bars) panel.assets.push_back(sym);
  const Index t = panel.calendar.size(), n = panel.num_assets();
  panel.close = MatrixXd::Constant(t, n, kMissing);
  MatrixXd open = MatrixXd::Constant(t, n, kMissing);
  bool any_open = false;
  Index j = 0;
  for (const auto& [sym, series] : bars) {
    for (const auto& [d, bar] : series) {
      if (auto i = panel.calendar.index_of(d)) {
        panel.close(*i, j) = bar.close;
        open(*i, j) = bar.open;
        any_open = any_open || !is_missing(bar.open);
      }
    }
    ++j;
  }
  if (any_open) panel.open = std::move(open);
  panel.returns = compute_returns(panel.close);
  return panel;
}

MarketPanel ingest_tables(std::span<const csv::Table> tables, const IngestOptions& options) {
  BarMap bars;
  std::map<std::pair<Date, std::string>, std::string> seen;
  for (const auto& table : tables) collect_bars(table, options.columns, bars, seen);
  return panel_from_bars(bars, options);
}

void attach_scores_table(MarketPanel& panel, const csv::Table& table) {
  const auto date_col = *table.column("date");
  const auto sym_col = *table.column("symbol");
  const auto score_col = *table.column("score");
  struct Row {
    Date date;
    Index asset;
    double score;
  };
  std::vector<Row> rows;
  std::set<std::pair<Date, std::string>> seen;
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) throw DataError("malformed row", table.source, line);
    const Date date = parse_date_at(fields[date_col], table, line);
    auto score = csv::parse_double(fields[score_col]);
    if (!score || !std::isfinite(*score)) {
      throw DataError("malformed score '" + fields[score_col] + "'", table.source, line);
    }
    if (!seen.emplace(date, fields[sym_col]).second) {
      throw DataError("duplicate score for (" + date.iso() + ", " + fields[sym_col] + ")",
                      table.source, line);
    }
    if (auto j = panel.asset_index(fields[sym_col])) rows.push_back({date, *j, *score});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  if (!panel.scores) {
    panel.scores = MatrixXd::Constant(panel.num_dates(), panel.num_assets(), kMissing);
  }
  for (const auto& row : rows) {
    const Index i = panel.calendar.first_at_or_after(row.date);
    if (i < panel.num_dates()) (*panel.scores)(i, row.asset) = row.score;
  }
}

void attach_aux_table(MarketPanel& panel, const csv::Table& table) {
  const auto date_col = *table.column("date");
  const auto name_col = *table.column("name");
  const auto value_col = *table.column("value");
  std::set<std::pair<Date, std::string>> seen;
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) throw DataError("malformed row", table.source, line);
    const Date date = parse_date_at(fields[date_col], table, line);
    const std::string& name = fields[name_col];
    if (name.empty()) throw DataError("malformed row: empty series name", table.source, line);
    auto value = csv::parse_double(fields[value_col]);
    if (!value || !std::isfinite(*value)) {
      throw DataError("malformed value '" + fields[value_col] + "'", table.source, line);
    }
    if (!seen.emplace(date, name).second) {
      throw DataError("duplicate aux value for (" + date.iso() + ", " + name + ")", table.source, line);
    }
    auto [it, inserted] = panel.aux.try_emplace(name, VectorXd::Constant(panel.num_dates(), kMissing));
    if (auto i = panel.calendar.index_of(date)) it->second(*i) = *value;
  }
}

}  // namespace

MarketPanel ingest_ohlcv(const fs::path& path, const IngestOptions& options) {
  return ingest_ohlcv(std::span<const fs::path>(&path, 1), options);
}

MarketPanel ingest_ohlcv(std::span<const fs::path> paths, const IngestOptions& options) {
  std::vector<csv::Table> tables;
  std::vector<SourceFile> sources;
  for (const auto& p : paths) {
    const std::string bytes = read_file(p);
    tables.push_back(csv::parse(bytes, p.string()));
    sources.push_back({p.string(), sha256_hex(bytes)});
  }
  MarketPanel panel = ingest_tables(tables, options);
  panel.sources = std::move(sources);
  return panel;
}

void attach_scores(MarketPanel& panel, const fs::path& path) {
  const std::string bytes = read_file(path);
  attach_scores_table(panel, csv::parse(bytes, path.string()));
  panel.sources.push_back({path.string(), sha256_hex(bytes)});
}

void attach_aux(MarketPanel& panel, const fs::path& path) {
  const std::string bytes = read_file(path);
  attach_aux_table(panel, csv::parse(bytes, path.string()));
  panel.sources.push_back({path.string(), sha256_hex(bytes)});
}

bool EventDates::contains(Date d) const {
  if (std::binary_search(global.begin(), global.end(), d)) return true;
  for (const auto& [sym, dates] : per_symbol) {
    if (std::binary_search(dates.begin(), dates.end(), d)) return true;
  }
  return false;
}

EventDates load_event_dates(const fs::path& path) {
  const auto table = csv::read(path);
  const auto date_col = *table.column("date");
  const auto sym_col = table.column("symbol", false);
  EventDates events;
  for (const auto& [line, fields] : table.rows) {
    if (fields.size() != table.header.size()) throw DataError("malformed row", table.source, line);
    const Date d = parse_date_at(fields[date_col], table, line);
    if (sym_col && !fields[*sym_col].empty()) {
      events.per_symbol[fields[*sym_col]].push_back(d);
    } else {
      events.global.push_back(d);
    }
  }
  auto tidy = [](std::vector<Date>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  tidy(events.global);
  for (auto& [sym, v] : events.per_symbol) tidy(v);
  return events;
}

// ---------------------------------------------------------------- alignment

MarketPanel align_to_calendar(const MarketPanel& panel, const TradingCalendar& calendar,
                              AlignPolicy policy) {
  if (calendar.empty()) throw DataError("cannot align to an empty calendar");
  const Index t = calendar.size(), n = panel.num_assets();
  MarketPanel out;
  out.calendar = calendar;
  out.assets = panel.assets;
  out.sources = panel.sources;
  out.close = MatrixXd::Constant(t, n, kMissing);
  if (panel.has_open()) out.open = MatrixXd::Constant(t, n, kMissing);
  if (panel.scores) out.scores = MatrixXd::Constant(t, n, kMissing);
  for (const auto& [name, series] : panel.aux) out.aux[name] = VectorXd::Constant(t, kMissing);

  for (Index i = 0; i < t; ++i) {
    const auto src = panel.calendar.index_of(calendar[i]);
    if (!src) {
      if (policy == AlignPolicy::kStrict) {
        throw DataError("calendar date " + calendar[i].iso() + " is absent from all sources");
      }
      continue;
    }
    out.close.row(i) = panel.close.row(*src);
    if (panel.has_open()) out.open.row(i) = panel.open.row(*src);
    if (panel.scores) out.scores->row(i) = panel.scores->row(*src);
    for (const auto& [name, series] : panel.aux) out.aux[name](i) = series(*src);
  }
  out.returns = compute_returns(out.close);
  return out;
}

// ---------------------------------------------------------------- snapshots

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::map<std::string, std::string> normalized_files(const MarketPanel& panel) {
  std::map<std::string, std::string> files;
  std::string cal = "date\n";
  for (Date d : panel.calendar.dates()) cal += d.iso() + "\n";
  files["calendar.csv"] = std::move(cal);

  std::string prices = "date,symbol,open,close\n";
  for (Index i = 0; i < panel.num_dates(); ++i) {
    const std::string date = panel.calendar[i].iso();
    for (Index j = 0; j < panel.num_assets(); ++j) {
      if (is_missing(panel.close(i, j))) continue;
      prices += date + "," + panel.assets[static_cast<std::size_t>(j)] + ",";
      if (panel.has_open() && !is_missing(panel.open(i, j))) prices += format_double(panel.open(i, j));
      prices += "," + format_double(panel.close(i, j)) + "\n";
    }
  }
  files["prices.csv"] = std::move(prices);

  if (panel.scores) {
    std::string scores = "date,symbol,score\n";
    for (Index i = 0; i < panel.num_dates(); ++i) {
      for (Index j = 0; j < panel.num_assets(); ++j) {
        const double s = (*panel.scores)(i, j);
        if (is_missing(s)) continue;
        scores += panel.calendar[i].iso() + "," + panel.assets[static_cast<std::size_t>(j)] + "," +
                  format_double(s) + "\n";
      }
    }
    files["scores.csv"] = std::move(scores);
  }
  if (!panel.aux.empty()) {
    std::string aux = "date,name,value\n";
    for (const auto& [name, series] : panel.aux) {
      for (Index i = 0; i < series.size(); ++i) {
        if (is_missing(series(i))) continue;
        aux += panel.calendar[i].iso() + "," + name + "," + format_double(series(i)) + "\n";
      }
    }
    files["aux.csv"] = std::move(aux);
  }
  return files;
}

namespace {

std::string digest_of(const std::map<std::string, std::string>& files) {
  std::string blob;
  for (const auto& [name, bytes] : files) {
    blob += name + "\n" + std::to_string(bytes.size()) + "\n" + bytes;
  }
  return sha256_hex(blob);
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string panel_digest(const MarketPanel& panel) { return digest_of(normalized_files(panel)); }

DataSnapshot persist_snapshot(const MarketPanel& panel, const fs::path& store,
                              const std::string& source_id, const std::string& retrieved_at) {
  const auto files = normalized_files(panel);
  const std::string digest = digest_of(files);
  const fs::path dir = store / digest;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["source"] = source_id;
  manifest["retrieved_at"] = retrieved_at;
  manifest["digest"] = digest;
  nlohmann::ordered_json listing = nlohmann::ordered_json::object();
  for (const auto& [name, bytes] : files) {
    write_file(dir / name, bytes);
    listing[name] = sha256_hex(bytes);
  }
  manifest["files"] = std::move(listing);
  nlohmann::ordered_json raw = nlohmann::ordered_json::array();
  for (const auto& s : panel.sources) raw.push_back({{"path", s.path}, {"digest", s.digest}});
  manifest["raw_sources"] = std::move(raw);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return {source_id, retrieved_at, digest, dir};
}

MarketPanel load_snapshot(const fs::path& snapshot_dir) {
  const auto manifest = nlohmann::json::parse(read_file(snapshot_dir / "manifest.json"));
  const std::string expected = manifest.at("digest").get<std::string>();

  std::map<std::string, std::string> files;
  for (const auto& [name, sha] : manifest.at("files").items()) {
    files[name] = read_file(snapshot_dir / name);
  }
  if (digest_of(files) != expected) {
    throw DataError("snapshot digest mismatch", snapshot_dir.string());
  }

  std::vector<Date> dates;
  for (const auto& [line, fields] : csv::parse(files.at("calendar.csv"), "calendar.csv").rows) {
    dates.push_back(Date::parse(fields.at(0)));
  }
  const csv::Table prices = csv::parse(files.at("prices.csv"), "prices.csv");
  MarketPanel panel = ingest_tables(std::span<const csv::Table>(&prices, 1), {});
  panel = align_to_calendar(panel, TradingCalendar(std::move(dates)), AlignPolicy::kMarkMissing);
  if (auto it = files.find("scores.csv"); it != files.end()) {
    attach_scores_table(panel, csv::parse(it->second, "scores.csv"));
  }
  if (auto it = files.find("aux.csv"); it != files.end()) {
    attach_aux_table(panel, csv::parse(it->second, "aux.csv"));
  }
  for (const auto& s : manifest.value("raw_sources", nlohmann::json::array())) {
    panel.sources.push_back({s.at("path").get<std::string>(), s.at("digest").get<std::string>()});
  }
  return panel;
}

}  // namespace weightflow
