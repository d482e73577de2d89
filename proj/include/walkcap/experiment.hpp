#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace walkcap {

inline constexpr const char* kVersion = "0.4.0";

struct ExperimentConfig {
  std::string command = "capacity";
  int d = 5;
  std::size_t n = 1000;
  double zeta = 0;
  std::size_t T = 10;
  std::uint64_t seed = 1;
  std::size_t count = 10;
  std::size_t firstIndex = 0;  // seed block: indices firstIndex .. firstIndex + count - 1
  double tolerance = 1e-9;
  double C0 = 2;
  std::string output;
  std::size_t workers = 1;
  std::map<std::string, std::string> extra;  // command specific keys

  void set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> entries() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// "key=value" overrides applied in order
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

struct Row {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double value = 0;
  std::vector<std::pair<std::string, double>> fields;
};

struct Summary {
  std::size_t count = 0;
  std::size_t errors = 0;
  double mean = 0;
  double variance = 0;
  double stdError = 0;
  double q05 = 0, q50 = 0, q95 = 0;
  double ciLo = 0, ciHi = 0;
};

struct ResultRecord {
  ExperimentConfig config;
  std::string header;  // JSON line
  std::vector<Row> rows;
  Summary summary;
  bool complete = true;
  std::string note;
};

Summary summarize_rows(const std::vector<Row>& rows);

std::string format_double(double x);
std::string row_json(const Row& row);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL);

// evaluates one sample of the configured command
Row run_one(const ExperimentConfig& cfg, std::size_t index);
// rows are flushed to cfg.output (if set) in index order as they complete; CSV summary goes to output + ".csv"
ResultRecord run(const ExperimentConfig& cfg);

struct LoadedRun {
  std::string path;
  std::string command;
  int d = 0;
  std::size_t n = 0;
  std::vector<Row> rows;
  bool truncated = false;
  std::string problem;
};

LoadedRun load_run(const std::string& path);

struct BlockSummary {
  std::string path;
  Summary summary;
};

struct AggregateReport {
  std::string command;
  int d = 0;
  std::vector<BlockSummary> blocks;
  double pooledMean = 0;
  double pooledStdError = 0;  // stratified by seed block
  double ciLo = 0, ciHi = 0;
  std::size_t total = 0;
  std::vector<std::string> problems;  // truncated inputs

  std::string to_json() const;
  std::string to_csv() const;
};

AggregateReport summarize(const std::vector<std::string>& paths);

}  // namespace walkcap
