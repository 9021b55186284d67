#pragma once

// Metric report files and the per-window prediction dump.
//
// Report: a text table (one row per method) and an NDJSON stream with one
// record {"method", "metric", "horizon_s", "value", "units"} per number.
// Dump: one JSON object per window with the observed past, ground truth,
// sampled trajectories and, for mixture models, the endpoint mixture.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bitrap/metrics.hpp"

namespace bitrap {

std::string format_report_table(const std::vector<MetricReport>& reports);
std::vector<nlohmann::json> report_records(const MetricReport& report);
void write_report(const std::vector<MetricReport>& reports, const std::string& table_path,
                  const std::string& ndjson_path);

struct DumpRecord {
  std::size_t index = 0;
  std::string scene_id, agent_id, variant;
  long t = 0;
  double dt = 0.0;
  Mat past, future;
  std::vector<Mat> samples;
  std::vector<int> components;
  std::optional<GoalGMM> goal;
  Vec nll_per_step;
};

DumpRecord make_dump_record(const WindowPrediction& p, const std::string& variant, double dt);
nlohmann::json to_json(const DumpRecord& r);
DumpRecord dump_record_from_json(const nlohmann::json& j);

void write_dump(const std::vector<DumpRecord>& records, const std::string& path);
std::vector<DumpRecord> read_dump(const std::string& path);

}  // namespace bitrap
