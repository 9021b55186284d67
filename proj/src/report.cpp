#include "bitrap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bitrap/errors.hpp"

namespace bitrap {

using nlohmann::json;

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", *v);
  return buf;
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw DataError("ragged matrix in dump");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

json vector_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string format_report_table(const std::vector<MetricReport>& reports) {
  std::vector<double> horizons;
  for (const auto& r : reports) {
    for (const auto& [h, v] : r.ade_at) {
      if (std::find(horizons.begin(), horizons.end(), h) == horizons.end()) horizons.push_back(h);
    }
  }
  std::sort(horizons.begin(), horizons.end());

  std::vector<std::string> header{"method", "units", "N"};
  for (double h : horizons) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ADE@%.2gs", h);
    header.emplace_back(buf);
  }
  for (const char* name : {"ADE", "FDE", "C_ADE", "C_FDE", "ANLL", "FNLL"}) header.emplace_back(name);

  std::vector<std::vector<std::string>> rows{header};
  for (const auto& r : reports) {
    std::vector<std::string> row{r.variant, r.units, std::to_string(r.best_of)};
    for (double h : horizons) {
      auto it = r.ade_at.find(h);
      row.push_back(cell(it == r.ade_at.end() ? std::nullopt : std::optional<double>(it->second)));
    }
    for (const auto& v : {r.ade, r.fde, r.c_ade, r.c_fde, r.anll, r.fnll}) row.push_back(cell(v));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t i = 0; i < rows[ri].size(); ++i) {
      out << (i ? "  " : "") << rows[ri][i] << std::string(width[i] - rows[ri][i].size(), ' ');
    }
    out << '\n';
    if (ri == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  for (const auto& r : reports) {
    if (r.anll) {
      out << "# " << r.variant << ": KDE log-density floored at " << r.log_density_floor << " nats per step; "
          << r.floored_kde_bandwidths
          << " bandwidths hit the floor\n";
    }
  }
  return out.str();
}

std::vector<json> report_records(const MetricReport& r) {
  std::vector<json> out;
  const double full = r.dt * static_cast<double>(r.best_per_step.size());
  auto add = [&](const std::string& metric, double horizon, double value, const std::string& units) {
    out.push_back({{"method", r.variant}, {"metric", metric}, {"horizon_s", horizon}, {"value", value},
                   {"units", units}, {"best_of", r.best_of}, {"windows", r.windows}});
  };
  for (const auto& [h, v] : r.ade_at) add("ADE", h, v, r.units);
  if (r.ade) add("ADE", full, *r.ade, r.units);
  if (r.fde) add("FDE", full, *r.fde, r.units);
  if (r.c_ade) add("C_ADE", full, *r.c_ade, "px^2");
  if (r.c_fde) add("C_FDE", full, *r.c_fde, "px^2");
  if (r.anll) add("ANLL", full, *r.anll, "nats");
  if (r.fnll) add("FNLL", full, *r.fnll, "nats");
  for (Eigen::Index s = 0; s < r.nll_per_step.size(); ++s) {
    add("NLL_step", r.dt * static_cast<double>(s + 1), r.nll_per_step(s), "nats");
  }
  for (Eigen::Index s = 0; s < r.best_per_step.size(); ++s) {
    add("best_step_error", r.dt * static_cast<double>(s + 1), r.best_per_step(s), r.units);
  }
  return out;
}

void write_report(const std::vector<MetricReport>& reports, const std::string& table_path,
                  const std::string& ndjson_path) {
  std::ofstream table(table_path);
  std::ofstream records(ndjson_path);
  if (!table || !records) throw DataError("cannot write report files");
  table << format_report_table(reports);
  for (const auto& r : reports) {
    for (const auto& rec : report_records(r)) records << rec.dump() << '\n';
  }
}

DumpRecord make_dump_record(const WindowPrediction& p, const std::string& variant, double dt) {
  DumpRecord r;
  r.index = p.index;
  r.scene_id = p.window.scene_id;
  r.agent_id = p.window.agent_id;
  r.variant = variant;
  r.t = p.window.t;
  r.dt = dt;
  r.past = p.window.past;
  r.future = p.window.future;
  r.samples = p.prediction.samples;
  r.components = p.prediction.components;
  r.goal = p.prediction.goal;
  r.nll_per_step = p.nll_per_step;
  return r;
}

json to_json(const DumpRecord& r) {
  json samples = json::array();
  for (const Mat& s : r.samples) samples.push_back(matrix_json(s));
  json j = {{"window", r.index}, {"scene_id", r.scene_id}, {"agent_id", r.agent_id}, {"t", r.t},
            {"variant", r.variant}, {"dt", r.dt}, {"past", matrix_json(r.past)}, {"gt", matrix_json(r.future)},
            {"samples", samples}};
  if (!r.components.empty()) j["components"] = r.components;
  if (r.goal) {
    json cov = json::array();
    for (const auto& c : r.goal->cov) cov.push_back({{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}});
    j["goal_gmm"] = {{"pi", vector_json(r.goal->pi)}, {"mu", matrix_json(r.goal->mu)}, {"cov", cov}};
  }
  if (r.nll_per_step.size() > 0) j["nll_per_step"] = vector_json(r.nll_per_step);
  return j;
}

DumpRecord dump_record_from_json(const json& j) {
  try {
    DumpRecord r;
    r.index = j.at("window").get<std::size_t>();
    r.scene_id = j.at("scene_id").get<std::string>();
    r.agent_id = j.at("agent_id").get<std::string>();
    r.t = j.at("t").get<long>();
    r.variant = j.at("variant").get<std::string>();
    r.dt = j.at("dt").get<double>();
    r.past = matrix_from(j.at("past"));
    r.future = matrix_from(j.at("gt"));
    for (const auto& s : j.at("samples")) r.samples.push_back(matrix_from(s));
    if (j.contains("components")) r.components = j.at("components").get<std::vector<int>>();
    if (j.contains("goal_gmm")) {
      GoalGMM g;
      g.pi = vector_from(j.at("goal_gmm").at("pi"));
      g.mu = matrix_from(j.at("goal_gmm").at("mu"));
      for (const auto& c : j.at("goal_gmm").at("cov")) {
        const Mat m = matrix_from(c);
        if (m.rows() != 2 || m.cols() != 2) throw DataError("goal covariance must be 2x2");
        g.cov.emplace_back(m);
      }
      if (g.mu.rows() != g.pi.size() || g.cov.size() != static_cast<std::size_t>(g.pi.size())) {
        throw DataError("goal mixture fields disagree on the component count");
      }
      r.goal = std::move(g);
    }
    if (j.contains("nll_per_step")) r.nll_per_step = vector_from(j.at("nll_per_step"));
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad dump record: ") + e.what());
  }
}

void write_dump(const std::vector<DumpRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<DumpRecord> read_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<DumpRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(dump_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), n);
    }
  }
  return out;
}

}  // namespace bitrap
