#include "ems/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ems/errors.hpp"
#include "ems/policies.hpp"

namespace ems {

namespace fs = std::filesystem;

std::string result_file_name(const std::string& setup, const std::string& policy, int n_ambulances,
                             int n_scenarios) {
  return fmt::format("{}_{}_{}_{}.txt", setup, policy, n_ambulances, n_scenarios);
}

std::optional<ResultKey> parse_result_name(const std::string& file_name) {
  static const std::regex pattern(R"(^([A-Za-z0-9]+)_([a-z0-9_]+)_(\d+)_(\d+)\.txt(\.records\.csv)?$)");
  std::smatch m;
  if (!std::regex_match(file_name, m, pattern)) return std::nullopt;
  const auto& names = policy_names();
  if (std::find(names.begin(), names.end(), m[2].str()) == names.end()) return std::nullopt;
  return ResultKey{m[1].str(), m[2].str(), std::stoi(m[3].str()), std::stoi(m[4].str())};
}

void write_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(fmt::format("cannot write {}", tmp.string()));
    out << contents;
    out.flush();
    if (!out) throw ConfigError(fmt::format("write to {} failed", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string format_result_file(const std::vector<std::vector<EmergencyRecord>>& scenarios) {
  std::string out;
  for (const auto& sc : scenarios) {
    out += fmt::format("{}\n", sc.size());
    for (const auto& r : sc) {
      out += fmt::format("{} {:.6f} {:.6f} {:.6f}\n", r.amb_id, r.response_time, r.allocation_cost, r.finish_time);
    }
  }
  return out;
}

std::vector<std::vector<ResultRow>> parse_result_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  std::vector<std::vector<ResultRow>> out;
  long n = 0;
  while (in >> n) {
    if (n < 0) throw ConfigError(fmt::format("{}: negative record count", path.string()));
    auto& sc = out.emplace_back();
    for (long k = 0; k < n; ++k) {
      ResultRow r;
      if (!(in >> r.amb >> r.response_time >> r.allocation_cost >> r.finish_time)) {
        throw ConfigError(fmt::format("{}: truncated scenario {}", path.string(), out.size()));
      }
      sc.push_back(r);
    }
  }
  if (!in.eof()) throw ConfigError(fmt::format("{}: malformed content", path.string()));
  return out;
}

std::string format_records_csv(const std::vector<std::vector<EmergencyRecord>>& scenarios) {
  std::string out =
      "scenario,call_id,etype,call_time,amb_id,amb_type,response_time,allocation_cost,finish_time,dispatch_time\n";
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (const auto& r : scenarios[s]) {
      out += fmt::format("{},{},{},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", s, r.call_id, r.etype,
                         r.call_time, r.amb_id, r.amb_type, r.response_time, r.allocation_cost, r.finish_time,
                         r.dispatch_time);
    }
  }
  return out;
}

std::vector<std::vector<EmergencyRecord>> parse_records_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<EmergencyRecord>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::size_t s = 0;
    EmergencyRecord r;
    if (!(ss >> s >> r.call_id >> r.etype >> r.call_time >> r.amb_id >> r.amb_type >> r.response_time >>
          r.allocation_cost >> r.finish_time >> r.dispatch_time)) {
      throw ConfigError(fmt::format("{}:{}: malformed record", path.string(), line_no));
    }
    if (out.size() <= s) out.resize(s + 1);
    out[s].push_back(r);
  }
  return out;
}

std::vector<ReportRow> collect_results(const fs::path& dir, const CostModel& model) {
  if (!fs::is_directory(dir)) throw ConfigError(fmt::format("{} is not a directory", dir.string()));
  std::vector<ReportRow> rows;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.ends_with(kRecordsSuffix) && parse_result_name(name)) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto scenarios = parse_records_csv(f);
    ReportRow row{*parse_result_name(f.filename().string()), {}};
    // Trailing empty scenarios are not visible in the sidecar; pad to the
    // count in the file name.
    if (static_cast<int>(scenarios.size()) < row.key.n_scenarios) scenarios.resize(row.key.n_scenarios);
    row.summary = summarize(scenarios, model);
    rows.push_back(std::move(row));
  }
  const auto& names = policy_names();
  auto rank = [&](const std::string& p) { return std::find(names.begin(), names.end(), p) - names.begin(); };
  std::sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) {
    return std::tuple(a.key.setup, rank(a.key.policy), a.key.n_ambulances, a.key.n_scenarios) <
           std::tuple(b.key.setup, rank(b.key.policy), b.key.n_ambulances, b.key.n_scenarios);
  });
  return rows;
}

namespace {

/// Wide table: one row per (setup, fleet size), one column per policy.
std::string wide_table(const std::vector<ReportRow>& rows, double Summary::*field) {
  std::vector<std::string> policies;
  std::map<std::pair<std::string, int>, std::map<std::string, double>> cells;
  for (const auto& r : rows) {
    if (std::find(policies.begin(), policies.end(), r.key.policy) == policies.end()) policies.push_back(r.key.policy);
    cells[{r.key.setup, r.key.n_ambulances}][r.key.policy] = r.summary.*field;
  }
  std::string out = "setup,n_ambulances";
  for (const auto& p : policies) out += "," + p;
  out += "\n";
  for (const auto& [key, values] : cells) {
    out += fmt::format("{},{}", key.first, key.second);
    for (const auto& p : policies) {
      const auto it = values.find(p);
      out += it == values.end() ? std::string(",") : fmt::format(",{:.6f}", it->second);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::vector<fs::path> write_report(const fs::path& dir, const std::vector<ReportRow>& rows) {
  std::string summary = "policy,n_ambulances,n_scenarios,mean_rt,q90_rt,mean_cost,mean_extra_high,mean_extra_low\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    summary += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.key.policy, r.key.n_ambulances,
                           r.key.n_scenarios, s.mean_rt, s.q90_rt, s.mean_cost, s.mean_extra_high, s.mean_extra_low);
  }
  std::string extra = "setup,policy,n_ambulances,etype,count,mean_extra\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.summary.mean_extra_by_type.size(); ++c) {
      extra += fmt::format("{},{},{},{},{},{:.6f}\n", r.key.setup, r.key.policy, r.key.n_ambulances, c,
                           r.summary.count_by_type[c], r.summary.mean_extra_by_type[c]);
    }
  }
  const std::vector<std::pair<std::string, std::string>> files{
      {"summary.csv", summary},
      {"fig_mean_cost.csv", wide_table(rows, &Summary::mean_cost)},
      {"fig_mean_rt.csv", wide_table(rows, &Summary::mean_rt)},
      {"fig_extra_by_type.csv", extra},
  };
  std::vector<fs::path> written;
  for (const auto& [name, body] : files) {
    write_atomic(dir / name, body);
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace ems
