#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ems/metrics.hpp"

namespace ems {

/// `setup_policy_nambs_nscen.txt`
std::string result_file_name(const std::string& setup, const std::string& policy, int n_ambulances,
                             int n_scenarios);

struct ResultKey {
  std::string setup;
  std::string policy;
  int n_ambulances = 0;
  int n_scenarios = 0;
};

/// Parses a result or sidecar file name; nullopt when it does not follow
/// the naming scheme or names an unknown policy.
std::optional<ResultKey> parse_result_name(const std::string& file_name);

/// Writes `contents` to a sibling temporary file, then renames it over
/// `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// Per scenario: N, then N lines "amb_index response_time allocation_cost
/// finish_instant".
std::string format_result_file(const std::vector<std::vector<EmergencyRecord>>& scenarios);

struct ResultRow {
  int amb = 0;
  double response_time = 0.0;
  double allocation_cost = 0.0;
  double finish_time = 0.0;
};
std::vector<std::vector<ResultRow>> parse_result_file(const std::filesystem::path& path);

/// Full-precision record dump written next to each result file.
std::string format_records_csv(const std::vector<std::vector<EmergencyRecord>>& scenarios);
std::vector<std::vector<EmergencyRecord>> parse_records_csv(const std::filesystem::path& path);

inline constexpr const char* kRecordsSuffix = ".records.csv";

struct ReportRow {
  ResultKey key;
  Summary summary;
};

/// Summaries of every sidecar in `dir`, ordered by setup, policy registry
/// order, then fleet size.
std::vector<ReportRow> collect_results(const std::filesystem::path& dir, const CostModel& model);

/// Writes summary.csv, fig_mean_cost.csv, fig_mean_rt.csv and
/// fig_extra_by_type.csv into `dir`; returns the files written.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows);

}  // namespace ems
