#pragma once

#include "limes/bench.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace limes::report {

/// Fixed three-decimal rendering with '.' as separator, independent of locale.
std::string format_ms(double value);

/// Writes every report file for `sets` into `out_dir` and returns their paths:
///   samples_<workload>_<mode>.csv and ecdf_<workload>_<mode>.csv per set,
///   summary.csv, ecdf_<workload>.svg per workload, and breakdown.svg when
///   some workload has both a cold-start and an execution set.
/// Throws Error{StorageFailure} on IO errors.
std::vector<std::filesystem::path> emit_reports(std::span<const bench::LatencySamples> sets,
                                                const std::filesystem::path &out_dir);

std::string samples_csv(const bench::LatencySamples &set);
std::string ecdf_csv(const bench::EcdfTable &table);
std::string summary_csv(std::span<const bench::LatencySamples> sets);
std::string ecdf_svg(std::string_view workload,
                     std::span<const bench::LatencySamples *const> sets);
std::string breakdown_svg(std::span<const bench::LatencySamples> sets);

/// Parses `iteration,latency_ms` rows back into values. Throws
/// Error{InvalidArgument} on a malformed file.
std::vector<double> parse_samples_csv(const std::string &text);
bench::EcdfTable parse_ecdf_csv(const std::string &text);

struct SummaryRow {
  std::string workload;
  std::string mode;
  bench::SummaryStats stats;
  bool aborted = false;
};
std::vector<SummaryRow> parse_summary_csv(const std::string &text);

} // namespace limes::report
