#pragma once

// Serialized outputs: scores.json, curves.csv, correlations.json,
// downstream.json, ladder records and SVG loss-capacity plots.

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcies/harness.hpp"

namespace dcies {

inline constexpr int kScoresSchemaVersion = 1;

nlohmann::json score_report_to_json(const ScoreReport& s);
nlohmann::json run_to_json(const RunResult& r);
/// Restores the scalar scores of a run (curves and importance stay empty).
RunResult run_from_json(const nlohmann::json& j);

/// `generated_at` is omitted when empty; it is the only field that depends on
/// the wall clock.
nlohmann::json scores_to_json(const std::vector<RunResult>& runs, const std::vector<Aggregate>& aggregates,
                              const std::vector<RunFailure>& failures, const std::string& generated_at);

std::string curves_csv(const std::vector<RunResult>& runs);
nlohmann::json correlations_to_json(const CorrelationReport& c);
nlohmann::json downstream_to_json(const std::vector<DownstreamRecord>& d);
std::vector<DownstreamRecord> downstream_from_json(const nlohmann::json& j);

nlohmann::json ladder_result_to_json(const LadderResult& lr);
/// Losses, capacities and ladder entries; no probes.
LadderResult ladder_result_from_json(const nlohmann::json& j);

/// Loss against capacity, averaged over factors and seeds, one polyline per
/// seed plus the mean.
std::string loss_capacity_svg(const std::vector<const RunResult*>& runs, std::size_t scale_index,
                              const std::string& title);

struct ReportOptions {
  bool timestamp = true;
  bool plots = true;
};

/// Writes scores.json, curves.csv, downstream.json / correlations.json when
/// present, and plots/<representation>_<probe>_<scale>.svg. Throws IoError.
void emit_report(const ExperimentResult& result, const std::filesystem::path& output_dir,
                 const ReportOptions& opts = {});

std::string utc_timestamp();

}  // namespace dcies
