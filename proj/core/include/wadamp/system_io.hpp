#pragma once

#include <filesystem>
#include <string>

#include "wadamp/simulator.hpp"

namespace wadamp::io {

inline constexpr int kSchemaVersion = 1;

/// Strict parsers: unknown keys, wrong types and schema_version mismatches
/// throw Error{InvalidInput} with the source name and, for syntax errors, the
/// line number.
SystemData parse_system(const std::string& text, const std::string& source = "<system>");
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");

SystemData load_system(const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

std::string reduced_json(const ReducedNetwork& net, const Equilibrium& eq);
/// Rows i < j plus the diagonal; estimates may be empty matrices.
std::string gij_bij_csv(const Mat& G_true, const Mat& B_true, const Mat& G_est, const Mat& B_est);
std::string certificates_json(const std::vector<DmiCertificate>& certs);
std::string kc_json(const CommTopology& topo, const WideAreaDesign& design);
std::string trajectory_csv(const Trajectory& tr);
std::string resynthesis_csv(const Trajectory& tr);
std::string summary_json(const Scenario& sc, const Trajectory& tr, const Metrics& m,
                         const AuditReport* audit);

/// Python/matplotlib script plotting omega_3 and the first monitored line
/// from the given trajectory CSV files.
std::string plot_script(const std::vector<std::pair<std::string, std::string>>& labelled_csvs);

}  // namespace wadamp::io
