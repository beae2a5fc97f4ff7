#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segsim/dataset.hpp"
#include "segsim/geometry.hpp"
#include "segsim/metrics.hpp"
#include "segsim/segmentation.hpp"
#include "segsim/silicon.hpp"

namespace segsim {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::string_view kCrossModelRow = "cross-model";
inline constexpr std::string_view kHumanRow = "human";

// One table row. Every scalar is optional so rows can be assembled from
// externally supplied values as well as from computed blocks.
struct RunScalars {
  std::string configuration;
  std::string model;
  std::string row_type = "model";  // model | cross-model | human

  std::optional<double> mae;
  std::optional<double> accuracy;
  std::optional<double> weighted_precision;
  std::optional<double> weighted_recall;
  std::optional<double> weighted_f1;
  std::optional<double> kld;

  std::optional<double> sd;
  std::optional<double> cv;
  std::optional<double> aggregate_nemd;
  std::optional<double> procrustes_distance;

  std::optional<double> human_v;
  std::optional<double> sim_v;
  std::optional<double> benchmark_gap;

  std::size_t excluded_pairs = 0;

  bool operator==(const RunScalars&) const = default;
};

struct BetweenGroupBlock {
  std::vector<DistanceMatrix> item_matrices;
  std::vector<double> item_medians;
  double aggregate_nemd = 0.0;
  DistanceMatrix structure;  // item-averaged matrix fed to MDS
  Embedding embedding;
  std::optional<ProcrustesResult> procrustes;  // against the human map
};

struct RunDetail {
  std::string configuration;
  std::string model;
  std::size_t excluded_pairs = 0;
  DistributionalBlock distributional;
  VarianceBlock variance;
  BetweenGroupBlock between_group;
  AssociationBlock association;
};

struct HumanDetail {
  std::string configuration;
  VarianceBlock variance;
  BetweenGroupBlock between_group;
  AssociationBlock association;
};

struct FidelityReport {
  int schema_version = kReportSchemaVersion;
  std::vector<OutcomeItem> items{kOutcomeItems.begin(), kOutcomeItems.end()};
  std::vector<RunScalars> runs;
  std::vector<RunScalars> human_benchmark;
  std::vector<RunScalars> cross_model;
  std::vector<RunDetail> details;
  std::vector<HumanDetail> human_details;
};

// Unweighted arithmetic mean; EmptyList when `values` is empty.
double cross_model_average(std::span<const double> values);

// Fills `cross_model` (one row per configuration, first-appearance order)
// and checks that every run reporting a gap has a human benchmark row.
void finalize_report(FidelityReport& report);

struct CompileOptions {
  std::vector<OutcomeItem> items{kOutcomeItems.begin(), kOutcomeItems.end()};
  double kld_epsilon = kDefaultKlEpsilon;
  KlDirection kld_direction = KlDirection::HumanToSimulated;
  bool parallel = true;
};

BetweenGroupBlock between_group_block(const SiliconSample& sample, const SubgroupMap& subgroups,
                                      const std::vector<OutcomeItem>& items);

FidelityReport compile_report(const SurveyDataset& human, const std::vector<SiliconSample>& samples,
                              const std::vector<SegmentationConfiguration>& configs, const SubgroupMap& segments,
                              const CompileOptions& options = {});

Json report_to_json(const FidelityReport& report);
FidelityReport report_from_json(const Json& doc);

enum class TableFormat { Json, Csv, Markdown };

// Field names of the three tables, as used by every format.
const std::vector<std::string>& distributional_fields();
const std::vector<std::string>& structural_fields();
const std::vector<std::string>& predictive_fields();

// Writes distributional/structural/predictive tables into `out_dir` and
// returns the paths written. Markdown rounds to 2 decimals; JSON and CSV keep
// full precision.
std::vector<std::filesystem::path> emit_tables(const FidelityReport& report, TableFormat format,
                                               const std::filesystem::path& out_dir);

// Stable colour for a label within a label set.
std::string subgroup_color(const std::vector<std::string>& labels, const std::string& label);

std::string render_mds_map(const Embedding& empirical, const Embedding& simulated, const std::string& title = "");
void emit_mds_map(const Embedding& empirical, const Embedding& simulated, const std::filesystem::path& out,
                  const std::string& title = "");

// Simulated embedding replaced by its Procrustes-aligned coordinates.
Embedding aligned_embedding(const Embedding& simulated, const ProcrustesResult& alignment);

}  // namespace segsim
