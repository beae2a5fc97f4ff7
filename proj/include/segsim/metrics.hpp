#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segsim/dataset.hpp"
#include "segsim/segmentation.hpp"
#include "segsim/silicon.hpp"

namespace segsim {

using SubgroupMap = std::map<std::string, std::string, std::less<>>;

// Responses of one item paired by respondent id. Pairs where the simulated
// side is missing are dropped and counted in `excluded`.
struct PairedResponses {
  std::vector<std::string> respondent_ids;
  std::vector<LikertValue> human;
  std::vector<LikertValue> sim;
  std::size_t excluded = 0;
};

PairedResponses pair_responses(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item);

// ---------------------------------------------------------------------------
// Distributional fidelity

// |mean(a) - mean(b)|: the item-level difference of means on the quasi-continuous scale.
double mae(std::span<const LikertValue> a, std::span<const LikertValue> b);
double mae(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item);

struct ClassificationScores {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::size_t n = 0;
};

// Seven-class confusion with `gold` as truth; per-class scores weighted by gold
// support. Precision of a never-predicted class is 0.
ClassificationScores paired_classification(std::span<const LikertValue> gold, std::span<const LikertValue> predicted);
ClassificationScores paired_classification(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item);

enum class KlDirection { HumanToSimulated, SimulatedToHuman };

inline constexpr double kDefaultKlEpsilon = 1e-6;

// KL(p || q) after adding epsilon to every cell of both and renormalising.
double kld(std::span<const double> p, std::span<const double> q, double epsilon = kDefaultKlEpsilon);

struct ItemDistributional {
  OutcomeItem item = OutcomeItem::Q25;
  double mae = 0.0;
  ClassificationScores classification;
  double kld = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded = 0;
};

struct DistributionalSummary {
  double mae = 0.0;
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double kld = 0.0;
};

struct DistributionalBlock {
  std::vector<ItemDistributional> items;
  DistributionalSummary summary;  // unweighted means over items
  std::size_t excluded_pairs = 0;
};

DistributionalBlock distributional_block(const SurveyDataset& human, const SiliconSample& sim,
                                         const std::vector<OutcomeItem>& items,
                                         double epsilon = kDefaultKlEpsilon,
                                         KlDirection direction = KlDirection::HumanToSimulated);

// ---------------------------------------------------------------------------
// Within-group variance

struct VarianceCell {
  std::string subgroup;
  OutcomeItem item = OutcomeItem::Q25;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample SD, n - 1 divisor
  double cv = 0.0;
  bool degenerate = false;  // n < 2; excluded from the summaries
};

struct VarianceBlock {
  std::vector<VarianceCell> cells;
  std::optional<double> mean_sd;
  std::optional<double> mean_cv;
  std::size_t degenerate_cells = 0;
};

VarianceCell spread(std::span<const LikertValue> values);

// Cells per (subgroup x item), subgroups in label order. Only respondents
// present in both `sample` and `subgroups` with a value contribute.
VarianceBlock subgroup_sd_cv(const SiliconSample& sample, const std::vector<OutcomeItem>& items,
                             const SubgroupMap& subgroups);
VarianceBlock subgroup_sd_cv(const SurveyDataset& dataset, const std::vector<OutcomeItem>& items,
                             const SubgroupMap& subgroups);

// ---------------------------------------------------------------------------
// Predictive fidelity

using ContingencyTable = std::vector<std::vector<double>>;

// Pearson chi-square after dropping empty rows and columns.
double chi_square(const ContingencyTable& table);
// Uncorrected Cramer's V. DegenerateTable when fewer than two non-empty rows or
// columns remain.
double cramers_v(const ContingencyTable& table);

// Rows follow `row_levels`, columns are the seven scale points.
ContingencyTable contingency(std::span<const std::string> row_values, std::span<const LikertValue> responses,
                             const std::vector<std::string>& row_levels);

struct AssociationPair {
  std::string identifier;
  OutcomeItem item = OutcomeItem::Q25;
  std::optional<double> human_v;
  std::optional<double> sim_v;
  bool excluded = false;  // either side degenerate
};

struct AssociationBlock {
  std::vector<AssociationPair> pairs;
  std::optional<double> human_aggregate;
  std::optional<double> sim_aggregate;
  std::optional<double> benchmark_gap;
  std::size_t excluded_pairs = 0;
};

double benchmark_gap(double sim_aggregate, double human_aggregate);

AssociationBlock predictive_block(const SurveyDataset& human, const SiliconSample& sim,
                                  const SegmentationConfiguration& config, const std::vector<OutcomeItem>& items);

}  // namespace segsim
