#include "segsim/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "segsim/error.hpp"

namespace segsim {

PairedResponses pair_responses(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item) {
  PairedResponses out;
  for (const auto& r : human.records()) {
    const auto h = r.outcome(item);
    const auto s = sim.value(r.respondent_id, item);
    if (!h || !s) {
      ++out.excluded;
      continue;
    }
    out.respondent_ids.push_back(r.respondent_id);
    out.human.push_back(*h);
    out.sim.push_back(*s);
  }
  return out;
}

namespace {

double mean_of(std::span<const LikertValue> values) {
  double sum = 0.0;
  for (const auto& v : values) sum += v.value();
  return sum / static_cast<double>(values.size());
}

void require_pairs(const PairedResponses& pairs, OutcomeItem item) {
  if (pairs.human.empty()) {
    throw Error(ErrorCode::EmptySelection, "no non-missing pairs for " + std::string(item_id(item)));
  }
}

}  // namespace

double mae(std::span<const LikertValue> a, std::span<const LikertValue> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySelection, "MAE needs responses on both sides");
  return std::abs(mean_of(a) - mean_of(b));
}

double mae(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item) {
  const auto pairs = pair_responses(human, sim, item);
  require_pairs(pairs, item);
  return mae(pairs.human, pairs.sim);
}

ClassificationScores paired_classification(std::span<const LikertValue> gold, std::span<const LikertValue> predicted) {
  if (gold.size() != predicted.size()) throw Error(ErrorCode::LengthMismatch, "paired vectors differ in length");
  if (gold.empty()) throw Error(ErrorCode::EmptySelection, "no pairs to classify");

  std::array<std::array<std::size_t, kScalePoints>, kScalePoints> confusion{};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++confusion[static_cast<std::size_t>(gold[i].value() - 1)][static_cast<std::size_t>(predicted[i].value() - 1)];
  }
  const double n = static_cast<double>(gold.size());
  ClassificationScores s;
  s.n = gold.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < kScalePoints; ++c) {
    std::size_t support = 0, predicted_c = 0;
    for (std::size_t k = 0; k < kScalePoints; ++k) {
      support += confusion[c][k];
      predicted_c += confusion[k][c];
    }
    const std::size_t tp = confusion[c][c];
    correct += tp;
    if (support == 0) continue;
    const double precision = predicted_c ? static_cast<double>(tp) / static_cast<double>(predicted_c) : 0.0;
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = static_cast<double>(support) / n;
    s.weighted_precision += w * precision;
    s.weighted_recall += w * recall;
    s.weighted_f1 += w * f1;
  }
  s.accuracy = static_cast<double>(correct) / n;
  return s;
}

ClassificationScores paired_classification(const SurveyDataset& human, const SiliconSample& sim, OutcomeItem item) {
  const auto pairs = pair_responses(human, sim, item);
  require_pairs(pairs, item);
  return paired_classification(pairs.human, pairs.sim);
}

double kld(std::span<const double> p, std::span<const double> q, double epsilon) {
  if (p.size() != q.size()) throw Error(ErrorCode::LengthMismatch, "KLD inputs differ in length");
  if (p.empty()) throw Error(ErrorCode::InvalidDistribution, "empty distribution");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "KLD epsilon must be positive");
  auto check = [](std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) {
      if (!(x >= 0.0)) throw Error(ErrorCode::InvalidDistribution, "negative or NaN probability");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidDistribution, "probabilities do not sum to 1");
  };
  check(p);
  check(q);
  const double norm = 1.0 + epsilon * static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double ps = (p[k] + epsilon) / norm;
    const double qs = (q[k] + epsilon) / norm;
    total += ps * std::log(ps / qs);
  }
  return std::max(total, 0.0);
}

DistributionalBlock distributional_block(const SurveyDataset& human, const SiliconSample& sim,
                                         const std::vector<OutcomeItem>& items, double epsilon,
                                         KlDirection direction) {
  if (items.empty()) throw Error(ErrorCode::EmptyList, "no outcome items");
  DistributionalBlock block;
  for (OutcomeItem item : items) {
    const auto pairs = pair_responses(human, sim, item);
    require_pairs(pairs, item);
    ItemDistributional d;
    d.item = item;
    d.pairs = pairs.human.size();
    d.excluded = pairs.excluded;
    d.mae = mae(pairs.human, pairs.sim);
    d.classification = paired_classification(pairs.human, pairs.sim);
    const auto ph = frequency_distribution(pairs.human);
    const auto ps = frequency_distribution(pairs.sim);
    d.kld = direction == KlDirection::HumanToSimulated ? kld(ph, ps, epsilon) : kld(ps, ph, epsilon);
    block.excluded_pairs += d.excluded;
    block.items.push_back(d);
  }
  const double m = static_cast<double>(block.items.size());
  for (const auto& d : block.items) {
    block.summary.mae += d.mae / m;
    block.summary.accuracy += d.classification.accuracy / m;
    block.summary.weighted_precision += d.classification.weighted_precision / m;
    block.summary.weighted_recall += d.classification.weighted_recall / m;
    block.summary.weighted_f1 += d.classification.weighted_f1 / m;
    block.summary.kld += d.kld / m;
  }
  return block;
}

// ---------------------------------------------------------------------------
// Variance

VarianceCell spread(std::span<const LikertValue> values) {
  VarianceCell cell;
  cell.n = values.size();
  if (values.empty()) {
    cell.degenerate = true;
    return cell;
  }
  cell.mean = mean_of(values);
  if (values.size() < 2) {
    cell.degenerate = true;
    return cell;
  }
  double ss = 0.0;
  for (const auto& v : values) {
    const double d = v.value() - cell.mean;
    ss += d * d;
  }
  cell.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  cell.cv = cell.mean > 0.0 ? cell.sd / cell.mean : 0.0;
  return cell;
}

namespace {

VarianceBlock summarise(std::vector<VarianceCell> cells) {
  VarianceBlock block;
  double sd_sum = 0.0, cv_sum = 0.0;
  std::size_t used = 0;
  for (const auto& c : cells) {
    if (c.degenerate) {
      ++block.degenerate_cells;
      continue;
    }
    sd_sum += c.sd;
    cv_sum += c.cv;
    ++used;
  }
  if (used > 0) {
    block.mean_sd = sd_sum / static_cast<double>(used);
    block.mean_cv = cv_sum / static_cast<double>(used);
  }
  block.cells = std::move(cells);
  return block;
}

}  // namespace

VarianceBlock subgroup_sd_cv(const SiliconSample& sample, const std::vector<OutcomeItem>& items,
                             const SubgroupMap& subgroups) {
  std::map<std::string, std::array<std::vector<LikertValue>, 3>> grouped;
  for (const auto& [respondent, label] : subgroups) grouped[label];
  for (const auto& [key, cell] : sample.cells) {
    if (!cell.value) continue;
    auto it = subgroups.find(key.respondent_id);
    if (it == subgroups.end()) {
      throw Error(ErrorCode::LabelMismatch, "respondent '" + key.respondent_id + "' has no subgroup");
    }
    grouped[it->second][item_index(key.item)].push_back(*cell.value);
  }
  std::vector<VarianceCell> cells;
  for (const auto& [label, per_item] : grouped) {
    for (OutcomeItem item : items) {
      auto cell = spread(per_item[item_index(item)]);
      cell.subgroup = label;
      cell.item = item;
      cells.push_back(std::move(cell));
    }
  }
  return summarise(std::move(cells));
}

VarianceBlock subgroup_sd_cv(const SurveyDataset& dataset, const std::vector<OutcomeItem>& items,
                             const SubgroupMap& subgroups) {
  return subgroup_sd_cv(SiliconSample::from_dataset(dataset, "human", ""), items, subgroups);
}

// ---------------------------------------------------------------------------
// Association

namespace {

ContingencyTable drop_empty(const ContingencyTable& table) {
  if (table.empty()) return {};
  const std::size_t cols = table.front().size();
  std::vector<double> col_sum(cols, 0.0);
  std::vector<std::size_t> rows_kept;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (table[r].size() != cols) throw Error(ErrorCode::LengthMismatch, "ragged contingency table");
    double row_sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(table[r][c] >= 0.0)) throw Error(ErrorCode::DegenerateTable, "negative count");
      row_sum += table[r][c];
      col_sum[c] += table[r][c];
    }
    if (row_sum > 0.0) rows_kept.push_back(r);
  }
  ContingencyTable out;
  for (std::size_t r : rows_kept) {
    std::vector<double> row;
    for (std::size_t c = 0; c < cols; ++c) {
      if (col_sum[c] > 0.0) row.push_back(table[r][c]);
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

double chi_square(const ContingencyTable& table) {
  const auto t = drop_empty(table);
  if (t.size() < 2 || t.front().size() < 2) {
    throw Error(ErrorCode::DegenerateTable, "fewer than two non-empty rows or columns");
  }
  const std::size_t rows = t.size(), cols = t.front().size();
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double n = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      row_sum[r] += t[r][c];
      col_sum[c] += t[r][c];
      n += t[r][c];
    }
  }
  double chi2 = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double expected = row_sum[r] * col_sum[c] / n;
      const double diff = t[r][c] - expected;
      chi2 += diff * diff / expected;
    }
  }
  return chi2;
}

double cramers_v(const ContingencyTable& table) {
  const auto t = drop_empty(table);
  if (t.size() < 2 || t.front().size() < 2) {
    throw Error(ErrorCode::DegenerateTable, "fewer than two non-empty rows or columns");
  }
  double n = 0.0;
  for (const auto& row : t) n = std::accumulate(row.begin(), row.end(), n);
  const double k = static_cast<double>(std::min(t.size(), t.front().size()) - 1);
  return std::clamp(std::sqrt(chi_square(t) / (n * k)), 0.0, 1.0);
}

ContingencyTable contingency(std::span<const std::string> row_values, std::span<const LikertValue> responses,
                             const std::vector<std::string>& row_levels) {
  if (row_values.size() != responses.size()) throw Error(ErrorCode::LengthMismatch, "contingency inputs differ in length");
  ContingencyTable table(row_levels.size(), std::vector<double>(kScalePoints, 0.0));
  for (std::size_t i = 0; i < row_values.size(); ++i) {
    auto it = std::find(row_levels.begin(), row_levels.end(), row_values[i]);
    if (it == row_levels.end()) throw Error(ErrorCode::UnknownLevel, "value '" + row_values[i] + "' not a row level");
    table[static_cast<std::size_t>(it - row_levels.begin())][static_cast<std::size_t>(responses[i].value() - 1)] += 1.0;
  }
  return table;
}

double benchmark_gap(double sim_aggregate, double human_aggregate) { return std::abs(sim_aggregate - human_aggregate); }

AssociationBlock predictive_block(const SurveyDataset& human, const SiliconSample& sim,
                                  const SegmentationConfiguration& config, const std::vector<OutcomeItem>& items) {
  AssociationBlock block;
  double human_sum = 0.0, sim_sum = 0.0;
  std::size_t used = 0;
  std::vector<PairedResponses> paired;
  for (OutcomeItem item : items) paired.push_back(pair_responses(human, sim, item));
  for (const auto& def : config.identifiers) {
    const auto& spec = human.codebook().at(def.name);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const OutcomeItem item = items[i];
      const auto& pairs = paired[i];
      std::vector<std::string> rows;
      rows.reserve(pairs.respondent_ids.size());
      for (const auto& id : pairs.respondent_ids) rows.push_back(human.find(id)->attribute(def.name));

      AssociationPair pair{def.name, item, std::nullopt, std::nullopt, false};
      auto v_or_nothing = [&](std::span<const LikertValue> responses) -> std::optional<double> {
        try {
          return cramers_v(contingency(rows, responses, spec.levels));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateTable) throw;
          return std::nullopt;
        }
      };
      pair.human_v = v_or_nothing(pairs.human);
      pair.sim_v = v_or_nothing(pairs.sim);
      if (pair.human_v && pair.sim_v) {
        human_sum += *pair.human_v;
        sim_sum += *pair.sim_v;
        ++used;
      } else {
        pair.excluded = true;
        ++block.excluded_pairs;
      }
      block.pairs.push_back(std::move(pair));
    }
  }
  if (used > 0) {
    block.human_aggregate = human_sum / static_cast<double>(used);
    block.sim_aggregate = sim_sum / static_cast<double>(used);
    block.benchmark_gap = benchmark_gap(*block.sim_aggregate, *block.human_aggregate);
  }
  return block;
}

}  // namespace segsim
