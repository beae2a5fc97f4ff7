#include <numeric>

#include "doctest.h"
#include "segsim/error.hpp"
#include "segsim/geometry.hpp"
#include "segsim/metrics.hpp"
#include "support/oracles.hpp"

using namespace segsim;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoFailure;
}

std::vector<LikertValue> likert(std::initializer_list<int> xs) {
  std::vector<LikertValue> out;
  for (int x : xs) out.emplace_back(x);
  return out;
}

Codebook gender_codebook() {
  return Codebook::from_json(Json::parse(R"({"columns":[
    {"name":"gender","type":"categorical","levels":["F","M"]},
    {"name":"age","type":"ordinal","levels":["young","old"]}]})"));
}

// Three F respondents answer low, three M answer high.
const char* kHumanCsv =
    "respondent_id,gender,age,Q25,Q26,Q27\n"
    "a,F,young,1,2,1\n"
    "b,F,old,2,2,1\n"
    "c,F,young,1,3,2\n"
    "d,M,old,6,6,7\n"
    "e,M,young,7,5,7\n"
    "f,M,old,6,6,6\n";

SiliconSample sample_of(const std::map<std::string, std::array<int, 3>>& rows) {
  SiliconSample s;
  s.model = "m";
  s.configuration = "Demo";
  for (const auto& [id, vals] : rows) {
    for (std::size_t i = 0; i < 3; ++i) {
      ResponseCell cell;
      cell.attempts = 1;
      if (vals[i] == 0) {
        cell.missing = MissingReason::Parse;
      } else {
        cell.value = LikertValue(vals[i]);
      }
      s.cells[{id, kOutcomeItems[i]}] = cell;
    }
  }
  return s;
}

// Pearson chi-square and V straight from the definition.
double oracle_v(const ContingencyTable& t) {
  std::vector<double> rs(t.size(), 0.0), cs(t[0].size(), 0.0);
  double n = 0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t c = 0; c < t[r].size(); ++c) {
      rs[r] += t[r][c];
      cs[c] += t[r][c];
      n += t[r][c];
    }
  }
  double chi = 0;
  std::size_t rows = 0, cols = 0;
  for (double x : rs) rows += x > 0;
  for (double x : cs) cols += x > 0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t c = 0; c < t[r].size(); ++c) {
      if (rs[r] == 0 || cs[c] == 0) continue;
      const double e = rs[r] * cs[c] / n;
      chi += (t[r][c] - e) * (t[r][c] - e) / e;
    }
  }
  return std::sqrt(chi / (n * static_cast<double>(std::min(rows, cols) - 1)));
}

}  // namespace

TEST_CASE("nEMD agrees with brute-force transport on quarter-mass distributions") {
  // Every distribution of four quarter units over seven points.
  const auto all = oracle::compositions(4, 7);
  REQUIRE(all.size() == 210);
  oracle::Rng rng(7);
  auto to_dist = [](const std::vector<int>& c) {
    std::vector<double> p;
    for (int x : c) p.push_back(x / 4.0);
    return p;
  };
  for (int trial = 0; trial < 1500; ++trial) {
    const auto& a = all[static_cast<std::size_t>(rng.integer(0, 209))];
    const auto& b = all[static_cast<std::size_t>(rng.integer(0, 209))];
    const double expected = oracle::brute_force_transport(a, b) / 4.0;
    CHECK(emd_1d(to_dist(a), to_dist(b)) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(nemd(to_dist(a), to_dist(b)) == doctest::Approx(expected / 6.0).epsilon(1e-12));
  }
}

TEST_CASE("property: nEMD is a bounded symmetric metric") {
  oracle::Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = rng.simplex(7), q = rng.simplex(7), r = rng.simplex(7);
    const double pq = nemd(p, q);
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0 + 1e-12);
    CHECK(pq == doctest::Approx(nemd(q, p)).epsilon(1e-12));
    CHECK(nemd(p, p) == 0.0);
    CHECK(pq <= nemd(p, r) + nemd(r, q) + 1e-12);
  }
  std::vector<double> lo(7, 0.0), hi(7, 0.0);
  lo[0] = 1.0;
  hi[6] = 1.0;
  CHECK(nemd(lo, hi) == doctest::Approx(1.0));
  CHECK(code_of([] { nemd(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { nemd(std::vector<double>{0.7, 0.7}, std::vector<double>{0.5, 0.5}); }) ==
        ErrorCode::InvalidDistribution);
}

TEST_CASE("Cramer's V matches the 2x2 closed form") {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = rng.integer(1, 40), b = rng.integer(1, 40), c = rng.integer(1, 40), d = rng.integer(1, 40);
    ContingencyTable t{{a, b}, {c, d}};
    CHECK(cramers_v(t) == doctest::Approx(oracle::cramers_v_2x2(a, b, c, d)).epsilon(1e-12));
  }
}

TEST_CASE("property: Cramer's V on random r x c tables") {
  oracle::Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int r = rng.integer(2, 6);
    ContingencyTable t(static_cast<std::size_t>(r), std::vector<double>(7, 0.0));
    for (auto& row : t) {
      for (auto& x : row) x = rng.uniform() < 0.3 ? 0.0 : rng.integer(0, 12);
    }
    double total = 0;
    std::size_t live_rows = 0, live_cols = 0;
    for (const auto& row : t) {
      double s = std::accumulate(row.begin(), row.end(), 0.0);
      live_rows += s > 0;
      total += s;
    }
    for (std::size_t c = 0; c < 7; ++c) {
      double s = 0;
      for (const auto& row : t) s += row[c];
      live_cols += s > 0;
    }
    if (live_rows < 2 || live_cols < 2) {
      CHECK(code_of([&] { cramers_v(t); }) == ErrorCode::DegenerateTable);
      continue;
    }
    const double v = cramers_v(t);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
    CHECK(v == doctest::Approx(oracle_v(t)).epsilon(1e-10));
  }
  // Perfect association and independence.
  CHECK(cramers_v({{5, 0}, {0, 5}}) == doctest::Approx(1.0));
  CHECK(cramers_v({{2, 4}, {3, 6}}) == doctest::Approx(0.0));
  CHECK(code_of([] { cramers_v({{1, 2, 3}, {0, 0, 0}}); }) == ErrorCode::DegenerateTable);
}

TEST_CASE("KLD is non-negative and zero only on equal inputs") {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = rng.simplex(7), q = rng.simplex(7);
    CHECK(kld(p, q) > 0.0);
    CHECK(kld(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }
  // Zero cells are smoothed rather than producing infinity.
  std::vector<double> a(7, 0.0), b(7, 0.0);
  a[0] = 1.0;
  b[6] = 1.0;
  CHECK(std::isfinite(kld(a, b)));
  CHECK(kld(a, b) > 1.0);
  CHECK(code_of([&] { kld(a, b, 0.0); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("weighted classification scores on a frozen confusion") {
  // Gold 1,1,2,2 predicted 1,1,1,2: class 1 P=2/3 R=1, class 2 P=1 R=1/2.
  const auto s = paired_classification(likert({1, 1, 2, 2}), likert({1, 1, 1, 2}));
  CHECK(s.accuracy == doctest::Approx(0.75));
  CHECK(s.weighted_precision == doctest::Approx(0.8333333333333334));
  CHECK(s.weighted_recall == doctest::Approx(0.75));
  CHECK(s.weighted_f1 == doctest::Approx(0.7333333333333333));
  CHECK(s.n == 4);
  CHECK(code_of([] { paired_classification(likert({1}), likert({1, 2})); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { paired_classification(likert({}), likert({})); }) == ErrorCode::EmptySelection);
}

TEST_CASE("property: weighted recall equals accuracy, identical vectors score 1") {
  oracle::Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 60);
    std::vector<LikertValue> g, p;
    for (int i = 0; i < n; ++i) {
      g.emplace_back(rng.integer(1, 7));
      p.emplace_back(rng.integer(1, 7));
    }
    const auto s = paired_classification(g, p);
    CHECK(s.weighted_recall == doctest::Approx(s.accuracy).epsilon(1e-12));
    CHECK(s.weighted_precision <= 1.0 + 1e-12);
    const auto self = paired_classification(g, g);
    CHECK(self.accuracy == 1.0);
    CHECK(self.weighted_f1 == doctest::Approx(1.0));
  }
}

TEST_CASE("MAE is the absolute difference of means") {
  CHECK(mae(likert({1, 2, 3}), likert({4, 4})) == doctest::Approx(2.0));
  CHECK(mae(likert({7}), likert({1})) == doctest::Approx(6.0));
  CHECK(code_of([] { mae(likert({}), likert({1})); }) == ErrorCode::EmptySelection);
}

TEST_CASE("spread: SD with n - 1 divisor and CV = SD / mean") {
  const auto c = spread(likert({1, 7}));
  CHECK(c.n == 2);
  CHECK(c.mean == doctest::Approx(4.0));
  CHECK(c.sd == doctest::Approx(std::sqrt(18.0)));
  CHECK(c.cv == doctest::Approx(std::sqrt(18.0) / 4.0));
  CHECK(spread(likert({4, 4, 4})).sd == 0.0);
  CHECK(spread(likert({5})).degenerate);
  oracle::Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LikertValue> v;
    for (int i = rng.integer(2, 40); i > 0; --i) v.emplace_back(rng.integer(1, 7));
    const auto s = spread(v);
    CHECK(s.cv == doctest::Approx(s.sd / s.mean).epsilon(1e-12));
  }
}

TEST_CASE("pairing drops missing simulated cells and counts them") {
  const auto human = parse_dataset_csv(kHumanCsv, gender_codebook());
  const auto sim = sample_of({{"a", {1, 0, 1}}, {"b", {2, 2, 1}}, {"c", {1, 3, 2}},
                              {"d", {6, 0, 7}}, {"e", {7, 5, 7}}, {"f", {6, 6, 6}}});
  const auto q26 = pair_responses(human, sim, OutcomeItem::Q26);
  CHECK(q26.excluded == 2);
  CHECK(q26.respondent_ids == std::vector<std::string>{"b", "c", "e", "f"});
  CHECK(pair_responses(human, sim, OutcomeItem::Q25).excluded == 0);

  const auto block = distributional_block(human, sim, {kOutcomeItems.begin(), kOutcomeItems.end()});
  CHECK(block.excluded_pairs == 2);
  REQUIRE(block.items.size() == 3);
  CHECK(block.items[0].mae == doctest::Approx(0.0));
  CHECK(block.items[0].classification.accuracy == 1.0);
  CHECK(block.summary.accuracy == doctest::Approx(1.0));
  CHECK(block.items[1].pairs == 4);

  // Every pair of an item missing: nothing to score.
  const auto empty = sample_of({{"a", {1, 0, 1}}, {"b", {2, 0, 1}}, {"c", {1, 0, 2}},
                                {"d", {6, 0, 7}}, {"e", {7, 0, 7}}, {"f", {6, 0, 6}}});
  CHECK(pair_responses(human, empty, OutcomeItem::Q26).excluded == 6);
  CHECK(code_of([&] { mae(human, empty, OutcomeItem::Q26); }) == ErrorCode::EmptySelection);
}

TEST_CASE("self-comparison is a fixed point") {
  const auto human = parse_dataset_csv(kHumanCsv, gender_codebook());
  const auto self = SiliconSample::from_dataset(human, "human", "");
  const auto block = distributional_block(human, self, {kOutcomeItems.begin(), kOutcomeItems.end()});
  CHECK(block.summary.mae == 0.0);
  CHECK(block.summary.accuracy == 1.0);
  CHECK(block.summary.weighted_f1 == doctest::Approx(1.0));
  CHECK(block.summary.kld == doctest::Approx(0.0).epsilon(1e-15));

  SegmentationConfiguration cfg;
  cfg.kind = ConfigurationKind::Item4;
  cfg.identifiers = {{"gender", "Gender: {value}"}, {"age", "Age: {value}"}};
  const auto assoc = predictive_block(human, self, cfg, {kOutcomeItems.begin(), kOutcomeItems.end()});
  REQUIRE(assoc.benchmark_gap.has_value());
  CHECK(*assoc.benchmark_gap == 0.0);
  CHECK(assoc.pairs.size() == 6);
  // Gender separates answers completely.
  CHECK(*assoc.pairs[0].human_v == doctest::Approx(1.0));
}

TEST_CASE("predictive block excludes degenerate pairs from both aggregates") {
  const auto human = parse_dataset_csv(kHumanCsv, gender_codebook());
  // Simulated Q27 is constant: one non-empty column, so that pair is excluded.
  const auto sim = sample_of({{"a", {1, 2, 4}}, {"b", {2, 2, 4}}, {"c", {6, 3, 4}},
                              {"d", {6, 6, 4}}, {"e", {7, 5, 4}}, {"f", {6, 6, 4}}});
  SegmentationConfiguration cfg;
  cfg.kind = ConfigurationKind::Item4;
  cfg.identifiers = {{"gender", "Gender: {value}"}};
  const std::vector<OutcomeItem> items{kOutcomeItems.begin(), kOutcomeItems.end()};
  const auto block = predictive_block(human, sim, cfg, items);
  CHECK(block.excluded_pairs == 1);
  CHECK(block.pairs[2].excluded);
  CHECK_FALSE(block.pairs[2].sim_v.has_value());
  CHECK(block.pairs[2].human_v.has_value());

  double h = 0, s = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<std::string> rows;
    const auto p = pair_responses(human, sim, items[i]);
    for (const auto& id : p.respondent_ids) rows.push_back(human.find(id)->attribute("gender"));
    h += oracle_v(contingency(rows, p.human, {"F", "M"}));
    s += oracle_v(contingency(rows, p.sim, {"F", "M"}));
  }
  CHECK(*block.human_aggregate == doctest::Approx(h / 2));
  CHECK(*block.sim_aggregate == doctest::Approx(s / 2));
  CHECK(*block.benchmark_gap == doctest::Approx(std::abs(s - h) / 2));
}

TEST_CASE("benchmark gap is the absolute difference") {
  CHECK(benchmark_gap(0.07, 0.10) == doctest::Approx(0.03));
  CHECK(benchmark_gap(0.10, 0.07) == doctest::Approx(0.03));
}

TEST_CASE("subgroup SD/CV cells and degenerate handling") {
  const auto human = parse_dataset_csv(kHumanCsv, gender_codebook());
  SubgroupMap groups{{"a", "low"}, {"b", "low"}, {"c", "low"}, {"d", "high"}, {"e", "high"}, {"f", "solo"}};
  const auto block = subgroup_sd_cv(human, {OutcomeItem::Q25}, groups);
  REQUIRE(block.cells.size() == 3);
  CHECK(block.cells[0].subgroup == "high");
  CHECK(block.cells[2].subgroup == "solo");
  CHECK(block.cells[2].degenerate);
  CHECK(block.degenerate_cells == 1);
  const double sd_low = spread(likert({1, 2, 1})).sd, sd_high = spread(likert({6, 7})).sd;
  CHECK(*block.mean_sd == doctest::Approx((sd_low + sd_high) / 2));
  CHECK(*block.mean_cv == doctest::Approx((sd_low / (4.0 / 3.0) + sd_high / 6.5) / 2));

  SubgroupMap partial{{"a", "x"}};
  CHECK(code_of([&] { subgroup_sd_cv(human, {OutcomeItem::Q25}, partial); }) == ErrorCode::LabelMismatch);
}
