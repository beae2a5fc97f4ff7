// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "segsim/error.hpp"
#include "segsim/geometry.hpp"
#include "segsim/metrics.hpp"
#include "segsim/pipeline.hpp"
#include "segsim/report.hpp"
#include "support/oracles.hpp"

using namespace segsim;
namespace fs = std::filesystem;

namespace {

const fs::path kToy = SEGSIM_TOY_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 1. Metric oracles.
Outcome metric_oracles() {
  Outcome o;
  const auto all = oracle::compositions(4, 4);
  double worst = 0.0;
  for (const auto& a : all) {
    for (const auto& b : all) {
      std::vector<double> p, q;
      for (int x : a) p.push_back(x / 4.0);
      for (int x : b) q.push_back(x / 4.0);
      worst = std::max(worst, std::abs(emd_1d(p, q) - oracle::brute_force_transport(a, b) / 4.0));
    }
  }
  o.require(worst <= 1e-9, "emd_1d deviates from brute-force transport by " + fmt("%.3g", worst));

  oracle::Rng rng(20240611);
  double worst_v = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double a = rng.integer(1, 50), b = rng.integer(1, 50), c = rng.integer(1, 50), d = rng.integer(1, 50);
    worst_v = std::max(worst_v, std::abs(cramers_v({{a, b}, {c, d}}) - oracle::cramers_v_2x2(a, b, c, d)));
  }
  o.require(worst_v <= 1e-9, "cramers_v deviates from the 2x2 closed form by " + fmt("%.3g", worst_v));

  for (int t = 0; t < 1000; ++t) {
    const auto p = rng.simplex(7), q = rng.simplex(7);
    const double pq = kld(p, q), pp = kld(p, p);
    o.require(pq > 1e-9, "KLD not positive for distinct inputs");
    o.require(std::abs(pp) <= 1e-9, "KLD of equal inputs is " + fmt("%.3g", pp));
  }
  if (o.pass) {
    o.detail = std::to_string(all.size() * all.size()) + " transport pairs, max error " + fmt("%.1e", worst) +
               "; V max error " + fmt("%.1e", worst_v) + "; 1000 KLD trials";
  }
  return o;
}

// 2. Geometry.
Outcome geometry() {
  Outcome o;
  oracle::Rng rng(1618);
  double worst_mds = 0.0, worst_proc = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto n = static_cast<Eigen::Index>(rng.integer(4, 8));
    const Eigen::MatrixX2d x = oracle::planted_configuration(rng, n);
    DistanceMatrix dm;
    for (Eigen::Index i = 0; i < n; ++i) dm.labels.push_back("g" + std::to_string(i));
    dm.d = oracle::euclidean_distances(x);
    const auto e = classical_mds(dm);
    worst_mds = std::max(worst_mds, (oracle::euclidean_distances(e.coords) - dm.d).cwiseAbs().maxCoeff());

    Embedding target = e;
    const double s = rng.uniform(0.1, 10.0);
    const Eigen::RowVector2d shift(rng.uniform(-5, 5), rng.uniform(-5, 5));
    target.coords = (s * e.coords * oracle::random_orthogonal(rng)).rowwise() + shift;
    worst_proc = std::max(worst_proc, procrustes(e, target).distance);
  }
  o.require(worst_mds <= 1e-9, "MDS distance error " + fmt("%.3g", worst_mds));
  o.require(worst_proc <= 1e-10, "Procrustes distance " + fmt("%.3g", worst_proc));
  if (o.pass) o.detail = "max MDS error " + fmt("%.1e", worst_mds) + ", max Procrustes " + fmt("%.1e", worst_proc);
  return o;
}

struct ToyInputs {
  SurveyDataset human;
  SubgroupMap segments;
  std::vector<SegmentationConfiguration> configs;
};

ToyInputs toy_inputs() {
  ToyInputs t{load_dataset(kToy / "human.csv", kToy / "codebook.json"), {}, {}};
  const auto table = DecisionTable::load(kToy / "segmentation_table.json");
  for (const auto& r : t.human.records()) t.segments[r.respondent_id] = assign_segment(r, table);
  const auto& cb = t.human.codebook();
  const std::vector<std::pair<ConfigurationKind, const char*>> files{
      {ConfigurationKind::Demo, "demo.txt"},       {ConfigurationKind::DemoTheory59, "theory59.txt"},
      {ConfigurationKind::DemoTheory15, "theory15.txt"}, {ConfigurationKind::Item15, "item15.txt"},
      {ConfigurationKind::Item4, "item4.txt"}};
  for (const auto& [kind, file] : files) {
    t.configs.push_back(build_configuration(kind, cb, load_identifier_set(kToy / "identifiers" / file)));
  }
  const auto candidates = load_identifier_set(kToy / "identifiers" / "candidates.txt");
  std::vector<std::string> names;
  for (const auto& c : candidates) names.push_back(c.name);
  const auto ranking = rank_identifiers(t.human.with_segments(t.segments), names);
  t.configs.push_back(build_data_driven_configuration(ranking, candidates, cb));
  return t;
}

// 3. Self-comparison.
Outcome self_comparison() {
  Outcome o;
  const auto t = toy_inputs();
  std::vector<SiliconSample> samples;
  for (const auto& c : t.configs) samples.push_back(SiliconSample::from_dataset(t.human, "self", c.name()));
  const auto report = compile_report(t.human, samples, t.configs, t.segments);
  std::map<std::string, const RunScalars*> human_rows;
  for (const auto& h : report.human_benchmark) human_rows[h.configuration] = &h;
  for (const auto& r : report.runs) {
    const std::string where = r.configuration + ": ";
    o.require(r.accuracy && *r.accuracy == 1.0, where + "accuracy != 1");
    o.require(r.mae && *r.mae == 0.0, where + "MAE != 0");
    o.require(r.kld && *r.kld <= 1e-12, where + "KLD > 1e-12");
    o.require(r.procrustes_distance && *r.procrustes_distance <= 1e-10, where + "Procrustes > 1e-10");
    o.require(r.benchmark_gap && *r.benchmark_gap == 0.0, where + "aggregate V gap != 0");
    const auto* h = human_rows.at(r.configuration);
    o.require(r.aggregate_nemd && h->aggregate_nemd && *r.aggregate_nemd == *h->aggregate_nemd,
              where + "aggregate nEMD differs from the human benchmark");
  }
  for (const auto& d : report.details) {
    for (const auto& p : d.association.pairs) {
      o.require(p.human_v == p.sim_v, d.configuration + ": V gap on " + p.identifier);
    }
  }
  if (o.pass) {
    o.detail = std::to_string(report.runs.size()) + " configurations on " + std::to_string(t.human.size()) +
               " respondents, every gap 0";
  }
  return o;
}

// 4. Compression sensitivity.
Outcome compression_sensitivity() {
  Outcome o;
  constexpr int kPerGroup = 10000;
  SubgroupMap groups;
  for (int i = 0; i < kPerGroup; ++i) {
    groups["lo" + std::to_string(100000 + i)] = "low";
    groups["hi" + std::to_string(100000 + i)] = "high";
  }
  const std::vector<OutcomeItem> items{kOutcomeItems.begin(), kOutcomeItems.end()};
  double prev_sd = -1.0, prev_nemd = -1.0;
  bool sd_monotone = true, nemd_monotone = true;
  std::string series;
  for (double c : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    MockRespondentModel m{{{"low", {2.0, 1.0}}, {"high", {6.0, 1.0}}}, c, 20240611};
    const auto sample = sample_mock(m, groups, items);
    const double sd = *subgroup_sd_cv(sample, items, groups).mean_sd;
    const double nemd_agg = between_group_block(sample, groups, items).aggregate_nemd;
    if (c == 0.0) o.require(sd == 0.0, "compression 0 SD is " + fmt("%.3g", sd));
    sd_monotone = sd_monotone && sd >= prev_sd;
    nemd_monotone = nemd_monotone && nemd_agg >= prev_nemd;
    prev_sd = sd;
    prev_nemd = nemd_agg;
    series += " c=" + fmt("%.2f", c) + ":sd=" + fmt("%.4f", sd) + ",nemd=" + fmt("%.4f", nemd_agg);
  }
  o.require(sd_monotone, "mean subgroup SD not monotone");
  o.require(nemd_monotone, "aggregate nEMD decreases with compression");
  o.detail = (o.pass ? std::string("monotone;") : o.detail + (sd_monotone ? " (SD monotone);" : ";")) + series;
  return o;
}

// 5. Transcribed Cramer's V table through the gap computation.
Outcome paper_fixture() {
  Outcome o;
  struct Row {
    const char* configuration;
    double human, llama, mixtral;
  };
  const std::vector<Row> table{{"Demo", .19, .27, .08},         {"Demo+Theory-59", .25, .19, .21},
                               {"Demo+Theory-15", .26, .23, .18}, {"Data-driven", .28, .29, .33},
                               {"Item-15", .34, .24, .21},        {"Item-4", .39, .40, .44}};
  FidelityReport report;
  for (const auto& r : table) {
    RunScalars h;
    h.configuration = r.configuration;
    h.model = h.row_type = std::string(kHumanRow);
    h.human_v = r.human;
    report.human_benchmark.push_back(h);
    for (const auto& [model, v] : {std::pair{"Llama", r.llama}, std::pair{"Mixtral", r.mixtral}}) {
      RunScalars s;
      s.configuration = r.configuration;
      s.model = model;
      s.human_v = r.human;
      s.sim_v = v;
      s.benchmark_gap = benchmark_gap(v, r.human);
      report.runs.push_back(s);
    }
  }
  finalize_report(report);
  auto hundredths = [](double x) { return std::lround(x * 100.0); };
  const RunScalars* llama = nullptr;
  const RunScalars* mixtral = nullptr;
  for (const auto& r : report.runs) {
    if (r.configuration == std::string("Item-4")) (r.model == "Llama" ? llama : mixtral) = &r;
  }
  const RunScalars* cross = nullptr;
  for (const auto& r : report.cross_model) {
    if (r.configuration == "Item-4") cross = &r;
  }
  o.require(hundredths(*llama->benchmark_gap) == 1, "Item-4 Llama gap " + fmt("%.2f", *llama->benchmark_gap));
  o.require(hundredths(*mixtral->benchmark_gap) == 5, "Item-4 Mixtral gap " + fmt("%.2f", *mixtral->benchmark_gap));
  o.require(hundredths(*cross->benchmark_gap) == 3, "Item-4 cross-model gap " + fmt("%.2f", *cross->benchmark_gap));
  const double kld_avg = cross_model_average(std::vector<double>{2.72, 6.58});
  o.require(hundredths(kld_avg) == 465, "cross_model_average(2.72, 6.58) = " + fmt("%.2f", kld_avg));
  if (o.pass) {
    o.detail = "Item-4 gaps " + fmt("%.2f", *llama->benchmark_gap) + "/" + fmt("%.2f", *mixtral->benchmark_gap) +
               ", mean " + fmt("%.2f", *cross->benchmark_gap) + "; average " + fmt("%.2f", kld_avg);
  }
  return o;
}

// 6. Median within item, then mean across items.
Outcome aggregation_rule() {
  Outcome o;
  auto matrix = [](const std::vector<std::string>& labels, const std::vector<double>& tri) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    DistanceMatrix m{labels, Eigen::MatrixXd::Zero(n, n)};
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) m.d(i, j) = m.d(j, i) = tri[k++];
    }
    return m;
  };
  const std::vector<std::string> labels{"A", "B", "C", "D"};
  // Sorted triangles: {.05,.10,.20,.40,.70,.90} -> .30; {.15,.15,.25,.35,.60,.80} -> .30;
  // {0,.02,.04,.50,.52,1} -> .27. Mean of medians = .29.
  const std::vector<DistanceMatrix> ms{matrix(labels, {0.70, 0.05, 0.40, 0.90, 0.10, 0.20}),
                                       matrix(labels, {0.15, 0.80, 0.25, 0.35, 0.15, 0.60}),
                                       matrix(labels, {0.52, 0.00, 1.00, 0.04, 0.50, 0.02})};
  const std::vector<double> hand{0.30, 0.30, 0.27};
  for (std::size_t i = 0; i < 3; ++i) {
    const double got = upper_triangle_median(ms[i]);
    o.require(std::abs(got - hand[i]) <= 1e-12, "item " + std::to_string(i) + " median " + fmt("%.15g", got));
    o.require(std::abs(got - oracle::median(ms[i].upper_triangle())) <= 1e-12, "median disagrees with oracle");
  }
  const double agg = aggregate_nemd(ms);
  o.require(std::abs(agg - 0.29) <= 1e-12, "aggregate " + fmt("%.15g", agg));
  // Mean-then-median would give a different value here.
  const double pooled = upper_triangle_median(mean_matrix(ms));
  o.require(std::abs(pooled - agg) > 1e-6, "fixture does not distinguish the two orders");
  if (o.pass) o.detail = "aggregate " + fmt("%.12f", agg) + " (pooled-matrix median would be " + fmt("%.4f", pooled) + ")";
  return o;
}

// 7. Two full mock runs, byte-identical report JSON.
Outcome pipeline_determinism() {
  Outcome o;
  const auto base = fs::temp_directory_path() / "segsim_acceptance";
  fs::remove_all(base);
  const auto config = RunConfig::load(kToy / "run.toml");
  std::vector<std::string> reports;
  for (const char* name : {"a", "b"}) {
    PipelineOptions opts;
    opts.run_dir = base / name;
    opts.mock = true;
    Pipeline(config, opts).run_all();
    reports.push_back(slurp(base / name / "evaluate" / "report.json"));
  }
  o.require(!reports[0].empty(), "no report written");
  o.require(reports[0] == reports[1], "report JSON differs between runs");
  if (o.pass) o.detail = std::to_string(reports[0].size()) + " bytes, sha256 " + sha256_hex(reports[0]).substr(0, 16);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric oracle suite", 10, metric_oracles},
      {2, "geometry suite", 10, geometry},
      {3, "self-comparison fixed point", 5, self_comparison},
      {4, "compression sensitivity", 60, compression_sensitivity},
      {5, "transcribed-table formatting", 0, paper_fixture},
      {6, "aggregation rule", 0, aggregation_rule},
      {7, "pipeline determinism", 0, pipeline_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      out.detail += " [over the " + fmt("%.0f", c.budget_s) + " s budget]";
      out.pass = false;
    }
    std::printf("CRITERION %d %s: %s (%.2f s) %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL", secs,
                out.detail.c_str());
    failures += !out.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
