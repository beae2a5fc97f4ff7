#include "segsim/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "segsim/csv.hpp"
#include "segsim/error.hpp"

namespace segsim {

double cross_model_average(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyList, "cross-model average of an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

namespace {

using OptField = std::optional<double> RunScalars::*;

struct FieldDef {
  const char* name;
  OptField member;
};

// Order here is the column order of every table and of the JSON rows.
const std::vector<FieldDef>& scalar_fields() {
  static const std::vector<FieldDef> defs{
      {"mae", &RunScalars::mae},
      {"accuracy", &RunScalars::accuracy},
      {"weighted_precision", &RunScalars::weighted_precision},
      {"weighted_recall", &RunScalars::weighted_recall},
      {"weighted_f1", &RunScalars::weighted_f1},
      {"kld", &RunScalars::kld},
      {"sd", &RunScalars::sd},
      {"cv", &RunScalars::cv},
      {"aggregate_nemd", &RunScalars::aggregate_nemd},
      {"procrustes_distance", &RunScalars::procrustes_distance},
      {"human_v", &RunScalars::human_v},
      {"sim_v", &RunScalars::sim_v},
      {"benchmark_gap", &RunScalars::benchmark_gap},
  };
  return defs;
}

OptField field_member(const std::string& name) {
  for (const auto& f : scalar_fields()) {
    if (name == f.name) return f.member;
  }
  return nullptr;
}

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

void finalize_report(FidelityReport& report) {
  std::set<std::string> benchmarked;
  for (const auto& h : report.human_benchmark) benchmarked.insert(h.configuration);
  for (const auto& run : report.runs) {
    if (run.benchmark_gap && !benchmarked.contains(run.configuration)) {
      throw Error(ErrorCode::InvalidConfig,
                  "run " + run.configuration + "/" + run.model + " reports a gap without a human benchmark row");
    }
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunScalars*>> by_config;
  for (const auto& run : report.runs) {
    auto& bucket = by_config[run.configuration];
    if (bucket.empty()) order.push_back(run.configuration);
    bucket.push_back(&run);
  }

  report.cross_model.clear();
  for (const auto& name : order) {
    RunScalars row;
    row.configuration = name;
    row.model = std::string(kCrossModelRow);
    row.row_type = std::string(kCrossModelRow);
    for (const auto& f : scalar_fields()) {
      std::vector<double> values;
      bool complete = true;
      for (const auto* run : by_config[name]) {
        if (!(run->*f.member)) {
          complete = false;
          break;
        }
        values.push_back(*(run->*f.member));
      }
      if (complete) row.*f.member = cross_model_average(values);
    }
    for (const auto* run : by_config[name]) row.excluded_pairs += run->excluded_pairs;
    report.cross_model.push_back(std::move(row));
  }
}

// ---------------------------------------------------------------------------
// Computation

BetweenGroupBlock between_group_block(const SiliconSample& sample, const SubgroupMap& subgroups,
                                      const std::vector<OutcomeItem>& items) {
  if (items.empty()) throw Error(ErrorCode::EmptyList, "no outcome items selected");
  std::set<std::string> labels;
  for (const auto& [id, label] : subgroups) labels.insert(label);

  BetweenGroupBlock block;
  for (OutcomeItem item : items) {
    std::map<std::string, std::vector<LikertValue>, std::less<>> responses;
    for (const auto& label : labels) responses[label];
    for (const auto& [id, label] : subgroups) {
      if (auto v = sample.value(id, item)) responses[label].push_back(*v);
    }
    std::map<std::string, Distribution, std::less<>> dists;
    for (const auto& [label, values] : responses) {
      if (values.empty()) {
        throw Error(ErrorCode::EmptySelection,
                    "subgroup '" + label + "' has no responses for " + std::string(item_id(item)));
      }
      dists.emplace(label, frequency_distribution(values));
    }
    try {
      block.item_matrices.push_back(pairwise_matrix(dists));
    } catch (const Error& e) {
      throw e.with_context(std::string(item_id(item)));
    }
    block.item_medians.push_back(upper_triangle_median(block.item_matrices.back()));
  }
  block.aggregate_nemd = aggregate_nemd(block.item_matrices);
  block.structure = mean_matrix(block.item_matrices);
  block.embedding = classical_mds(block.structure);
  return block;
}

namespace {

std::optional<ProcrustesResult> align_to(const Embedding& reference, const Embedding& target) {
  if (reference.degenerate) return std::nullopt;
  try {
    return procrustes(reference, target);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ZeroSpreadReference) return std::nullopt;
    throw;
  }
}

struct HumanBase {
  VarianceBlock variance;
  BetweenGroupBlock between;
  SiliconSample as_sample;
};

RunDetail compute_run(const SurveyDataset& human, const HumanBase& base, const SiliconSample& sample,
                      const SegmentationConfiguration& config, const SubgroupMap& segments,
                      const CompileOptions& options) {
  RunDetail d;
  d.configuration = sample.configuration;
  d.model = sample.model;
  d.distributional =
      distributional_block(human, sample, options.items, options.kld_epsilon, options.kld_direction);
  d.excluded_pairs = d.distributional.excluded_pairs;
  d.variance = subgroup_sd_cv(sample, options.items, segments);
  d.between_group = between_group_block(sample, segments, options.items);
  d.between_group.procrustes = align_to(base.between.embedding, d.between_group.embedding);
  d.association = predictive_block(human, sample, config, options.items);
  return d;
}

RunScalars scalars_of(const RunDetail& d) {
  RunScalars r;
  r.configuration = d.configuration;
  r.model = d.model;
  const auto& s = d.distributional.summary;
  r.mae = s.mae;
  r.accuracy = s.accuracy;
  r.weighted_precision = s.weighted_precision;
  r.weighted_recall = s.weighted_recall;
  r.weighted_f1 = s.weighted_f1;
  r.kld = s.kld;
  r.sd = d.variance.mean_sd;
  r.cv = d.variance.mean_cv;
  r.aggregate_nemd = d.between_group.aggregate_nemd;
  if (d.between_group.procrustes) r.procrustes_distance = d.between_group.procrustes->distance;
  r.human_v = d.association.human_aggregate;
  r.sim_v = d.association.sim_aggregate;
  r.benchmark_gap = d.association.benchmark_gap;
  r.excluded_pairs = d.excluded_pairs;
  return r;
}

}  // namespace

FidelityReport compile_report(const SurveyDataset& human, const std::vector<SiliconSample>& samples,
                              const std::vector<SegmentationConfiguration>& configs, const SubgroupMap& segments,
                              const CompileOptions& options) {
  FidelityReport report;
  report.items = options.items;

  std::map<std::string, const SegmentationConfiguration*> by_name;
  for (const auto& c : configs) by_name[c.name()] = &c;
  for (const auto& s : samples) {
    if (!by_name.contains(s.configuration)) {
      throw Error(ErrorCode::UnknownConfiguration, "sample refers to unknown configuration '" + s.configuration + "'");
    }
  }

  // The human side does not depend on the configuration except through the
  // association block.
  HumanBase base;
  try {
    base.as_sample = SiliconSample::from_dataset(human, std::string(kHumanRow), "");
    base.variance = subgroup_sd_cv(human, options.items, segments);
    base.between = between_group_block(base.as_sample, segments, options.items);
  } catch (const Error& e) {
    throw e.with_context("human benchmark");
  }

  for (const auto& c : configs) {
    HumanDetail h;
    h.configuration = c.name();
    h.variance = base.variance;
    h.between_group = base.between;
    try {
      h.association = predictive_block(human, base.as_sample, c, options.items);
    } catch (const Error& e) {
      throw e.with_context("human benchmark, configuration=" + c.name());
    }
    RunScalars row;
    row.configuration = c.name();
    row.model = std::string(kHumanRow);
    row.row_type = std::string(kHumanRow);
    row.sd = h.variance.mean_sd;
    row.cv = h.variance.mean_cv;
    row.aggregate_nemd = h.between_group.aggregate_nemd;
    row.human_v = h.association.human_aggregate;
    report.human_benchmark.push_back(std::move(row));
    report.human_details.push_back(std::move(h));
  }

  auto run_one = [&](const SiliconSample& s) {
    try {
      return compute_run(human, base, s, *by_name.at(s.configuration), segments, options);
    } catch (const Error& e) {
      throw e.with_context("configuration=" + s.configuration + ", model=" + s.model);
    }
  };

  if (options.parallel && samples.size() > 1) {
    std::vector<std::future<RunDetail>> futures;
    futures.reserve(samples.size());
    for (const auto& s : samples) futures.push_back(std::async(std::launch::async, run_one, std::cref(s)));
    // Collect every future before rethrowing so no task outlives the inputs.
    std::exception_ptr first_error;
    for (auto& f : futures) {
      try {
        report.details.push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (const auto& s : samples) report.details.push_back(run_one(s));
  }

  for (const auto& d : report.details) report.runs.push_back(scalars_of(d));
  finalize_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const Json& rows, Eigen::Index cols_hint = -1) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index cols = n > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : std::max<Eigen::Index>(cols_hint, 0);
  Eigen::MatrixXd m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::LengthMismatch, "ragged matrix in report");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

OutcomeItem item_from(const Json& j) {
  const auto text = j.get<std::string>();
  auto item = parse_item(text);
  if (!item) throw Error(ErrorCode::MissingItem, "unknown outcome item '" + text + "' in report");
  return *item;
}

Json scalars_json(const RunScalars& r) {
  Json j;
  j["configuration"] = r.configuration;
  j["model"] = r.model;
  j["row_type"] = r.row_type;
  for (const auto& f : scalar_fields()) j[f.name] = opt_json(r.*f.member);
  j["excluded_pairs"] = r.excluded_pairs;
  return j;
}

RunScalars scalars_from(const Json& j) {
  RunScalars r;
  r.configuration = j.at("configuration").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.row_type = j.at("row_type").get<std::string>();
  for (const auto& f : scalar_fields()) r.*f.member = opt_from(j, f.name);
  r.excluded_pairs = j.at("excluded_pairs").get<std::size_t>();
  return r;
}

Json embedding_json(const Embedding& e) {
  return Json{{"labels", e.labels},
              {"coords", matrix_json(e.coords)},
              {"eigenvalues", {e.eigenvalues(0), e.eigenvalues(1)}},
              {"clamped", e.clamped},
              {"negative_eigenvalues", e.negative_eigenvalues},
              {"degenerate", e.degenerate}};
}

Embedding embedding_from(const Json& j) {
  Embedding e;
  e.labels = j.at("labels").get<std::vector<std::string>>();
  e.coords = matrix_from(j.at("coords"), 2);
  e.eigenvalues = Eigen::Vector2d(j.at("eigenvalues").at(0).get<double>(), j.at("eigenvalues").at(1).get<double>());
  e.clamped = j.at("clamped").get<int>();
  e.negative_eigenvalues = j.at("negative_eigenvalues").get<int>();
  e.degenerate = j.at("degenerate").get<bool>();
  return e;
}

Json procrustes_json(const std::optional<ProcrustesResult>& p) {
  if (!p) return nullptr;
  return Json{{"distance", p->distance},
              {"scale", p->scale},
              {"rotation", matrix_json(p->rotation)},
              {"translation", {p->translation(0), p->translation(1)}},
              {"aligned_coords", matrix_json(p->aligned_coords)}};
}

std::optional<ProcrustesResult> procrustes_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  ProcrustesResult p;
  p.distance = j.at("distance").get<double>();
  p.scale = j.at("scale").get<double>();
  p.rotation = matrix_from(j.at("rotation"));
  p.translation = Eigen::RowVector2d(j.at("translation").at(0).get<double>(), j.at("translation").at(1).get<double>());
  p.aligned_coords = matrix_from(j.at("aligned_coords"), 2);
  return p;
}

Json between_json(const BetweenGroupBlock& b, const std::vector<OutcomeItem>& items) {
  Json per_item = Json::array();
  for (std::size_t i = 0; i < b.item_matrices.size(); ++i) {
    per_item.push_back(Json{{"item", item_id(items.at(i))},
                            {"median", b.item_medians.at(i)},
                            {"labels", b.item_matrices[i].labels},
                            {"nemd", matrix_json(b.item_matrices[i].d)}});
  }
  return Json{{"items", std::move(per_item)},
              {"aggregate_nemd", b.aggregate_nemd},
              {"structure", Json{{"labels", b.structure.labels}, {"nemd", matrix_json(b.structure.d)}}},
              {"embedding", embedding_json(b.embedding)},
              {"procrustes", procrustes_json(b.procrustes)}};
}

BetweenGroupBlock between_from(const Json& j) {
  BetweenGroupBlock b;
  for (const auto& it : j.at("items")) {
    b.item_matrices.push_back(DistanceMatrix{it.at("labels").get<std::vector<std::string>>(), matrix_from(it.at("nemd"))});
    b.item_medians.push_back(it.at("median").get<double>());
  }
  b.aggregate_nemd = j.at("aggregate_nemd").get<double>();
  b.structure = DistanceMatrix{j.at("structure").at("labels").get<std::vector<std::string>>(),
                               matrix_from(j.at("structure").at("nemd"))};
  b.embedding = embedding_from(j.at("embedding"));
  b.procrustes = procrustes_from(j.at("procrustes"));
  return b;
}

Json classification_fields(Json j, const ClassificationScores& c) {
  j["accuracy"] = c.accuracy;
  j["weighted_precision"] = c.weighted_precision;
  j["weighted_recall"] = c.weighted_recall;
  j["weighted_f1"] = c.weighted_f1;
  return j;
}

Json distributional_json(const DistributionalBlock& b) {
  Json items = Json::array();
  for (const auto& it : b.items) {
    Json j{{"item", item_id(it.item)}, {"mae", it.mae}};
    j = classification_fields(std::move(j), it.classification);
    j["kld"] = it.kld;
    j["pairs"] = it.pairs;
    j["excluded"] = it.excluded;
    items.push_back(std::move(j));
  }
  const auto& s = b.summary;
  return Json{{"items", std::move(items)},
              {"summary",
               Json{{"mae", s.mae},
                    {"accuracy", s.accuracy},
                    {"weighted_precision", s.weighted_precision},
                    {"weighted_recall", s.weighted_recall},
                    {"weighted_f1", s.weighted_f1},
                    {"kld", s.kld}}},
              {"excluded_pairs", b.excluded_pairs}};
}

DistributionalBlock distributional_from(const Json& j) {
  DistributionalBlock b;
  for (const auto& it : j.at("items")) {
    ItemDistributional d;
    d.item = item_from(it.at("item"));
    d.mae = it.at("mae").get<double>();
    d.classification.accuracy = it.at("accuracy").get<double>();
    d.classification.weighted_precision = it.at("weighted_precision").get<double>();
    d.classification.weighted_recall = it.at("weighted_recall").get<double>();
    d.classification.weighted_f1 = it.at("weighted_f1").get<double>();
    d.kld = it.at("kld").get<double>();
    d.pairs = it.at("pairs").get<std::size_t>();
    d.classification.n = d.pairs;
    d.excluded = it.at("excluded").get<std::size_t>();
    b.items.push_back(d);
  }
  const auto& s = j.at("summary");
  b.summary.mae = s.at("mae").get<double>();
  b.summary.accuracy = s.at("accuracy").get<double>();
  b.summary.weighted_precision = s.at("weighted_precision").get<double>();
  b.summary.weighted_recall = s.at("weighted_recall").get<double>();
  b.summary.weighted_f1 = s.at("weighted_f1").get<double>();
  b.summary.kld = s.at("kld").get<double>();
  b.excluded_pairs = j.at("excluded_pairs").get<std::size_t>();
  return b;
}

Json variance_json(const VarianceBlock& b) {
  Json cells = Json::array();
  for (const auto& c : b.cells) {
    cells.push_back(Json{{"subgroup", c.subgroup},
                         {"item", item_id(c.item)},
                         {"n", c.n},
                         {"mean", c.mean},
                         {"sd", c.sd},
                         {"cv", c.cv},
                         {"degenerate", c.degenerate}});
  }
  return Json{{"cells", std::move(cells)},
              {"mean_sd", opt_json(b.mean_sd)},
              {"mean_cv", opt_json(b.mean_cv)},
              {"degenerate_cells", b.degenerate_cells}};
}

VarianceBlock variance_from(const Json& j) {
  VarianceBlock b;
  for (const auto& c : j.at("cells")) {
    VarianceCell cell;
    cell.subgroup = c.at("subgroup").get<std::string>();
    cell.item = item_from(c.at("item"));
    cell.n = c.at("n").get<std::size_t>();
    cell.mean = c.at("mean").get<double>();
    cell.sd = c.at("sd").get<double>();
    cell.cv = c.at("cv").get<double>();
    cell.degenerate = c.at("degenerate").get<bool>();
    b.cells.push_back(std::move(cell));
  }
  b.mean_sd = opt_from(j, "mean_sd");
  b.mean_cv = opt_from(j, "mean_cv");
  b.degenerate_cells = j.at("degenerate_cells").get<std::size_t>();
  return b;
}

Json association_json(const AssociationBlock& b) {
  Json pairs = Json::array();
  for (const auto& p : b.pairs) {
    pairs.push_back(Json{{"identifier", p.identifier},
                         {"item", item_id(p.item)},
                         {"human_v", opt_json(p.human_v)},
                         {"sim_v", opt_json(p.sim_v)},
                         {"excluded", p.excluded}});
  }
  return Json{{"pairs", std::move(pairs)},
              {"human_aggregate", opt_json(b.human_aggregate)},
              {"sim_aggregate", opt_json(b.sim_aggregate)},
              {"benchmark_gap", opt_json(b.benchmark_gap)},
              {"excluded_pairs", b.excluded_pairs}};
}

AssociationBlock association_from(const Json& j) {
  AssociationBlock b;
  for (const auto& p : j.at("pairs")) {
    b.pairs.push_back(AssociationPair{p.at("identifier").get<std::string>(), item_from(p.at("item")),
                                      opt_from(p, "human_v"), opt_from(p, "sim_v"), p.at("excluded").get<bool>()});
  }
  b.human_aggregate = opt_from(j, "human_aggregate");
  b.sim_aggregate = opt_from(j, "sim_aggregate");
  b.benchmark_gap = opt_from(j, "benchmark_gap");
  b.excluded_pairs = j.at("excluded_pairs").get<std::size_t>();
  return b;
}

Json rows_json(const std::vector<RunScalars>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) out.push_back(scalars_json(r));
  return out;
}

std::vector<RunScalars> rows_from(const Json& j) {
  std::vector<RunScalars> out;
  for (const auto& r : j) out.push_back(scalars_from(r));
  return out;
}

}  // namespace

Json report_to_json(const FidelityReport& report) {
  Json items = Json::array();
  for (OutcomeItem item : report.items) items.push_back(item_id(item));

  Json details = Json::array();
  for (const auto& d : report.details) {
    details.push_back(Json{{"configuration", d.configuration},
                           {"model", d.model},
                           {"excluded_pairs", d.excluded_pairs},
                           {"distributional", distributional_json(d.distributional)},
                           {"variance", variance_json(d.variance)},
                           {"between_group", between_json(d.between_group, report.items)},
                           {"association", association_json(d.association)}});
  }
  Json human = Json::array();
  for (const auto& h : report.human_details) {
    human.push_back(Json{{"configuration", h.configuration},
                         {"variance", variance_json(h.variance)},
                         {"between_group", between_json(h.between_group, report.items)},
                         {"association", association_json(h.association)}});
  }

  Json doc;
  doc["schema"] = "segsim.fidelity_report";
  doc["schema_version"] = report.schema_version;
  doc["items"] = std::move(items);
  doc["runs"] = rows_json(report.runs);
  doc["human_benchmark"] = rows_json(report.human_benchmark);
  doc["cross_model"] = rows_json(report.cross_model);
  doc["details"] = std::move(details);
  doc["human_details"] = std::move(human);
  return doc;
}

FidelityReport report_from_json(const Json& doc) {
  try {
    if (doc.value("schema", "") != "segsim.fidelity_report") {
      throw Error(ErrorCode::InvalidConfig, "document is not a fidelity report");
    }
    FidelityReport r;
    r.schema_version = doc.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw Error(ErrorCode::InvalidConfig, "unsupported report schema version " + std::to_string(r.schema_version));
    }
    r.items.clear();
    for (const auto& it : doc.at("items")) r.items.push_back(item_from(it));
    r.runs = rows_from(doc.at("runs"));
    r.human_benchmark = rows_from(doc.at("human_benchmark"));
    r.cross_model = rows_from(doc.at("cross_model"));
    for (const auto& d : doc.at("details")) {
      RunDetail detail;
      detail.configuration = d.at("configuration").get<std::string>();
      detail.model = d.at("model").get<std::string>();
      detail.excluded_pairs = d.at("excluded_pairs").get<std::size_t>();
      detail.distributional = distributional_from(d.at("distributional"));
      detail.variance = variance_from(d.at("variance"));
      detail.between_group = between_from(d.at("between_group"));
      detail.association = association_from(d.at("association"));
      r.details.push_back(std::move(detail));
    }
    for (const auto& h : doc.at("human_details")) {
      HumanDetail detail;
      detail.configuration = h.at("configuration").get<std::string>();
      detail.variance = variance_from(h.at("variance"));
      detail.between_group = between_from(h.at("between_group"));
      detail.association = association_from(h.at("association"));
      r.human_details.push_back(std::move(detail));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::vector<std::string> with_keys(std::initializer_list<const char*> scalars) {
  std::vector<std::string> out{"configuration", "model", "row_type"};
  for (const char* s : scalars) out.emplace_back(s);
  return out;
}

struct TableSpec {
  const char* name;
  const std::vector<std::string>* fields;
  bool include_human;
};

// Rows grouped by configuration in first-appearance order: model rows, then
// the human benchmark (where the table has one), then the cross-model mean.
std::vector<const RunScalars*> table_rows(const FidelityReport& report, bool include_human) {
  std::vector<std::string> order;
  for (const auto* group : {&report.runs, &report.human_benchmark}) {
    for (const auto& r : *group) {
      if (std::find(order.begin(), order.end(), r.configuration) == order.end()) order.push_back(r.configuration);
    }
  }
  std::vector<const RunScalars*> rows;
  for (const auto& name : order) {
    for (const auto& r : report.runs) {
      if (r.configuration == name) rows.push_back(&r);
    }
    if (include_human) {
      for (const auto& r : report.human_benchmark) {
        if (r.configuration == name) rows.push_back(&r);
      }
    }
    for (const auto& r : report.cross_model) {
      if (r.configuration == name) rows.push_back(&r);
    }
  }
  return rows;
}

Json cell_json(const RunScalars& r, const std::string& field) {
  if (field == "configuration") return r.configuration;
  if (field == "model") return r.model;
  if (field == "row_type") return r.row_type;
  if (field == "excluded_pairs") return r.excluded_pairs;
  return opt_json(r.*field_member(field));
}

std::string cell_text(const RunScalars& r, const std::string& field, bool rounded) {
  const Json v = cell_json(r, field);
  if (v.is_null()) return rounded ? "NA" : "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float() && rounded) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
    return buf;
  }
  return v.dump();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

}  // namespace

const std::vector<std::string>& distributional_fields() {
  static const auto f =
      with_keys({"mae", "accuracy", "weighted_precision", "weighted_recall", "weighted_f1", "kld", "excluded_pairs"});
  return f;
}

const std::vector<std::string>& structural_fields() {
  static const auto f = with_keys({"sd", "cv", "aggregate_nemd", "procrustes_distance"});
  return f;
}

const std::vector<std::string>& predictive_fields() {
  static const auto f = with_keys({"human_v", "sim_v", "benchmark_gap"});
  return f;
}

std::vector<std::filesystem::path> emit_tables(const FidelityReport& report, TableFormat format,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  const std::vector<TableSpec> specs{{"distributional", &distributional_fields(), false},
                                     {"structural", &structural_fields(), true},
                                     {"predictive", &predictive_fields(), true}};
  std::vector<std::filesystem::path> written;
  for (const auto& spec : specs) {
    const auto rows = table_rows(report, spec.include_human);
    const auto& fields = *spec.fields;
    std::string text;
    std::filesystem::path path;
    switch (format) {
      case TableFormat::Json: {
        Json arr = Json::array();
        for (const auto* r : rows) {
          Json obj;
          for (const auto& f : fields) obj[f] = cell_json(*r, f);
          arr.push_back(std::move(obj));
        }
        text = arr.dump(2) + "\n";
        path = out_dir / (std::string(spec.name) + ".json");
        break;
      }
      case TableFormat::Csv: {
        std::ostringstream os;
        csv::write_row(os, fields);
        for (const auto* r : rows) {
          std::vector<std::string> cells;
          for (const auto& f : fields) cells.push_back(cell_text(*r, f, false));
          csv::write_row(os, cells);
        }
        text = os.str();
        path = out_dir / (std::string(spec.name) + ".csv");
        break;
      }
      case TableFormat::Markdown: {
        std::ostringstream os;
        os << "| ";
        for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? " | " : "") << fields[i];
        os << " |\n|";
        for (std::size_t i = 0; i < fields.size(); ++i) os << (i < 3 ? " --- |" : " ---: |");
        os << "\n";
        for (const auto* r : rows) {
          os << "| ";
          for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? " | " : "") << cell_text(*r, fields[i], true);
          os << " |\n";
        }
        text = os.str();
        path = out_dir / (std::string(spec.name) + ".md");
        break;
      }
    }
    write_text(path, text);
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// MDS maps

std::string subgroup_color(const std::vector<std::string>& labels, const std::string& label) {
  static constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::set<std::string> sorted(labels.begin(), labels.end());
  std::size_t idx = 0;
  for (const auto& l : sorted) {
    if (l == label) return kPalette[idx % std::size(kPalette)];
    ++idx;
  }
  throw Error(ErrorCode::LabelMismatch, "label '" + label + "' is not in the label set");
}

Embedding aligned_embedding(const Embedding& simulated, const ProcrustesResult& alignment) {
  if (alignment.aligned_coords.rows() != simulated.coords.rows()) {
    throw Error(ErrorCode::LengthMismatch, "alignment does not match the simulated embedding");
  }
  Embedding out = simulated;
  out.coords = alignment.aligned_coords;
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  return s == "-0.00" ? "0.00" : s;
}

}  // namespace

std::string render_mds_map(const Embedding& empirical, const Embedding& simulated, const std::string& title) {
  if (empirical.labels != simulated.labels) {
    throw Error(ErrorCode::LabelMismatch, "empirical and simulated maps have different subgroups");
  }
  constexpr double kSize = 520.0, kMargin = 64.0, kRadius = 6.0;
  const double plot = kSize - 2 * kMargin;

  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  bool first = true;
  for (const auto* e : {&empirical, &simulated}) {
    for (Eigen::Index i = 0; i < e->coords.rows(); ++i) {
      const double x = e->coords(i, 0), y = e->coords(i, 1);
      if (first) {
        lo_x = hi_x = x;
        lo_y = hi_y = y;
        first = false;
      }
      lo_x = std::min(lo_x, x);
      hi_x = std::max(hi_x, x);
      lo_y = std::min(lo_y, y);
      hi_y = std::max(hi_y, y);
    }
  }
  // Equal aspect: one scale for both axes, centred on the data.
  double span = std::max(hi_x - lo_x, hi_y - lo_y);
  if (!(span > 0.0)) span = 1.0;
  span *= 1.1;
  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  auto px = [&](double x) { return kMargin + (x - cx + span / 2) / span * plot; };
  auto py = [&](double y) { return kMargin + (cy + span / 2 - y) / span * plot; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" viewBox=\"0 0 " << kSize << " " << kSize << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << kSize << "\" height=\"" << kSize << "\" fill=\"#ffffff\"/>\n";
  os << "  <rect class=\"frame\" x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << plot << "\" height=\""
     << plot << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  if (!title.empty()) {
    os << "  <text class=\"title\" x=\"" << kSize / 2 << "\" y=\"" << kMargin / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  }
  os << "  <text class=\"axis-label\" x=\"" << kSize / 2 << "\" y=\"" << kSize - kMargin / 3
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">MDS Dimension 1</text>\n";
  os << "  <text class=\"axis-label\" x=\"" << kMargin / 3 << "\" y=\"" << kSize / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 " << kMargin / 3
     << " " << kSize / 2 << ")\">MDS Dimension 2</text>\n";

  const auto n = empirical.coords.rows();
  os << "  <g class=\"connectors\">\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    os << "    <line class=\"connector\" x1=\"" << num(px(empirical.coords(i, 0))) << "\" y1=\""
       << num(py(empirical.coords(i, 1))) << "\" x2=\"" << num(px(simulated.coords(i, 0))) << "\" y2=\""
       << num(py(simulated.coords(i, 1))) << "\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
  }
  os << "  </g>\n  <g class=\"empirical\">\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& label = empirical.labels[static_cast<std::size_t>(i)];
    const auto color = subgroup_color(empirical.labels, label);
    os << "    <circle class=\"empirical\" data-label=\"" << xml_escape(label) << "\" cx=\""
       << num(px(empirical.coords(i, 0))) << "\" cy=\"" << num(py(empirical.coords(i, 1))) << "\" r=\"" << kRadius
       << "\" fill=\"" << color << "\" stroke=\"" << color << "\"/>\n";
  }
  os << "  </g>\n  <g class=\"simulated\">\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& label = simulated.labels[static_cast<std::size_t>(i)];
    const auto color = subgroup_color(simulated.labels, label);
    os << "    <circle class=\"simulated\" data-label=\"" << xml_escape(label) << "\" cx=\""
       << num(px(simulated.coords(i, 0))) << "\" cy=\"" << num(py(simulated.coords(i, 1))) << "\" r=\"" << kRadius
       << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
  }
  os << "  </g>\n  <g class=\"labels\">\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    os << "    <text x=\"" << num(px(empirical.coords(i, 0)) + kRadius + 3) << "\" y=\""
       << num(py(empirical.coords(i, 1)) + 4) << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << xml_escape(empirical.labels[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  os << "  </g>\n";
  os << "  <g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "    <circle cx=\"" << kMargin + 10 << "\" cy=\"" << kSize - kMargin + 22 << "\" r=\"5\" fill=\"#333333\"/>\n"
     << "    <text x=\"" << kMargin + 20 << "\" y=\"" << kSize - kMargin + 26 << "\">empirical</text>\n"
     << "    <circle cx=\"" << kMargin + 110 << "\" cy=\"" << kSize - kMargin + 22
     << "\" r=\"5\" fill=\"none\" stroke=\"#333333\" stroke-width=\"2\"/>\n"
     << "    <text x=\"" << kMargin + 120 << "\" y=\"" << kSize - kMargin + 26 << "\">simulated</text>\n"
     << "  </g>\n";
  os << "</svg>\n";
  return os.str();
}

void emit_mds_map(const Embedding& empirical, const Embedding& simulated, const std::filesystem::path& out,
                  const std::string& title) {
  if (out.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(out.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.parent_path().string());
  }
  write_text(out, render_mds_map(empirical, simulated, title));
}

}  // namespace segsim
