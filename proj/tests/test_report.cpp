#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "segsim/csv.hpp"
#include "segsim/error.hpp"
#include "segsim/report.hpp"
#include "support/oracles.hpp"

using namespace segsim;

namespace {

const std::filesystem::path kToy = SEGSIM_TOY_DIR;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoFailure;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Toy {
  SurveyDataset human;
  SubgroupMap segments;
  std::vector<SegmentationConfiguration> configs;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy t{load_dataset(kToy / "human.csv", kToy / "codebook.json"), {}, {}};
    const auto table = DecisionTable::load(kToy / "segmentation_table.json");
    for (const auto& r : t.human.records()) t.segments[r.respondent_id] = assign_segment(r, table);
    const auto& cb = t.human.codebook();
    t.configs.push_back(
        build_configuration(ConfigurationKind::Demo, cb, load_identifier_set(kToy / "identifiers/demo.txt")));
    t.configs.push_back(
        build_configuration(ConfigurationKind::Item4, cb, load_identifier_set(kToy / "identifiers/item4.txt")));
    return t;
  }();
  return t;
}

// A silicon sample that copies the human answers, optionally perturbed.
SiliconSample copy_of_human(const std::string& model, const std::string& configuration, oracle::Rng* noise = nullptr) {
  auto s = SiliconSample::from_dataset(toy().human, model, configuration);
  if (noise) {
    for (auto& [key, cell] : s.cells) {
      if (noise->uniform() < 0.3) cell.value = LikertValue(noise->integer(1, 7));
    }
  }
  return s;
}

RunScalars row(std::string cfg, std::string model) {
  RunScalars r;
  r.configuration = std::move(cfg);
  r.model = std::move(model);
  return r;
}

}  // namespace

TEST_CASE("self-comparison is a fixed point of every metric") {
  const auto& t = toy();
  const std::vector<SiliconSample> samples{copy_of_human("self", "Demo"), copy_of_human("self", "Item-4")};
  const auto report = compile_report(t.human, samples, t.configs, t.segments);
  REQUIRE(report.runs.size() == 2);
  REQUIRE(report.human_benchmark.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& r = report.runs[i];
    const auto& h = report.human_benchmark[i];
    CHECK(*r.mae == 0.0);
    CHECK(*r.accuracy == 1.0);
    CHECK(*r.weighted_f1 == doctest::Approx(1.0));
    CHECK(*r.kld == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(*r.procrustes_distance <= 1e-12);
    CHECK(*r.benchmark_gap == 0.0);
    CHECK(*r.sd == doctest::Approx(*h.sd).epsilon(1e-15));
    CHECK(*r.cv == doctest::Approx(*h.cv).epsilon(1e-15));
    CHECK(*r.aggregate_nemd == doctest::Approx(*h.aggregate_nemd).epsilon(1e-15));
    CHECK(*r.human_v == doctest::Approx(*h.human_v).epsilon(1e-15));
    CHECK(r.excluded_pairs == 0);
  }
  CHECK(report.cross_model.size() == 2);
}

TEST_CASE("noisy runs: parallel and sequential compilation agree") {
  const auto& t = toy();
  oracle::Rng rng(4);
  std::vector<SiliconSample> samples;
  for (const char* model : {"llama", "mixtral"}) {
    for (const auto& c : t.configs) samples.push_back(copy_of_human(model, c.name(), &rng));
  }
  CompileOptions o;
  const auto par = compile_report(t.human, samples, t.configs, t.segments, o);
  o.parallel = false;
  const auto seq = compile_report(t.human, samples, t.configs, t.segments, o);
  CHECK(report_to_json(par) == report_to_json(seq));
  for (const auto& r : par.runs) {
    CHECK(*r.mae >= 0.0);
    CHECK(*r.accuracy < 1.0);
    CHECK(*r.procrustes_distance >= 0.0);
  }
  // Cross-model rows are means over the two models.
  const auto& demo = par.cross_model[0];
  CHECK(demo.configuration == "Demo");
  CHECK(*demo.mae == doctest::Approx((*par.runs[0].mae + *par.runs[2].mae) / 2));
}

TEST_CASE("errors carry the configuration and model") {
  const auto& t = toy();
  auto bad = copy_of_human("llama", "Demo");
  for (auto& [key, cell] : bad.cells) {
    if (key.item == OutcomeItem::Q26) {
      cell.value.reset();
      cell.missing = MissingReason::Parse;
    }
  }
  try {
    compile_report(t.human, {bad}, t.configs, t.segments);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySelection);
    CHECK(std::string(e.what()).find("model=llama") != std::string::npos);
  }
  CHECK(code_of([&] { compile_report(t.human, {copy_of_human("m", "Nope")}, t.configs, t.segments); }) ==
        ErrorCode::UnknownConfiguration);
}

TEST_CASE("cross-model averaging") {
  CHECK(cross_model_average(std::vector<double>{2.72, 6.58}) == doctest::Approx(4.65));
  CHECK(code_of([] { cross_model_average(std::vector<double>{}); }) == ErrorCode::EmptyList);

  FidelityReport r;
  auto llama = row("Item-4", "llama");
  llama.benchmark_gap = 0.01;
  llama.mae = 2.72;
  auto mixtral = row("Item-4", "mixtral");
  mixtral.benchmark_gap = 0.05;
  mixtral.mae = 6.58;
  mixtral.kld = 0.3;  // llama has no KLD, so the mean is undefined
  mixtral.excluded_pairs = 4;
  r.runs = {llama, mixtral};
  CHECK(code_of([&] { finalize_report(r); }) == ErrorCode::InvalidConfig);

  auto human = row("Item-4", "human");
  human.row_type = "human";
  human.human_v = 0.1;
  r.human_benchmark = {human};
  finalize_report(r);
  REQUIRE(r.cross_model.size() == 1);
  const auto& cm = r.cross_model[0];
  CHECK(cm.row_type == "cross-model");
  CHECK(*cm.benchmark_gap == doctest::Approx(0.03));
  CHECK(*cm.mae == doctest::Approx(4.65));
  CHECK_FALSE(cm.kld.has_value());
  CHECK(cm.excluded_pairs == 4);
}

TEST_CASE("property: cross-model mean lies between the extremes") {
  oracle::Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v;
    for (int i = rng.integer(1, 6); i > 0; --i) v.push_back(rng.uniform(-5, 5));
    const double m = cross_model_average(v);
    CHECK(m >= *std::min_element(v.begin(), v.end()) - 1e-12);
    CHECK(m <= *std::max_element(v.begin(), v.end()) + 1e-12);
  }
}

TEST_CASE("report JSON round trip is byte-stable") {
  const auto& t = toy();
  oracle::Rng rng(9);
  std::vector<SiliconSample> samples{copy_of_human("llama", "Demo", &rng), copy_of_human("llama", "Item-4", &rng)};
  const auto report = compile_report(t.human, samples, t.configs, t.segments);
  const Json j = report_to_json(report);
  CHECK(j.at("schema") == "segsim.fidelity_report");
  CHECK(j.at("schema_version") == kReportSchemaVersion);
  const std::string text = j.dump(2);
  const Json reparsed = Json::parse(text);
  CHECK(reparsed.dump(2) == text);
  const auto back = report_from_json(reparsed);
  CHECK(report_to_json(back).dump(2) == text);
  CHECK(back.runs == report.runs);
  CHECK(back.cross_model == report.cross_model);
  CHECK(back.human_benchmark == report.human_benchmark);

  Json wrong = j;
  wrong["schema_version"] = 99;
  CHECK(code_of([&] { report_from_json(wrong); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("tables: layout, headers and rounding") {
  const auto& t = toy();
  oracle::Rng rng(10);
  std::vector<SiliconSample> samples;
  for (const char* model : {"llama", "mixtral"}) {
    for (const auto& c : t.configs) samples.push_back(copy_of_human(model, c.name(), &rng));
  }
  const auto report = compile_report(t.human, samples, t.configs, t.segments);
  const auto dir = std::filesystem::temp_directory_path() / "segsim_test_report_tables";
  std::filesystem::remove_all(dir);

  const auto csv_paths = emit_tables(report, TableFormat::Csv, dir);
  REQUIRE(csv_paths.size() == 3);
  const std::vector<const std::vector<std::string>*> fields{&distributional_fields(), &structural_fields(),
                                                            &predictive_fields()};
  std::vector<std::vector<std::vector<std::string>>> csv_tables;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto table = csv::parse(slurp(csv_paths[i]));
    CHECK(table.header == *fields[i]);
    std::vector<std::vector<std::string>> rows{table.header};
    rows.insert(rows.end(), table.rows.begin(), table.rows.end());
    csv_tables.push_back(std::move(rows));
  }
  // Distributional: 2 models + cross-model per configuration. The other two
  // tables add the human row.
  CHECK(csv_tables[0].size() == 1 + 2 * 3);
  CHECK(csv_tables[1].size() == 1 + 2 * 4);
  std::vector<std::string> roles;
  for (std::size_t r = 1; r < csv_tables[1].size(); ++r) roles.push_back(csv_tables[1][r][1]);
  CHECK(roles == std::vector<std::string>{"llama", "mixtral", "human", "cross-model",
                                          "llama", "mixtral", "human", "cross-model"});
  // The human row has no Procrustes distance to itself in the table: empty in CSV.
  CHECK(csv_tables[1][3][6].empty());

  const auto json_paths = emit_tables(report, TableFormat::Json, dir);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto text = slurp(json_paths[i]);
    const Json arr = Json::parse(text);
    CHECK(arr.dump(2) + "\n" == text);
    REQUIRE(arr.size() + 1 == csv_tables[i].size());
    std::vector<std::string> keys;
    for (const auto& [k, v] : arr[0].items()) keys.push_back(k);
    CHECK(keys == *fields[i]);
    // CSV keeps the same full-precision value.
    const auto& mae_or_sd = (*fields[i])[3];
    if (arr[0][mae_or_sd].is_number()) CHECK(std::stod(csv_tables[i][1][3]) == arr[0][mae_or_sd].get<double>());
  }

  const auto md = slurp(emit_tables(report, TableFormat::Markdown, dir)[1]);
  CHECK(md.rfind("| configuration | model | row_type | sd |", 0) == 0);
  CHECK(md.find("NA") != std::string::npos);
  char expect[32];
  std::snprintf(expect, sizeof expect, "%.2f", *report.runs[0].sd);
  CHECK(md.find(std::string("| ") + expect + " |") != std::string::npos);
}

TEST_CASE("MDS overlay SVG") {
  Embedding emp, sim;
  emp.labels = sim.labels = {"Alarmed", "Cautious", "Concerned", "Disengaged", "Dismissive", "Doubtful"};
  emp.coords = Eigen::MatrixX2d(6, 2);
  sim.coords = Eigen::MatrixX2d(6, 2);
  for (int i = 0; i < 6; ++i) {
    emp.coords.row(i) << std::cos(i), std::sin(i);
    sim.coords.row(i) << 0.5 * std::cos(i) + 0.1, 0.5 * std::sin(i);
  }
  const auto svg = render_mds_map(emp, sim, "Demo / llama");
  CHECK(count(svg, "<circle class=\"empirical\"") == 6);
  CHECK(count(svg, "<circle class=\"simulated\"") == 6);
  CHECK(count(svg, "<line class=\"connector\"") == 6);
  CHECK(svg.find("MDS Dimension 1") != std::string::npos);
  CHECK(svg.find("MDS Dimension 2") != std::string::npos);
  CHECK(svg.find("Demo / llama") != std::string::npos);
  CHECK(render_mds_map(emp, sim, "Demo / llama") == svg);

  // Colour depends on the label set, not on input order.
  auto shuffled = emp.labels;
  std::reverse(shuffled.begin(), shuffled.end());
  for (const auto& l : emp.labels) CHECK(subgroup_color(emp.labels, l) == subgroup_color(shuffled, l));
  CHECK(subgroup_color(emp.labels, "Alarmed") == "#1f77b4");
  CHECK(svg.find("stroke=\"" + subgroup_color(emp.labels, "Doubtful") + "\"") != std::string::npos);
  CHECK(code_of([&] { subgroup_color(emp.labels, "Other"); }) == ErrorCode::LabelMismatch);

  auto other = sim;
  other.labels[0] = "X";
  CHECK(code_of([&] { render_mds_map(emp, other); }) == ErrorCode::LabelMismatch);
}
