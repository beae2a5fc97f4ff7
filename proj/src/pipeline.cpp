#include "segsim/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "segsim/csv.hpp"
#include "segsim/error.hpp"
#include "segsim/report.hpp"

namespace segsim {

namespace fs = std::filesystem;

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Segment: return "segment";
    case Stage::Prompts: return "prompts";
    case Stage::Simulate: return "simulate";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
  }
  return "?";
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

Json read_json(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseFailure, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Manifests

Json StageManifest::to_json() const {
  Json units_json = Json::object();
  for (const auto& [name, u] : units) {
    units_json[name] = Json{{"fingerprint", u.fingerprint}, {"inputs", u.inputs}, {"outputs", u.outputs}, {"meta", u.meta}};
  }
  return Json{{"format", "segsim.manifest"}, {"version", 1}, {"stage", stage}, {"units", std::move(units_json)}};
}

StageManifest StageManifest::from_json(const Json& doc) {
  try {
    StageManifest m;
    m.stage = doc.at("stage").get<std::string>();
    for (const auto& [name, u] : doc.at("units").items()) {
      UnitRecord r;
      r.fingerprint = u.at("fingerprint").get<std::string>();
      r.inputs = u.at("inputs").get<std::map<std::string, std::string>>();
      r.outputs = u.at("outputs").get<std::map<std::string, std::string>>();
      r.meta = u.value("meta", Json::object());
      m.units.emplace(name, std::move(r));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StaleInput, std::string("unreadable manifest: ") + e.what());
  }
}

std::optional<StageManifest> StageManifest::load(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    return from_json(read_json(path));
  } catch (const Error& e) {
    throw Error(ErrorCode::StaleInput, path.string() + " is corrupt: " + e.detail());
  }
}

void StageManifest::save(const fs::path& path) const { write_file(path, to_json().dump(2) + "\n"); }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view configuration, std::string_view model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : configuration) mix(static_cast<unsigned char>(c));
  mix(0);
  for (char c : model) mix(static_cast<unsigned char>(c));
  // splitmix64 finaliser
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

namespace {

fs::path manifest_path(const fs::path& run_dir, Stage stage) {
  return run_dir / stage_name(stage) / "manifest.json";
}

// Relative path and hash of an artifact produced by `upstream`, verified
// against that stage's manifest.
std::pair<std::string, std::string> verified_artifact(const fs::path& run_dir, Stage upstream, const std::string& rel) {
  const auto mpath = manifest_path(run_dir, upstream);
  auto m = StageManifest::load(mpath);
  if (!m) {
    throw Error(ErrorCode::MissingStage, "stage '" + std::string(stage_name(upstream)) +
                                             "' has not been run (no " + mpath.string() + ")");
  }
  for (const auto& [name, unit] : m->units) {
    auto it = unit.outputs.find(rel);
    if (it == unit.outputs.end()) continue;
    const auto path = run_dir / rel;
    if (!fs::exists(path)) {
      throw Error(ErrorCode::MissingStage, "artifact " + rel + " is listed by stage '" +
                                               std::string(stage_name(upstream)) + "' but missing");
    }
    const auto actual = sha256_file(path);
    if (actual != it->second) {
      throw Error(ErrorCode::StaleInput, "artifact " + rel + " no longer matches the hash recorded by stage '" +
                                             std::string(stage_name(upstream)) + "'; re-run that stage");
    }
    return {rel, actual};
  }
  throw Error(ErrorCode::MissingStage,
              "stage '" + std::string(stage_name(upstream)) + "' did not produce " + rel);
}

// Bookkeeping for one stage: reads the current manifest, checks upstream
// artifacts against the manifests that produced them and records units.
class StageBook {
 public:
  StageBook(fs::path run_dir, Stage stage) : run_dir_(std::move(run_dir)), stage_(stage) {
    auto existing = StageManifest::load(manifest_path(run_dir_, stage_));
    manifest_ = existing ? *existing : StageManifest{std::string(stage_name(stage_)), {}};
  }

  std::string key(const fs::path& path) const {
    const auto rel = path.lexically_normal().lexically_relative(run_dir_.lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return fs::absolute(path).lexically_normal().generic_string();
  }

  // Hash of an artifact produced by `upstream`, verified against its manifest.
  std::pair<std::string, std::string> upstream(Stage upstream, const std::string& rel) const {
    return verified_artifact(run_dir_, upstream, rel);
  }

  std::pair<std::string, std::string> external(const fs::path& path) const {
    if (!fs::exists(path)) throw Error(ErrorCode::IoFailure, "input file not found: " + path.string());
    return {key(path), sha256_file(path)};
  }

  bool up_to_date(const std::string& unit, const std::string& fingerprint,
                  const std::map<std::string, std::string>& inputs) const {
    auto it = manifest_.units.find(unit);
    if (it == manifest_.units.end()) return false;
    const auto& rec = it->second;
    if (rec.fingerprint != fingerprint || rec.inputs != inputs) return false;
    for (const auto& [rel, hash] : rec.outputs) {
      const auto path = run_dir_ / rel;
      if (!fs::exists(path) || sha256_file(path) != hash) return false;
    }
    return true;
  }

  const UnitRecord* unit(const std::string& name) const {
    auto it = manifest_.units.find(name);
    return it == manifest_.units.end() ? nullptr : &it->second;
  }

  const StageManifest& manifest() const { return manifest_; }

  void record(const std::string& unit, std::string fingerprint, std::map<std::string, std::string> inputs,
              const std::vector<fs::path>& outputs, Json meta = Json::object()) {
    UnitRecord rec;
    rec.fingerprint = std::move(fingerprint);
    rec.inputs = std::move(inputs);
    for (const auto& p : outputs) rec.outputs[key(p)] = sha256_file(p);
    rec.meta = std::move(meta);
    manifest_.units[unit] = std::move(rec);
    // Saved per unit so an aborted stage resumes from the last finished unit.
    manifest_.save(manifest_path(run_dir_, stage_));
  }

  fs::path dir() const { return run_dir_ / stage_name(stage_); }

 private:
  fs::path run_dir_;
  Stage stage_;
  StageManifest manifest_;
};

std::string fingerprint(const Json& j) { return sha256_hex(j.dump()); }

const std::string kDatasetArtifact = "ingest/dataset.json";
const std::string kSegmentsArtifact = "segment/segments.csv";
const std::string kConfigurationsArtifact = "segment/configurations.json";
const std::string kRankingArtifact = "segment/ranking.json";
const std::string kReportArtifact = "evaluate/report.json";

std::string prompts_artifact(const std::string& slug) { return "prompts/" + slug + ".jsonl"; }
std::string sample_artifact(const std::string& slug, const std::string& model) {
  return "simulate/" + slug + "__" + model + ".csv";
}
std::string attempts_artifact(const std::string& slug, const std::string& model) {
  return "simulate/" + slug + "__" + model + ".attempts.csv";
}

SubgroupMap load_segments(const fs::path& path) {
  const auto table = csv::read_file(path);
  if (table.header != std::vector<std::string>{"respondent_id", "segment"}) {
    throw Error(ErrorCode::MissingColumn, path.string() + " must have header respondent_id,segment");
  }
  SubgroupMap out;
  for (const auto& row : table.rows) {
    if (row.size() != 2) throw Error(ErrorCode::MissingValue, path.string() + ": malformed row");
    out[row[0]] = row[1];
  }
  return out;
}

std::vector<SegmentationConfiguration> load_configurations(const fs::path& path) {
  const auto doc = read_json(path);
  std::vector<SegmentationConfiguration> out;
  try {
    for (const auto& c : doc.at("configurations")) out.push_back(SegmentationConfiguration::from_json(c));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseFailure, path.string() + ": " + e.what());
  }
  return out;
}

std::vector<RenderedPrompt> load_prompts(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::vector<RenderedPrompt> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(prompt_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

Json template_json(const PromptTemplate& t) {
  Json q = Json::object();
  for (OutcomeItem item : kOutcomeItems) q[std::string(item_id(item))] = t.question(item);
  return Json{{"system_preamble", t.system_preamble},
              {"body", t.body},
              {"answer_instruction", t.answer_instruction},
              {"questions", std::move(q)}};
}

// Pooled mean and SD of a subgroup's human answers over every outcome item.
std::map<std::string, SubgroupTarget, std::less<>> human_targets(const SurveyDataset& human,
                                                                 const SubgroupMap& segments) {
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& [id, label] : segments) {
    const auto* rec = human.find(id);
    if (!rec) continue;
    for (OutcomeItem item : kOutcomeItems) {
      if (auto v = rec->outcome(item)) pooled[label].push_back(v->value());
    }
  }
  std::map<std::string, SubgroupTarget, std::less<>> out;
  for (const auto& [label, values] : pooled) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    out[label] = SubgroupTarget{mean, sd};
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(RunConfig config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  if (options_.seed) config_.seed = options_.seed;
  mock_ = options_.mock || config_.use_mock;
  run_dir_ = options_.run_dir.empty() ? config_.output_dir : options_.run_dir;
  if (run_dir_.empty()) throw Error(ErrorCode::InvalidConfig, "no run directory (set output_dir or --run-dir)");
  config_.validate(mock_);
  for (const auto& name : options_.only) {
    auto kind = parse_kind(name);
    if (!kind || std::find(config_.enabled.begin(), config_.enabled.end(), *kind) == config_.enabled.end()) {
      throw Error(ErrorCode::UnknownConfiguration, "--only names configuration '" + name + "' which is not enabled");
    }
  }
  for (const auto& name : options_.models) {
    const bool implicit_mock = mock_ && config_.models.empty() && name == "mock";
    if (!config_.find_model(name) && !implicit_mock) {
      throw Error(ErrorCode::InvalidConfig, "--model names unknown model '" + name + "'");
    }
  }
}

StageResult Pipeline::run(Stage stage) {
  StageResult r;
  switch (stage) {
    case Stage::Ingest: r = ingest(); break;
    case Stage::Segment: r = segment(); break;
    case Stage::Prompts: r = prompts(); break;
    case Stage::Simulate: r = simulate(); break;
    case Stage::Evaluate: r = evaluate(); break;
    case Stage::Report: r = report(); break;
  }
  r.stage = stage;
  if (options_.log) {
    auto& log = *options_.log;
    log << stage_name(stage) << ": ";
    if (r.no_op()) {
      log << "up to date (" << r.units_skipped << " unit" << (r.units_skipped == 1 ? "" : "s") << ")\n";
    } else {
      log << r.units_run << " unit" << (r.units_run == 1 ? "" : "s") << " run";
      if (r.units_skipped) log << ", " << r.units_skipped << " up to date";
      log << "\n";
    }
    for (const auto& line : r.summary) log << "  " << line << "\n";
  }
  return r;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (Stage s : kStages) out.push_back(run(s));
  return out;
}

std::vector<SegmentationConfiguration> Pipeline::selected_configurations() const {
  verified_artifact(run_dir_, Stage::Segment, kConfigurationsArtifact);
  auto all = load_configurations(run_dir_ / kConfigurationsArtifact);
  if (options_.only.empty()) return all;
  std::vector<SegmentationConfiguration> out;
  for (auto& c : all) {
    if (std::find(options_.only.begin(), options_.only.end(), c.name()) != options_.only.end()) out.push_back(c);
  }
  return out;
}

std::vector<ModelEndpoint> Pipeline::selected_models() const {
  std::vector<ModelEndpoint> all = config_.models;
  if (all.empty() && mock_) all.push_back(ModelEndpoint{"mock", "", "mock", "", std::nullopt});
  if (options_.models.empty()) return all;
  std::vector<ModelEndpoint> out;
  for (auto& m : all) {
    if (std::find(options_.models.begin(), options_.models.end(), m.name) != options_.models.end()) out.push_back(m);
  }
  return out;
}

StageResult Pipeline::ingest() {
  StageBook book(run_dir_, Stage::Ingest);
  StageResult result;
  std::map<std::string, std::string> inputs;
  inputs.insert(book.external(config_.human_csv));
  inputs.insert(book.external(config_.codebook));
  const auto fp = fingerprint(Json{{"stage", "ingest"}, {"version", 1}});
  if (book.up_to_date("dataset", fp, inputs)) {
    result.units_skipped = 1;
    return result;
  }
  const auto dataset = load_dataset(config_.human_csv, config_.codebook);
  const auto out = run_dir_ / kDatasetArtifact;
  write_file(out, dump_dataset(dataset).dump(2) + "\n");
  book.record("dataset", fp, inputs, {out});
  result.units_run = 1;
  result.summary.push_back(std::to_string(dataset.size()) + " respondents, " +
                           std::to_string(dataset.codebook().columns().size()) + " codebook columns, " +
                           std::to_string(dataset.missing_outcomes()) + " missing outcomes");
  return result;
}

StageResult Pipeline::segment() {
  StageBook book(run_dir_, Stage::Segment);
  StageResult result;
  std::map<std::string, std::string> inputs;
  inputs.insert(book.upstream(Stage::Ingest, kDatasetArtifact));
  inputs.insert(book.external(config_.decision_table));
  if (!config_.candidates.empty()) inputs.insert(book.external(config_.candidates));
  Json enabled = Json::array();
  for (auto k : config_.enabled) {
    enabled.push_back(kind_name(k));
    if (auto it = config_.identifier_files.find(k); it != config_.identifier_files.end()) {
      inputs.insert(book.external(it->second));
    }
  }
  const auto& b = config_.boosting;
  const auto fp = fingerprint(Json{{"stage", "segment"},
                                   {"enabled", enabled},
                                   {"rounds", b.rounds},
                                   {"learning_rate", b.learning_rate},
                                   {"max_depth", b.max_depth},
                                   {"l2", b.l2},
                                   {"target", config_.ranking_target}});
  if (book.up_to_date("segment", fp, inputs)) {
    result.units_skipped = 1;
    return result;
  }

  const auto dataset = parse_dataset_dump(read_json(run_dir_ / kDatasetArtifact));
  const auto table = DecisionTable::load(config_.decision_table);
  SubgroupMap segments;
  for (const auto& rec : dataset.records()) {
    try {
      segments[rec.respondent_id] = assign_segment(rec, table);
    } catch (const Error& e) {
      throw e.with_context("respondent " + rec.respondent_id);
    }
  }
  const auto segmented = dataset.with_segments(segments);

  std::vector<fs::path> outputs;
  std::ostringstream seg_csv;
  csv::write_row(seg_csv, {"respondent_id", "segment"});
  for (const auto& rec : segmented.records()) csv::write_row(seg_csv, {rec.respondent_id, *rec.segment});
  outputs.push_back(run_dir_ / kSegmentsArtifact);
  write_file(outputs.back(), seg_csv.str());

  std::optional<IdentifierRanking> ranking;
  std::vector<IdentifierDef> candidates;
  if (!config_.candidates.empty()) {
    candidates = load_identifier_set(config_.candidates);
    std::vector<std::string> names;
    for (const auto& c : candidates) names.push_back(c.name);
    ranking = rank_identifiers(segmented, names, config_.ranking_target, config_.boosting);
    outputs.push_back(run_dir_ / kRankingArtifact);
    write_file(outputs.back(), ranking->to_json().dump(2) + "\n");
  }

  Json configs = Json::array();
  for (auto kind : config_.enabled) {
    try {
      if (kind == ConfigurationKind::DataDriven) {
        configs.push_back(build_data_driven_configuration(*ranking, candidates, segmented.codebook()).to_json());
      } else {
        configs.push_back(
            build_configuration(kind, segmented.codebook(), load_identifier_set(config_.identifier_files.at(kind)))
                .to_json());
      }
    } catch (const Error& e) {
      throw e.with_context("configuration " + std::string(kind_name(kind)));
    }
  }
  outputs.push_back(run_dir_ / kConfigurationsArtifact);
  write_file(outputs.back(), Json{{"configurations", configs}}.dump(2) + "\n");

  book.record("segment", fp, inputs, outputs);
  result.units_run = 1;
  std::map<std::string, std::size_t> counts;
  for (const auto& [id, label] : segments) ++counts[label];
  std::string line = "segments:";
  for (const auto& [label, n] : counts) line += " " + label + "=" + std::to_string(n);
  result.summary.push_back(line);
  if (ranking && !ranking->entries.empty()) {
    result.summary.push_back("top identifier: " + ranking->entries.front().name);
  }
  return result;
}

StageResult Pipeline::prompts() {
  StageBook book(run_dir_, Stage::Prompts);
  StageResult result;
  const auto dataset_in = book.upstream(Stage::Ingest, kDatasetArtifact);
  const auto configs_in = book.upstream(Stage::Segment, kConfigurationsArtifact);
  const auto tmpl = config_.prompt_template_or_default();
  tmpl.validate();

  std::optional<SurveyDataset> dataset;
  for (const auto& cfg : selected_configurations()) {
    const auto slug = slugify(cfg.name());
    std::map<std::string, std::string> inputs{dataset_in, configs_in};
    if (config_.prompt_template) inputs.insert(book.external(*config_.prompt_template));
    const auto fp = fingerprint(Json{{"stage", "prompts"}, {"configuration", cfg.to_json()}, {"template", template_json(tmpl)}});
    if (book.up_to_date(slug, fp, inputs)) {
      ++result.units_skipped;
      continue;
    }
    if (!dataset) dataset = parse_dataset_dump(read_json(run_dir_ / kDatasetArtifact));
    std::vector<RenderedPrompt> rendered;
    try {
      rendered = render_prompts(*dataset, cfg, tmpl);
    } catch (const Error& e) {
      throw e.with_context("configuration " + cfg.name());
    }
    std::string text;
    for (const auto& p : rendered) text += prompt_to_json(p).dump() + "\n";
    const auto out = run_dir_ / prompts_artifact(slug);
    write_file(out, text);
    book.record(slug, fp, inputs, {out}, Json{{"configuration", cfg.name()}, {"prompts", rendered.size()}});
    ++result.units_run;
    result.summary.push_back(cfg.name() + ": " + std::to_string(rendered.size()) + " prompts");
  }
  return result;
}

StageResult Pipeline::simulate() {
  StageBook book(run_dir_, Stage::Simulate);
  StageResult result;
  const auto configs = selected_configurations();
  const auto models = selected_models();

  std::optional<SurveyDataset> dataset;
  std::optional<SubgroupMap> segments;

  for (const auto& cfg : configs) {
    const auto slug = slugify(cfg.name());
    for (const auto& model : models) {
      const auto unit = slug + "__" + model.name;
      std::map<std::string, std::string> inputs;
      inputs.insert(book.upstream(Stage::Prompts, prompts_artifact(slug)));
      Json fp_json{{"stage", "simulate"}, {"configuration", cfg.name()}, {"model", model.name}, {"mock", mock_}};
      const auto& d = config_.decoding;
      fp_json["decoding"] = Json{{"temperature", d.temperature}, {"top_p", d.top_p}, {"max_tokens", d.max_tokens}};
      if (mock_) {
        inputs.insert(book.upstream(Stage::Ingest, kDatasetArtifact));
        inputs.insert(book.upstream(Stage::Segment, kSegmentsArtifact));
        Json targets = Json::object();
        for (const auto& [label, t] : config_.mock.subgroups) targets[label] = {t.mean, t.sd};
        fp_json["mock_params"] = Json{{"compression", config_.mock.compression_for(cfg.name(), model)},
                                      {"targets", targets},
                                      {"seed", *config_.seed}};
      } else {
        fp_json["endpoint"] = Json{{"url", model.url}, {"model", model.remote_model}};
        fp_json["retry"] = Json{{"max_attempts", config_.max_attempts}, {"backoff_ms", config_.backoff_ms}};
      }
      const auto fp = fingerprint(fp_json);
      if (book.up_to_date(unit, fp, inputs)) {
        ++result.units_skipped;
        continue;
      }

      const auto prompts = load_prompts(run_dir_ / prompts_artifact(slug));
      SiliconSample sample;
      try {
        if (mock_) {
          if (!dataset) dataset = parse_dataset_dump(read_json(run_dir_ / kDatasetArtifact));
          if (!segments) segments = load_segments(run_dir_ / kSegmentsArtifact);
          std::set<std::string> ids;
          std::set<OutcomeItem> items;
          for (const auto& p : prompts) {
            ids.insert(p.respondent_id);
            items.insert(p.item);
          }
          SubgroupMap covered;
          for (const auto& id : ids) {
            auto it = segments->find(id);
            if (it == segments->end()) throw Error(ErrorCode::MissingValue, "respondent " + id + " has no segment");
            covered[id] = it->second;
          }
          MockRespondentModel mock_model;
          mock_model.subgroups = human_targets(*dataset, covered);
          for (const auto& [label, t] : config_.mock.subgroups) mock_model.subgroups[label] = t;
          mock_model.compression = config_.mock.compression_for(cfg.name(), model);
          mock_model.seed = derive_seed(*config_.seed, cfg.name(), model.name);
          sample = sample_mock(mock_model, covered, std::vector<OutcomeItem>(items.begin(), items.end()), model.name,
                               cfg.name());
          sample.decoding = config_.decoding;
        } else {
          std::string token;
          if (!model.token_env.empty()) {
            const char* env = std::getenv(model.token_env.c_str());
            if (!env || !*env) {
              throw Error(ErrorCode::InvalidConfig, "environment variable " + model.token_env + " is not set");
            }
            token = env;
          }
          std::unique_ptr<CompletionClient> client =
              options_.client_factory
                  ? options_.client_factory(model, token)
                  : make_http_client(HttpClientOptions{model.url, model.remote_model, token, std::chrono::seconds(60)});
          GenerationOptions gen;
          gen.model = model.name;
          gen.configuration = cfg.name();
          gen.decoding = config_.decoding;
          gen.retry = config_.retry_policy();
          if (options_.sleep) gen.retry.sleep = options_.sleep;
          gen.concurrency = config_.concurrency;
          sample = generate_sample(*client, prompts, gen);
        }
      } catch (const Error& e) {
        throw e.with_context("configuration " + cfg.name() + ", model " + model.name);
      }

      const auto csv_path = run_dir_ / sample_artifact(slug, model.name);
      const auto attempts_path = run_dir_ / attempts_artifact(slug, model.name);
      fs::create_directories(csv_path.parent_path());
      save_sample(sample, csv_path, attempts_path);
      book.record(unit, fp, inputs, {csv_path, attempts_path},
                  Json{{"configuration", cfg.name()},
                       {"model", model.name},
                       {"mock", mock_},
                       {"cells", sample.cells.size()},
                       {"missing", sample.missing_count()}});
      ++result.units_run;
      result.summary.push_back(cfg.name() + " x " + model.name + ": " + std::to_string(sample.cells.size()) +
                               " cells, " + std::to_string(sample.missing_count()) + " missing");
    }
  }
  return result;
}

StageResult Pipeline::evaluate() {
  StageBook book(run_dir_, Stage::Evaluate);
  StageResult result;
  std::map<std::string, std::string> inputs;
  inputs.insert(book.upstream(Stage::Ingest, kDatasetArtifact));
  inputs.insert(book.upstream(Stage::Segment, kSegmentsArtifact));
  inputs.insert(book.upstream(Stage::Segment, kConfigurationsArtifact));

  const auto configs = selected_configurations();
  const auto models = selected_models();
  auto sim_manifest = StageManifest::load(manifest_path(run_dir_, Stage::Simulate));
  if (!sim_manifest) throw Error(ErrorCode::MissingStage, "stage 'simulate' has not been run");

  // Samples in configuration order, then declared model order.
  struct Wanted {
    std::string configuration, model, slug;
  };
  std::vector<Wanted> wanted;
  for (const auto& cfg : configs) {
    for (const auto& model : models) {
      const auto slug = slugify(cfg.name());
      if (sim_manifest->units.contains(slug + "__" + model.name)) wanted.push_back({cfg.name(), model.name, slug});
    }
  }
  if (wanted.empty()) throw Error(ErrorCode::MissingStage, "no simulated samples for the selected configurations/models");

  Json units = Json::array();
  for (const auto& w : wanted) {
    inputs.insert(book.upstream(Stage::Simulate, sample_artifact(w.slug, w.model)));
    inputs.insert(book.upstream(Stage::Simulate, attempts_artifact(w.slug, w.model)));
    units.push_back(w.slug + "__" + w.model);
  }
  const auto fp =
      fingerprint(Json{{"stage", "evaluate"},
                       {"units", units},
                       {"kld_epsilon", config_.kld_epsilon},
                       {"kld_direction", config_.kld_direction == KlDirection::HumanToSimulated ? "h2s" : "s2h"}});
  if (book.up_to_date("report", fp, inputs)) {
    result.units_skipped = 1;
    return result;
  }

  const auto human = parse_dataset_dump(read_json(run_dir_ / kDatasetArtifact));
  const auto segments = load_segments(run_dir_ / kSegmentsArtifact);
  std::vector<SiliconSample> samples;
  std::vector<SegmentationConfiguration> used;
  for (const auto& w : wanted) {
    samples.push_back(load_sample(run_dir_ / sample_artifact(w.slug, w.model), run_dir_ / attempts_artifact(w.slug, w.model),
                                  w.model, w.configuration));
  }
  for (const auto& cfg : configs) {
    const bool has = std::any_of(wanted.begin(), wanted.end(), [&](const Wanted& w) { return w.configuration == cfg.name(); });
    if (has) used.push_back(cfg);
  }

  CompileOptions opts;
  opts.kld_epsilon = config_.kld_epsilon;
  opts.kld_direction = config_.kld_direction;
  const auto report = compile_report(human, samples, used, segments, opts);
  const auto out = run_dir_ / kReportArtifact;
  write_file(out, report_to_json(report).dump(2) + "\n");
  book.record("report", fp, inputs, {out}, Json{{"runs", report.runs.size()}});
  result.units_run = 1;
  for (const auto& r : report.runs) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << r.configuration << " x " << r.model << ": mae=" << r.mae.value_or(NAN) << " kld=" << r.kld.value_or(NAN)
       << " nemd=" << r.aggregate_nemd.value_or(NAN);
    if (r.benchmark_gap) os << " gap=" << *r.benchmark_gap;
    result.summary.push_back(os.str());
  }
  return result;
}

StageResult Pipeline::report() {
  StageBook book(run_dir_, Stage::Report);
  StageResult result;
  std::map<std::string, std::string> inputs;
  inputs.insert(book.upstream(Stage::Evaluate, kReportArtifact));
  const auto fp = fingerprint(Json{{"stage", "report"}, {"version", 1}});
  if (book.up_to_date("report", fp, inputs)) {
    result.units_skipped = 1;
    return result;
  }
  const auto report = report_from_json(read_json(run_dir_ / kReportArtifact));
  const auto tables_dir = run_dir_ / "report" / "tables";
  std::vector<fs::path> outputs;
  for (auto format : {TableFormat::Json, TableFormat::Csv, TableFormat::Markdown}) {
    auto written = emit_tables(report, format, tables_dir);
    outputs.insert(outputs.end(), written.begin(), written.end());
  }
  for (const auto& d : report.details) {
    auto human = std::find_if(report.human_details.begin(), report.human_details.end(),
                              [&](const HumanDetail& h) { return h.configuration == d.configuration; });
    if (human == report.human_details.end()) continue;
    const auto& sim = d.between_group;
    const auto shown = sim.procrustes ? aligned_embedding(sim.embedding, *sim.procrustes) : sim.embedding;
    const auto out = run_dir_ / "report" / "maps" / (slugify(d.configuration) + "__" + d.model + ".svg");
    emit_mds_map(human->between_group.embedding, shown, out, d.configuration + " / " + d.model);
    outputs.push_back(out);
  }
  book.record("report", fp, inputs, outputs);
  result.units_run = 1;
  result.summary.push_back(std::to_string(outputs.size()) + " files under " + (run_dir_ / "report").string());
  return result;
}

}  // namespace segsim
