#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "segsim/run_config.hpp"

namespace segsim {

enum class Stage { Ingest, Segment, Prompts, Simulate, Evaluate, Report };

inline constexpr std::array<Stage, 6> kStages{Stage::Ingest,   Stage::Segment,  Stage::Prompts,
                                              Stage::Simulate, Stage::Evaluate, Stage::Report};

std::string_view stage_name(Stage stage);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// One resumable unit of a stage (a stage may hold several, e.g. one per
// configuration x model). Paths inside the run directory are stored
// relative to it.
struct UnitRecord {
  std::string fingerprint;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  Json meta = Json::object();
};

struct StageManifest {
  std::string stage;
  std::map<std::string, UnitRecord> units;

  Json to_json() const;
  static StageManifest from_json(const Json& doc);
  static std::optional<StageManifest> load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

using ClientFactory = std::function<std::unique_ptr<CompletionClient>(const ModelEndpoint&, const std::string& token)>;

struct PipelineOptions {
  std::filesystem::path run_dir;              // defaults to the config's output_dir
  std::vector<std::string> only;              // configuration names; empty = all enabled
  std::vector<std::string> models;            // model names; empty = all
  bool mock = false;                          // OR-ed with the config's mock.enabled
  std::optional<std::uint64_t> seed;          // overrides the config seed
  ClientFactory client_factory;               // defaults to the HTTP client
  std::function<void(std::chrono::milliseconds)> sleep;  // retry sleep override
  std::ostream* log = nullptr;
};

struct StageResult {
  Stage stage = Stage::Ingest;
  std::size_t units_run = 0;
  std::size_t units_skipped = 0;
  std::vector<std::string> summary;

  bool no_op() const { return units_run == 0; }
};

class Pipeline {
 public:
  Pipeline(RunConfig config, PipelineOptions options);

  StageResult run(Stage stage);
  std::vector<StageResult> run_all();

  const std::filesystem::path& run_dir() const { return run_dir_; }
  bool mock() const { return mock_; }

 private:
  StageResult ingest();
  StageResult segment();
  StageResult prompts();
  StageResult simulate();
  StageResult evaluate();
  StageResult report();

  std::vector<SegmentationConfiguration> selected_configurations() const;
  std::vector<ModelEndpoint> selected_models() const;

  RunConfig config_;
  PipelineOptions options_;
  std::filesystem::path run_dir_;
  bool mock_ = false;
};

// Deterministic per-unit seed derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view configuration, std::string_view model);

}  // namespace segsim
