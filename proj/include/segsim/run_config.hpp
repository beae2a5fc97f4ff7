#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "segsim/metrics.hpp"
#include "segsim/persona.hpp"
#include "segsim/segmentation.hpp"
#include "segsim/silicon.hpp"

namespace segsim {

struct ModelEndpoint {
  std::string name;          // used in artifact names and report rows
  std::string url;           // chat-completions URL
  std::string remote_model;  // model field of the request; defaults to name
  std::string token_env;     // env var holding the bearer token; may be empty
  std::optional<double> mock_compression;

  bool operator==(const ModelEndpoint&) const = default;
};

struct MockSettings {
  double compression = 1.0;
  std::map<std::string, double> compression_by_configuration;
  // Explicit subgroup targets; subgroups not listed take the human
  // subgroup's pooled mean and SD over the outcome items.
  std::map<std::string, SubgroupTarget, std::less<>> subgroups;

  // Configuration override, then the model's own value, then the default.
  double compression_for(const std::string& configuration, const ModelEndpoint& model) const;
};

// Parsed run file (TOML). Paths are resolved against the file's directory.
struct RunConfig {
  std::filesystem::path base_dir;

  std::filesystem::path human_csv;
  std::filesystem::path codebook;
  std::filesystem::path decision_table;
  std::filesystem::path candidates;  // data-driven pool; may be empty
  std::optional<std::filesystem::path> prompt_template;

  std::vector<ConfigurationKind> enabled;
  std::map<ConfigurationKind, std::filesystem::path> identifier_files;

  BoostingParams boosting;
  std::string ranking_target = std::string(kSegmentColumn);

  DecodingParams decoding;
  int max_attempts = 3;
  int backoff_ms = 1000;
  int concurrency = 8;

  std::vector<ModelEndpoint> models;

  bool use_mock = false;
  MockSettings mock;

  double kld_epsilon = kDefaultKlEpsilon;
  KlDirection kld_direction = KlDirection::HumanToSimulated;

  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;

  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  // Throws InvalidConfig. `mock` reports whether the mock will be used.
  void validate(bool mock) const;
  bool mock_settings_ok() const;

  RetryPolicy retry_policy() const;
  PromptTemplate prompt_template_or_default() const;
  const ModelEndpoint* find_model(std::string_view name) const;
};

std::string slugify(std::string_view name);

}  // namespace segsim
