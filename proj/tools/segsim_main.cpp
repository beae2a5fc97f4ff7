// segsim: staged pipeline from a survey CSV to fidelity tables and MDS maps.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "segsim/error.hpp"
#include "segsim/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitStaging = 3;

int exit_code_for(segsim::ErrorCode code) {
  using segsim::ErrorCode;
  return code == ErrorCode::StaleInput || code == ErrorCode::MissingStage ? kExitStaging : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona-conditioned survey simulation and fidelity evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string run_dir;
  std::vector<std::string> only;
  std::vector<std::string> models;
  bool mock = false;
  std::optional<std::uint64_t> seed;

  app.add_option("--config", config_path, "Run configuration (TOML)")->required()->check(CLI::ExistingFile);
  app.add_option("--run-dir", run_dir, "Run directory (defaults to output_dir from the config)");
  app.add_option("--only", only, "Restrict to these configurations (repeatable)");
  app.add_option("--model", models, "Restrict to these models (repeatable)");
  app.add_flag("--mock", mock, "Use the mock respondent model instead of endpoints");
  app.add_option("--seed", seed, "Seed for the mock model (overrides the config)");

  struct Sub {
    const char* name;
    const char* help;
    std::optional<segsim::Stage> stage;  // empty: every stage
  };
  const std::vector<Sub> subs{
      {"ingest", "Validate the human CSV against its codebook", segsim::Stage::Ingest},
      {"segment", "Assign segments, rank identifiers, build configurations", segsim::Stage::Segment},
      {"prompts", "Render persona prompts per configuration", segsim::Stage::Prompts},
      {"simulate", "Collect simulated answers per configuration x model", segsim::Stage::Simulate},
      {"evaluate", "Compute the fidelity report", segsim::Stage::Evaluate},
      {"report", "Emit tables and MDS maps", segsim::Stage::Report},
      {"run", "Run every stage in order", std::nullopt},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    auto config = segsim::RunConfig::load(config_path);
    segsim::PipelineOptions options;
    options.run_dir = run_dir;
    options.only = only;
    options.models = models;
    options.mock = mock;
    options.seed = seed;
    options.log = &std::cout;
    segsim::Pipeline pipeline(std::move(config), std::move(options));

    for (const auto& s : subs) {
      if (!app.got_subcommand(s.name)) continue;
      if (s.stage) {
        pipeline.run(*s.stage);
      } else {
        pipeline.run_all();
      }
    }
    return kExitOk;
  } catch (const segsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
