#include "segsim/run_config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "segsim/error.hpp"
#include "toml.hpp"

namespace segsim {

double MockSettings::compression_for(const std::string& configuration, const ModelEndpoint& model) const {
  if (auto it = compression_by_configuration.find(configuration); it != compression_by_configuration.end()) {
    return it->second;
  }
  return model.mock_compression.value_or(compression);
}

std::string slugify(std::string_view name) {
  std::string out;
  bool dash = false;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (dash && !out.empty()) out += '-';
      dash = false;
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      dash = true;
    }
  }
  return out;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void check_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> allowed) {
  for (auto&& [key, node] : t) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key.str() == a;
    if (!ok) bad("unknown key '" + std::string(key.str()) + "' in " + where);
  }
}

std::string get_string(const toml::table& t, std::string_view key, const std::string& where, bool required) {
  const auto* node = t.get(key);
  if (!node) {
    if (required) bad(where + "." + std::string(key) + " is required");
    return {};
  }
  auto v = node->value<std::string>();
  if (!v) bad(where + "." + std::string(key) + " must be a string");
  return *v;
}

template <typename T>
std::optional<T> get_number(const toml::table& t, std::string_view key, const std::string& where) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!node->is_number()) bad(where + "." + std::string(key) + " must be a number");
    return static_cast<T>(*node->value<double>());
  } else {
    if (!node->is_integer()) bad(where + "." + std::string(key) + " must be an integer");
    return static_cast<T>(*node->value<std::int64_t>());
  }
}

const toml::table* get_table(const toml::table& t, std::string_view key) {
  const auto* node = t.get(key);
  if (!node) return nullptr;
  const auto* tbl = node->as_table();
  if (!tbl) bad(std::string(key) + " must be a table");
  return tbl;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ConfigurationKind kind_or_throw(std::string_view name) {
  auto k = parse_kind(name);
  if (!k) throw Error(ErrorCode::UnknownConfiguration, "unknown configuration '" + std::string(name) + "'");
  return *k;
}

bool valid_model_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  }
  return true;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "run config: " << e.description() << " (line " << e.source().begin.line << ")";
    bad(os.str());
  }
  check_keys(root, "run config",
             {"seed", "output_dir", "data", "configurations", "ranking", "prompts", "decoding", "retry", "models",
              "mock", "evaluation"});

  RunConfig c;
  c.base_dir = base_dir;
  if (auto seed = get_number<std::int64_t>(root, "seed", "run config")) {
    if (*seed < 0) bad("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(*seed);
  }
  c.output_dir = resolve(base_dir, get_string(root, "output_dir", "run config", false));

  const auto* data = get_table(root, "data");
  if (!data) bad("[data] section is required");
  check_keys(*data, "[data]", {"human", "codebook", "decision_table", "candidates"});
  c.human_csv = resolve(base_dir, get_string(*data, "human", "data", true));
  c.codebook = resolve(base_dir, get_string(*data, "codebook", "data", true));
  c.decision_table = resolve(base_dir, get_string(*data, "decision_table", "data", true));
  c.candidates = resolve(base_dir, get_string(*data, "candidates", "data", false));

  const auto* configs = get_table(root, "configurations");
  if (!configs) bad("[configurations] section is required");
  check_keys(*configs, "[configurations]", {"enabled", "identifiers"});
  if (const auto* enabled = configs->get_as<toml::array>("enabled")) {
    for (auto&& el : *enabled) {
      auto name = el.value<std::string>();
      if (!name) bad("configurations.enabled must list names");
      c.enabled.push_back(kind_or_throw(*name));
    }
  } else {
    c.enabled.assign(kConfigurationKinds.begin(), kConfigurationKinds.end());
  }
  if (const auto* ids = get_table(*configs, "identifiers")) {
    for (auto&& [key, node] : *ids) {
      auto p = node.value<std::string>();
      if (!p) bad("configurations.identifiers." + std::string(key.str()) + " must be a path");
      c.identifier_files[kind_or_throw(key.str())] = resolve(base_dir, *p);
    }
  }

  if (const auto* r = get_table(root, "ranking")) {
    check_keys(*r, "[ranking]", {"rounds", "learning_rate", "l2", "target"});
    if (auto v = get_number<int>(*r, "rounds", "ranking")) c.boosting.rounds = *v;
    if (auto v = get_number<double>(*r, "learning_rate", "ranking")) c.boosting.learning_rate = *v;
    if (auto v = get_number<double>(*r, "l2", "ranking")) c.boosting.l2 = *v;
    if (auto t = get_string(*r, "target", "ranking", false); !t.empty()) c.ranking_target = t;
  }

  if (const auto* p = get_table(root, "prompts")) {
    check_keys(*p, "[prompts]", {"template"});
    if (auto t = get_string(*p, "template", "prompts", false); !t.empty()) c.prompt_template = resolve(base_dir, t);
  }

  if (const auto* d = get_table(root, "decoding")) {
    check_keys(*d, "[decoding]", {"temperature", "top_p", "max_tokens"});
    if (auto v = get_number<double>(*d, "temperature", "decoding")) c.decoding.temperature = *v;
    if (auto v = get_number<double>(*d, "top_p", "decoding")) c.decoding.top_p = *v;
    if (auto v = get_number<int>(*d, "max_tokens", "decoding")) c.decoding.max_tokens = *v;
  }

  if (const auto* r = get_table(root, "retry")) {
    check_keys(*r, "[retry]", {"max_attempts", "backoff_ms", "concurrency"});
    if (auto v = get_number<int>(*r, "max_attempts", "retry")) c.max_attempts = *v;
    if (auto v = get_number<int>(*r, "backoff_ms", "retry")) c.backoff_ms = *v;
    if (auto v = get_number<int>(*r, "concurrency", "retry")) c.concurrency = *v;
  }

  if (const auto* models = root.get("models")) {
    const auto* arr = models->as_array();
    if (!arr) bad("models must be an array of tables ([[models]])");
    for (auto&& el : *arr) {
      const auto* t = el.as_table();
      if (!t) bad("models entries must be tables");
      check_keys(*t, "[[models]]", {"name", "url", "model", "token_env", "mock_compression"});
      ModelEndpoint m;
      m.name = get_string(*t, "name", "models", true);
      m.url = get_string(*t, "url", "models", false);
      m.remote_model = get_string(*t, "model", "models", false);
      if (m.remote_model.empty()) m.remote_model = m.name;
      m.token_env = get_string(*t, "token_env", "models", false);
      m.mock_compression = get_number<double>(*t, "mock_compression", "models");
      c.models.push_back(std::move(m));
    }
  }

  if (const auto* m = get_table(root, "mock")) {
    check_keys(*m, "[mock]", {"enabled", "compression", "compression_by_configuration", "subgroups"});
    if (const auto* e = m->get("enabled")) {
      auto b = e->value<bool>();
      if (!b) bad("mock.enabled must be a boolean");
      c.use_mock = *b;
    }
    if (auto v = get_number<double>(*m, "compression", "mock")) c.mock.compression = *v;
    if (const auto* by = get_table(*m, "compression_by_configuration")) {
      for (auto&& [key, node] : *by) {
        const auto name = std::string(kind_name(kind_or_throw(key.str())));
        auto v = node.value<double>();
        if (!v) bad("mock.compression_by_configuration values must be numbers");
        c.mock.compression_by_configuration[name] = *v;
      }
    }
    if (const auto* subs = get_table(*m, "subgroups")) {
      for (auto&& [key, node] : *subs) {
        const auto* t = node.as_table();
        if (!t) bad("mock.subgroups entries must be tables");
        check_keys(*t, "[mock.subgroups]", {"mean", "sd"});
        SubgroupTarget target;
        auto mean = get_number<double>(*t, "mean", "mock.subgroups");
        auto sd = get_number<double>(*t, "sd", "mock.subgroups");
        if (!mean || !sd) bad("mock.subgroups." + std::string(key.str()) + " needs mean and sd");
        target.mean = *mean;
        target.sd = *sd;
        c.mock.subgroups[std::string(key.str())] = target;
      }
    }
  }

  if (const auto* e = get_table(root, "evaluation")) {
    check_keys(*e, "[evaluation]", {"kld_epsilon", "kld_direction"});
    if (auto v = get_number<double>(*e, "kld_epsilon", "evaluation")) c.kld_epsilon = *v;
    const auto dir = get_string(*e, "kld_direction", "evaluation", false);
    if (dir == "human_to_simulated" || dir.empty()) {
      c.kld_direction = KlDirection::HumanToSimulated;
    } else if (dir == "simulated_to_human") {
      c.kld_direction = KlDirection::SimulatedToHuman;
    } else {
      bad("evaluation.kld_direction must be human_to_simulated or simulated_to_human");
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open run config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  auto c = parse(os.str(), path.parent_path());
  if (c.output_dir.empty()) c.output_dir = path.parent_path() / "run";
  return c;
}

void RunConfig::validate(bool mock) const {
  if (enabled.empty()) bad("no configurations enabled");
  std::set<ConfigurationKind> seen;
  for (auto k : enabled) {
    if (!seen.insert(k).second) bad("configuration " + std::string(kind_name(k)) + " enabled twice");
    if (k == ConfigurationKind::DataDriven) {
      if (candidates.empty()) bad("Data-driven needs data.candidates");
    } else if (!identifier_files.contains(k)) {
      bad("configuration " + std::string(kind_name(k)) + " has no identifier file");
    }
  }
  if (boosting.rounds < 1 || !(boosting.learning_rate > 0.0) || !(boosting.l2 >= 0.0)) bad("invalid [ranking] values");
  decoding.validate();
  if (max_attempts < 1) bad("retry.max_attempts must be at least 1");
  if (backoff_ms < 0) bad("retry.backoff_ms must be non-negative");
  if (concurrency < 1) bad("retry.concurrency must be at least 1");
  if (!(kld_epsilon > 0.0)) bad("evaluation.kld_epsilon must be positive");

  std::set<std::string> names;
  for (const auto& m : models) {
    if (!valid_model_name(m.name)) bad("model name '" + m.name + "' may only use letters, digits, '-', '_' and '.'");
    if (!names.insert(m.name).second) bad("model '" + m.name + "' declared twice");
    if (!mock && m.url.empty()) bad("model '" + m.name + "' has no url");
    if (m.mock_compression && !(*m.mock_compression >= 0.0 && *m.mock_compression <= 1.0)) {
      bad("model '" + m.name + "' mock_compression must lie in [0, 1]");
    }
  }
  if (mock) {
    if (!seed) bad("a seed is required when the mock model is used (seed = ... or --seed)");
    if (!(mock_settings_ok())) bad("mock compression values must lie in [0, 1]");
  } else if (models.empty()) {
    bad("no models declared; add [[models]] or use --mock");
  }
}

bool RunConfig::mock_settings_ok() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(mock.compression)) return false;
  for (const auto& [name, v] : mock.compression_by_configuration) {
    if (!in_unit(v)) return false;
  }
  for (const auto& [name, t] : mock.subgroups) {
    if (!(t.mean >= 1.0 && t.mean <= 7.0) || !(t.sd >= 0.0)) return false;
  }
  return true;
}

RetryPolicy RunConfig::retry_policy() const {
  RetryPolicy p;
  p.max_attempts = max_attempts;
  p.backoff_base = std::chrono::milliseconds(backoff_ms);
  return p;
}

PromptTemplate RunConfig::prompt_template_or_default() const {
  if (!prompt_template) return PromptTemplate::default_template();
  std::ifstream in(*prompt_template, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open prompt template " + prompt_template->string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidTemplate, "prompt template is not valid JSON: " + std::string(e.what()));
  }
  PromptTemplate t;
  try {
    t.system_preamble = doc.at("system_preamble").get<std::string>();
    t.body = doc.at("body").get<std::string>();
    t.answer_instruction = doc.at("answer_instruction").get<std::string>();
    for (OutcomeItem item : kOutcomeItems) {
      t.questions[item_index(item)] = doc.at("questions").at(std::string(item_id(item))).get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidTemplate, "prompt template: " + std::string(e.what()));
  }
  t.validate();
  return t;
}

const ModelEndpoint* RunConfig::find_model(std::string_view name) const {
  for (const auto& m : models) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

}  // namespace segsim
