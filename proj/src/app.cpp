#include "trajsim/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

namespace {

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidConfig, key + ": not an integer: " + value);
}

std::int64_t to_int64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidConfig, key + ": not an integer: " + value);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::kInvalidConfig, key + ": not a number: " + value);
}

bool to_bool(const std::string& key, const std::string& value) {
  const auto v = text::to_lower_ascii(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::kInvalidConfig, key + ": not a boolean: " + value);
}

bool apply_backend(BackendConfig& b, const std::string& field, const std::string& key,
                   const std::string& value) {
  if (field == "base_url") b.base_url = value;
  else if (field == "model") b.model_name = value;
  else if (field == "api_key_env") b.api_key_env = value;
  else if (field == "timeout_ms") b.timeout_ms = to_int(key, value);
  else if (field == "max_retries") b.max_retries = to_int(key, value);
  else if (field == "temperature") b.temperature = to_double(key, value);
  else if (field == "seed") b.seed = value.empty() ? std::nullopt : std::optional(to_int64(key, value));
  else return false;
  return true;
}

template <typename F>
auto as_config_error(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    throw Error(Errc::kInvalidConfig, key + ": " + e.what());
  }
}

}  // namespace

void AppConfig::apply(const Settings& settings) {
  for (const auto& [key, value] : settings) {
    if (key == "data_dir") data_dir = value;
    else if (key == "template_dir") template_dir = value;
    else if (key == "config_dir") config_dir = value;
    else if (key == "locale") locale = as_config_error(key, [&] { return parse_locale(value); });
    else if (key == "strategy_policy") {
      strategy_policy = as_config_error(key, [&] { return parse_policy(value); });
    }
    else if (key == "mock") mock = to_bool(key, value);
    else if (key == "log_prompts") log_prompts = to_bool(key, value);
    else if (key == "max_concurrency") max_concurrency = to_int(key, value);
    else if (key == "rate_per_sec") rate_per_sec = to_double(key, value);
    else if (text::starts_with(key, "backend.") &&
             apply_backend(backend, key.substr(8), key, value)) {
    } else if (text::starts_with(key, "judge.") &&
               apply_backend(judge_backend, key.substr(6), key, value)) {
    } else {
      throw Error(Errc::kInvalidConfig, "unknown setting: " + key);
    }
  }
}

void AppConfig::validate() const {
  backend.validate();
  judge_backend.validate();
  if (max_concurrency < 1) throw Error(Errc::kInvalidConfig, "max_concurrency must be >= 1");
  for (const auto& dir : {template_dir, config_dir}) {
    if (!std::filesystem::is_directory(dir)) {
      throw Error(Errc::kInvalidConfig, "directory not found: " + dir.string());
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(data_dir, ec);
  if (ec) throw Error(Errc::kInvalidConfig, "cannot create " + data_dir.string() + ": " + ec.message());
}

Settings parse_settings_file(std::string_view content) {
  Settings out;
  std::string section;
  std::istringstream in{std::string(content)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = std::string(text::trim(raw));
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = std::string(text::trim(std::string_view(line).substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::kInvalidConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = std::string(text::trim(std::string_view(line).substr(0, eq)));
    auto value = std::string(text::trim(std::string_view(line).substr(eq + 1)));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

Settings load_settings_file(const std::filesystem::path& path) {
  return parse_settings_file(text::read_file(path));
}

Settings settings_from_env() {
  Settings out;
  const std::pair<const char*, const char*> vars[] = {
      {"TRAJSIM_LLM_BASE_URL", "backend.base_url"},
      {"TRAJSIM_LLM_MODEL", "backend.model"},
      {"TRAJSIM_JUDGE_BASE_URL", "judge.base_url"},
      {"TRAJSIM_JUDGE_MODEL", "judge.model"},
      {"TRAJSIM_DATA_DIR", "data_dir"},
      {"TRAJSIM_TEMPLATE_DIR", "template_dir"},
      {"TRAJSIM_CONFIG_DIR", "config_dir"},
      {"TRAJSIM_LOCALE", "locale"},
  };
  for (const auto& [env, key] : vars) {
    if (const char* v = std::getenv(env); v && *v) out[key] = v;
  }
  return out;
}

AppConfig resolve_config(const Settings& file, const Settings& env, const Settings& flags) {
  AppConfig config;
  config.apply(file);
  config.apply(env);
  config.apply(flags);
  return config;
}

StrategyMap load_strategy_map(const AppConfig& config) {
  auto catalog = StrategyCatalog::load(config.config_dir / "strategies.tsv");
  const auto map_path = config.config_dir / "strategy_map.tsv";
  StrategyMap map = std::filesystem::exists(map_path)
                        ? StrategyMap::load(map_path, std::move(catalog))
                        : StrategyMap(std::move(catalog), DefaultPolicy::kPermitAll);
  if (config.strategy_policy) map.set_policy(*config.strategy_policy);
  return map;
}

MockTransport::Responder mock_judge_responder() {
  return [](const std::string& prompt) -> std::string {
    const auto digest = text::sha256_hex(prompt);
    const auto bits = std::stoul(digest.substr(0, 8), nullptr, 16);
    const bool classify =
        prompt.find("- co (") != std::string::npos || prompt.find("- co（") != std::string::npos;
    if (classify) {
      static const char* codes[] = {"co", "gi", "ex", "co, gi", "rr", "ec"};
      return codes[bits % 6];
    }
    return bits % 2 == 0 ? "A" : "B";
  };
}

App::App(AppConfig cfg, std::shared_ptr<Transport> client, std::shared_ptr<Transport> judge_t)
    : config(std::move(cfg)),
      store(std::make_shared<CorpusStore>(config.data_dir)),
      composer(std::make_shared<PromptComposer>(TemplateSet::load(config.template_dir))),
      eval_templates(EvalTemplates::load(config.template_dir)),
      strategies(load_strategy_map(config)),
      client_transport(std::move(client)),
      judge_transport(std::move(judge_t)) {
  if (!client_transport) {
    client_transport = config.mock ? std::shared_ptr<Transport>(
                                         std::make_shared<MockTransport>(counting_responder()))
                                   : std::make_shared<OpenAiTransport>();
  }
  if (!judge_transport) {
    judge_transport = config.mock ? std::shared_ptr<Transport>(
                                        std::make_shared<MockTransport>(mock_judge_responder()))
                                  : std::make_shared<OpenAiTransport>();
  }
  GatewayOptions options;
  options.max_concurrency = config.max_concurrency;
  options.rate_per_sec = config.rate_per_sec;
  options.log_path = config.data_dir / "llm_log.jsonl";
  options.log_prompts = config.log_prompts;
  if (config.mock) options.sleeper = [](std::chrono::milliseconds) {};
  gateway = std::make_shared<Gateway>(config.backend, client_transport, options);
  judge = std::make_shared<Gateway>(config.judge_backend, judge_transport, options);

  EngineOptions engine_options;
  engine_options.sessions_dir = config.sessions_dir();
  engine_options.default_locale = config.locale;
  engine = std::make_unique<SessionEngine>(store, composer, gateway, strategies, engine_options);
}

std::vector<Session> load_sessions(const std::filesystem::path& sessions_dir) {
  std::vector<Session> out;
  if (!std::filesystem::is_directory(sessions_dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(sessions_dir)) {
    if (e.path().extension() == ".jsonl") out.push_back(load_session_log(e.path()));
  }
  auto number = [](const std::string& id) {
    return id.size() > 1 && id[0] == 's' ? std::stol(id.substr(1)) : 0L;
  };
  std::sort(out.begin(), out.end(), [&](const Session& a, const Session& b) {
    return number(a.id) != number(b.id) ? number(a.id) < number(b.id) : a.id < b.id;
  });
  return out;
}

SessionsBySource collect_sources(const CorpusStore& store,
                                 const std::filesystem::path& sessions_dir) {
  SessionsBySource sources;
  for (const auto& d : store.dialogues()) sources[Source::kHuman].push_back(source_session(d));
  for (const auto& s : load_sessions(sessions_dir)) {
    sources[source_for(s.setting)].push_back(source_session(s));
  }
  return sources;
}

}  // namespace trajsim
