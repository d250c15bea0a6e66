#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "trajsim/behavior.hpp"
#include "trajsim/corpus.hpp"
#include "trajsim/evaluation.hpp"
#include "trajsim/gateway.hpp"
#include "trajsim/prompt.hpp"
#include "trajsim/session.hpp"

namespace trajsim {

using Settings = std::map<std::string, std::string>;

struct AppConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path template_dir = "templates";
  std::filesystem::path config_dir = "config";
  BackendConfig backend;
  BackendConfig judge_backend;
  std::optional<DefaultPolicy> strategy_policy;  // overrides the map file
  Locale locale = Locale::kZh;
  bool mock = false;
  bool log_prompts = false;
  int max_concurrency = 4;
  double rate_per_sec = 0.0;

  // Overlays `key = value` settings; unknown keys raise InvalidConfig.
  void apply(const Settings& settings);
  // Directories must exist or be creatable.
  void validate() const;

  std::filesystem::path sessions_dir() const { return data_dir / "sessions"; }
  std::filesystem::path eval_dir() const { return data_dir / "eval"; }
};

// `key = value` lines, `#` comments, optional quotes; a `[section]` header
// prefixes the keys that follow with "section.".
Settings parse_settings_file(std::string_view content);
Settings load_settings_file(const std::filesystem::path& path);

// Settings from TRAJSIM_* environment variables.
Settings settings_from_env();

// defaults < file < env < flags.
AppConfig resolve_config(const Settings& file, const Settings& env, const Settings& flags);

/// Every long-lived component, built from an AppConfig.
struct App {
  explicit App(AppConfig config,
               std::shared_ptr<Transport> client_transport = nullptr,
               std::shared_ptr<Transport> judge_transport = nullptr);

  AppConfig config;
  std::shared_ptr<CorpusStore> store;
  std::shared_ptr<PromptComposer> composer;
  EvalTemplates eval_templates;
  StrategyMap strategies;
  std::shared_ptr<Transport> client_transport;
  std::shared_ptr<Transport> judge_transport;
  std::shared_ptr<Gateway> gateway;
  std::shared_ptr<Gateway> judge;
  std::unique_ptr<SessionEngine> engine;
};

StrategyMap load_strategy_map(const AppConfig& config);

// Mock judge used by --mock: option letters and label codes derived from the
// prompt hash.
MockTransport::Responder mock_judge_responder();

// Source sessions for discrimination tasks: human from the stored dialogues,
// LLM settings from the persisted session logs.
SessionsBySource collect_sources(const CorpusStore& store,
                                 const std::filesystem::path& sessions_dir);

std::vector<Session> load_sessions(const std::filesystem::path& sessions_dir);

}  // namespace trajsim
