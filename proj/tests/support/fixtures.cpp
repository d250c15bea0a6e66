#include "fixtures.hpp"

#include <atomic>
#include <chrono>

#include "trajsim/jsonl.hpp"

namespace trajsim::testing {

namespace fs = std::filesystem;

fs::path source_dir() { return TRAJSIM_SOURCE_DIR; }
fs::path templates_dir() { return source_dir() / "templates"; }
fs::path config_dir() { return source_dir() / "config"; }
fs::path fixtures_dir() { return source_dir() / "data" / "fixtures"; }
fs::path goldens_dir() { return source_dir() / "tests" / "goldens"; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("trajsim-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

const std::vector<AnnotatedDialogue>& fixture_dialogues() {
  static const auto dialogues = [] {
    std::vector<AnnotatedDialogue> out;
    for (const auto& j : jsonl::read(fixtures_dir() / "dialogues.jsonl")) {
      out.push_back(dialogue_from_json(j));
    }
    return out;
  }();
  return dialogues;
}

const std::vector<ClientProfile>& fixture_profiles() {
  static const auto profiles = [] {
    std::vector<ClientProfile> out;
    for (const auto& j : jsonl::read(fixtures_dir() / "profiles.jsonl")) {
      out.push_back(profile_from_json(j));
    }
    return out;
  }();
  return profiles;
}

const AnonymizerConfig& default_anonymizer() {
  static const auto config = AnonymizerConfig::load(config_dir() / "anonymizer.tsv");
  return config;
}

std::shared_ptr<CorpusStore> fixture_store() {
  static const auto summary = ingest_corpus(fixture_dialogues(), default_anonymizer());
  auto store = std::make_shared<CorpusStore>();
  for (const auto& p : fixture_profiles()) store->add_profile(p);
  for (const auto& d : fixture_dialogues()) store->add_dialogue(d);
  for (const auto& t : summary.trajectories) store->add_trajectory(t);
  return store;
}

StrategyMap default_strategy_map() {
  return StrategyMap::load(config_dir() / "strategy_map.tsv",
                           StrategyCatalog::load(config_dir() / "strategies.tsv"));
}

std::shared_ptr<PromptComposer> default_composer() {
  static const auto templates = TemplateSet::load(templates_dir());
  return std::make_shared<PromptComposer>(templates);
}

Trajectory make_trajectory(const std::string& id,
                           const std::vector<std::vector<BehaviorLabel>>& turns) {
  Trajectory t;
  t.id = id;
  t.source_dialogue_id = "d-" + id;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    TrajectoryTurn turn;
    turn.index_t = static_cast<int>(i + 1);
    turn.behavior_set = BehaviorSet::unchecked(turns[i]);
    turn.content_exemplar = "exemplar " + std::to_string(i + 1);
    t.turns.push_back(std::move(turn));
  }
  return t;
}

std::vector<BehaviorLabel> random_labels(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, kLabelCount - 1);
  std::vector<BehaviorLabel> out(len(rng));
  for (auto& l : out) l = kAllLabels[pick(rng)];
  return out;
}

Trajectory random_trajectory(std::mt19937_64& rng, const std::string& id, std::size_t length) {
  std::vector<std::vector<BehaviorLabel>> turns;
  for (std::size_t i = 0; i < length; ++i) turns.push_back(random_labels(rng));
  return make_trajectory(id, turns);
}

MockGateway mock_gateway(MockTransport::Responder responder, BackendConfig config,
                         GatewayOptions options) {
  MockGateway m;
  m.transport = std::make_shared<MockTransport>(std::move(responder));
  if (!options.sleeper) options.sleeper = [](std::chrono::milliseconds) {};
  m.gateway = std::make_shared<Gateway>(std::move(config), m.transport, std::move(options));
  return m;
}

std::function<std::string()> fixed_clock() {
  return [] { return std::string("2026-01-01T00:00:00Z"); };
}

EngineRig make_engine(StrategyMap strategies, EngineOptions options,
                      std::shared_ptr<CorpusStore> store) {
  EngineRig rig;
  rig.store = store ? std::move(store) : fixture_store();
  rig.mock = mock_gateway();
  if (!options.clock) options.clock = fixed_clock();
  rig.engine = std::make_unique<SessionEngine>(rig.store, default_composer(), rig.mock.gateway,
                                               std::move(strategies), std::move(options));
  return rig;
}

}  // namespace trajsim::testing
