#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "trajsim/behavior.hpp"
#include "trajsim/corpus.hpp"
#include "trajsim/gateway.hpp"
#include "trajsim/prompt.hpp"
#include "trajsim/session.hpp"

namespace trajsim::testing {

std::filesystem::path source_dir();
std::filesystem::path templates_dir();
std::filesystem::path config_dir();
std::filesystem::path fixtures_dir();
std::filesystem::path goldens_dir();

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The shipped synthetic corpus, parsed once.
const std::vector<AnnotatedDialogue>& fixture_dialogues();
const std::vector<ClientProfile>& fixture_profiles();
const AnonymizerConfig& default_anonymizer();

// In-memory store holding the fixture profiles, every dialogue, and the
// retained trajectories t1..t324.
std::shared_ptr<CorpusStore> fixture_store();

StrategyMap default_strategy_map();
std::shared_ptr<PromptComposer> default_composer();

// Trajectory with one exemplar per turn ("exemplar 1", ...).
Trajectory make_trajectory(const std::string& id,
                           const std::vector<std::vector<BehaviorLabel>>& turns);

// Random non-empty ordered label list of length 1..max_len.
std::vector<BehaviorLabel> random_labels(std::mt19937_64& rng, std::size_t max_len = 4);
Trajectory random_trajectory(std::mt19937_64& rng, const std::string& id, std::size_t length);

// Gateway over a mock transport with a no-op sleeper.
struct MockGateway {
  std::shared_ptr<MockTransport> transport;
  std::shared_ptr<Gateway> gateway;
};
MockGateway mock_gateway(MockTransport::Responder responder = counting_responder(),
                         BackendConfig config = {}, GatewayOptions options = {});

// Session engine over the fixture store and a counting mock.
struct EngineRig {
  std::shared_ptr<CorpusStore> store;
  MockGateway mock;
  std::unique_ptr<SessionEngine> engine;
};
EngineRig make_engine(StrategyMap strategies = default_strategy_map(),
                      EngineOptions options = {},
                      std::shared_ptr<CorpusStore> store = nullptr);

// Fixed clock so transcripts and logs do not depend on wall time.
std::function<std::string()> fixed_clock();

}  // namespace trajsim::testing
