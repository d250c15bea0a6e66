#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "trajsim/behavior.hpp"
#include "trajsim/corpus.hpp"
#include "trajsim/gateway.hpp"
#include "trajsim/prompt.hpp"

namespace trajsim {

enum class SessionStatus { kActive, kTrajectoryDone, kFreeform, kClosed };

std::string_view status_name(SessionStatus status);
SessionStatus parse_status(std::string_view name);

struct SessionOptions {
  bool freeform_tail = false;
  int regenerate_on_mismatch = 0;  // extra generations when the count is off
  std::optional<std::size_t> history_max_chars;
  std::optional<Locale> locale;  // engine default when unset
};

struct SessionTurn {
  Speaker role = Speaker::kCounselor;
  std::string text;
  std::optional<BehaviorSet> behavior_set;  // client turns, behavior/full only
  std::optional<std::vector<std::string>> sentences;
  bool count_mismatch = false;
  std::optional<int> trajectory_index;
  std::optional<std::string> strategy_id;  // counselor turns
  // Generation audit, client turns only; not part of transcripts.
  std::optional<std::string> prompt_sha256;
  std::optional<double> latency_ms;
  std::optional<int> attempt_count;
  std::string created_at;
};

struct Session {
  std::string id;
  ClientInstance instance;
  PromptSetting setting = PromptSetting::kFull;
  Locale locale = Locale::kZh;
  SessionOptions options;
  int cursor_t = 1;
  std::size_t trajectory_length = 0;
  std::vector<SessionTurn> history;
  SessionStatus status = SessionStatus::kActive;
  std::string template_version;
  std::string created_at;
};

Json to_json(const SessionTurn& turn, bool with_audit = true);
SessionTurn session_turn_from_json(const Json& j);
Json to_json(const Session& session);

// Blind transcript: ordered turns with per-turn metadata, no id or
// timestamps. `redact` drops behavior labels and strategy ids.
Json transcript_document(const Session& session, bool redact);

struct EngineOptions {
  std::optional<std::filesystem::path> sessions_dir;  // sessions/<id>.jsonl
  Locale default_locale = Locale::kZh;
  std::function<std::string()> clock;  // default: UTC wall clock
};

/// Turn-by-turn driver pairing a human counselor with the simulated client.
///
/// Each session has its own mutex, so one counselor turn is in flight per
/// session while distinct sessions run concurrently.
class SessionEngine {
 public:
  SessionEngine(std::shared_ptr<const CorpusStore> store,
                std::shared_ptr<const PromptComposer> composer,
                std::shared_ptr<Gateway> gateway, StrategyMap strategies,
                EngineOptions options = {});

  // Throws UnknownProfile / UnknownTrajectory.
  Session create_session(const std::string& profile_id, const std::string& trajectory_id,
                         PromptSetting setting, SessionOptions options = {});

  // Appends the counselor turn and the generated client reply, returning the
  // reply. Gateway failures leave the session untouched.
  SessionTurn post_counselor_turn(const std::string& session_id, const std::string& text,
                                  std::optional<std::string> strategy_id = std::nullopt);

  void close_session(const std::string& session_id);

  Session session(const std::string& session_id) const;
  Json transcript(const std::string& session_id, bool redact) const;
  std::vector<std::string> session_ids() const;

  const StrategyMap& strategies() const { return strategies_; }
  const CorpusStore& store() const { return *store_; }
  const PromptComposer& composer() const { return *composer_; }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
  };

  std::shared_ptr<Entry> entry(const std::string& session_id) const;
  std::string now() const;
  void persist_header(const Session& s) const;
  void persist_turn(const Session& s, const SessionTurn& turn) const;
  void persist_status(const Session& s) const;
  void load_persisted();

  std::shared_ptr<const CorpusStore> store_;
  std::shared_ptr<const PromptComposer> composer_;
  std::shared_ptr<Gateway> gateway_;
  StrategyMap strategies_;
  EngineOptions options_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>, std::less<>> sessions_;
  std::vector<std::string> order_;
  int next_id_ = 1;
};

// Re-runs the counselor side of `recorded` on a fresh session and returns the
// new transcript; with a deterministic gateway it equals the recorded one.
Json replay_transcript(SessionEngine& engine, const Session& recorded, bool redact = false);

// Loads a session log written by the engine.
Session load_session_log(const std::filesystem::path& path);

}  // namespace trajsim
