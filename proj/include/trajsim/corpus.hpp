#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trajsim/behavior.hpp"
#include "trajsim/jsonl.hpp"

namespace trajsim {

// ---------------------------------------------------------------------------
// Anonymization

enum class IdentifierClass { kName, kPlace, kOrg, kPhone, kDate };

std::string_view placeholder(IdentifierClass cls);

struct AnonymizerRule {
  IdentifierClass cls = IdentifierClass::kName;
  bool is_regex = false;
  std::string pattern;                // regex source (regex rules)
  std::vector<std::string> literals;  // dictionary entries, longest first
  std::regex compiled;
};

class AnonymizerConfig {
 public:
  AnonymizerConfig() = default;

  // `class<TAB>kind<TAB>pattern` with kind in {literal, regex}. Throws
  // InvalidRule for unknown classes, malformed regexes, or rules that would
  // match a placeholder (which would break idempotence).
  static AnonymizerConfig load(const std::filesystem::path& path);
  static AnonymizerConfig parse(std::string_view content);

  void add_literal(IdentifierClass cls, std::vector<std::string> entries);
  void add_regex(IdentifierClass cls, const std::string& pattern);

  const std::vector<AnonymizerRule>& rules() const { return rules_; }

 private:
  std::vector<AnonymizerRule> rules_;
};

// Deterministic and idempotent; text matching no rule is returned unchanged.
std::string anonymize(std::string_view utterance, const AnonymizerConfig& config);

// ---------------------------------------------------------------------------
// Profiles

inline constexpr std::array<std::string_view, 4> kRequiredProfileSections = {
    "basic_info", "presenting_problem", "problem_development", "speaking_style"};
inline constexpr std::array<std::string_view, 6> kOptionalProfileSections = {
    "family_background", "relationships",    "physical_condition",
    "lifestyle",         "additional_issues", "intimacy_history"};

struct ClientProfile {
  std::string id;
  std::string topic;
  std::vector<std::pair<std::string, std::string>> sections;  // ordered
  std::string raw_text;
  std::size_t char_count = 0;

  const std::string* section(std::string_view name) const;
  // Checks required sections and the char_count invariant. When `topics` is
  // non-empty the topic must be one of them.
  void validate(const std::set<std::string>& topics = {}) const;
};

// Builds raw_text by concatenating sections and fills char_count.
ClientProfile make_profile(std::string id, std::string topic,
                           std::vector<std::pair<std::string, std::string>> sections);

Json to_json(const ClientProfile& profile);
ClientProfile profile_from_json(const Json& j);

std::set<std::string> load_topic_catalog(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Annotated dialogues and ingestion

enum class Speaker { kCounselor, kClient };

std::string_view speaker_name(Speaker s);
Speaker parse_speaker(std::string_view name);

struct DialogueTurn {
  Speaker speaker = Speaker::kCounselor;
  std::string utterance;
  std::optional<std::string> labels;  // raw annotation, client turns only
};

struct AnnotatedDialogue {
  std::string id;
  std::vector<DialogueTurn> turns;

  std::size_t turn_count() const { return turns.size(); }
  // Throws AlternationError or LabelParseError.
  void validate() const;
};

Json to_json(const AnnotatedDialogue& dialogue);
AnnotatedDialogue dialogue_from_json(const Json& j);

struct Rejected {
  std::string reason;  // "too_short"
  std::size_t turn_count = 0;
};

using IngestOutcome = std::variant<Trajectory, Rejected>;

inline constexpr std::size_t kDefaultMinTurns = 31;

// Retains dialogues with turn_count >= min_turns (default: strictly more than
// 30 turns, counting both speakers). The trajectory holds the client turns in
// order with parsed labels and anonymized exemplars.
IngestOutcome ingest_dialogue(const AnnotatedDialogue& dialogue,
                              const AnonymizerConfig& anonymizer,
                              std::size_t min_turns = kDefaultMinTurns,
                              std::optional<std::string> trajectory_id = {});

struct IngestSummary {
  std::vector<Trajectory> trajectories;
  std::vector<std::pair<std::string, Rejected>> rejected;  // dialogue id
};

// Batch ingestion; retained trajectories are numbered t1..tK.
IngestSummary ingest_corpus(const std::vector<AnnotatedDialogue>& dialogues,
                            const AnonymizerConfig& anonymizer,
                            std::size_t min_turns = kDefaultMinTurns);

// ---------------------------------------------------------------------------
// Instance space

struct ClientInstance {
  std::string profile_id;
  std::string trajectory_id;

  friend auto operator<=>(const ClientInstance&, const ClientInstance&) = default;
};

std::uint64_t instance_space(std::uint64_t profiles, std::uint64_t trajectories);

struct Page {
  std::size_t offset = 0;
  std::size_t limit = 100;
};

// Cartesian product in (profile, trajectory) order, paginated.
std::vector<ClientInstance> enumerate_instances(
    const std::vector<std::string>& profile_ids,
    const std::vector<std::string>& trajectory_ids, Page page);

// ---------------------------------------------------------------------------
// Corpus statistics

struct CorpusStats {
  std::size_t count = 0;
  std::size_t min_chars = 0;
  std::size_t max_chars = 0;
  double mean_chars = 0.0;
  double sd_chars = 0.0;  // sample (n-1); 0 with degenerate = true when n == 1
  std::size_t count_over_2000 = 0;
  bool degenerate = false;
};

CorpusStats corpus_stats(const std::vector<ClientProfile>& profiles);
Json to_json(const CorpusStats& stats);

// ---------------------------------------------------------------------------
// Store

/// Append-only JSONL persistence (`profiles.jsonl`, `dialogues.jsonl`,
/// `trajectories.jsonl`) with an in-memory index by id. One writer, many
/// readers; lookups return copies.
class CorpusStore {
 public:
  // In-memory only.
  CorpusStore() = default;
  // Loads whatever JSONL files exist under `dir`; additions append to them.
  explicit CorpusStore(std::filesystem::path dir);

  void add_profile(const ClientProfile& profile);
  void add_dialogue(const AnnotatedDialogue& dialogue);
  void add_trajectory(const Trajectory& trajectory);

  std::optional<ClientProfile> profile(std::string_view id) const;
  std::optional<Trajectory> trajectory(std::string_view id) const;
  std::vector<std::string> profile_ids() const;
  std::vector<std::string> trajectory_ids() const;
  std::vector<ClientProfile> profiles() const;
  std::vector<Trajectory> trajectories() const;
  std::vector<AnnotatedDialogue> dialogues() const;

  bool resolves(const ClientInstance& instance) const;

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::vector<std::string> profile_order_;
  std::vector<std::string> trajectory_order_;
  std::map<std::string, ClientProfile, std::less<>> profiles_;
  std::map<std::string, Trajectory, std::less<>> trajectories_;
  std::vector<AnnotatedDialogue> dialogues_;
};

}  // namespace trajsim
