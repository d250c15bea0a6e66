#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trajsim/jsonl.hpp"

namespace trajsim {

enum class Locale { kZh, kEn };

Locale parse_locale(std::string_view name);
std::string_view locale_name(Locale locale);

// The twelve atomic client behavior labels, in canonical order.
enum class BehaviorLabel : std::uint8_t {
  kCo,  // Confirming
  kGi,  // Providing Information
  kRr,  // Reasonable Request
  kEx,  // Extending
  kRe,  // Reformulating
  kEc,  // Expressing Confusion
  kDe,  // Defending
  kSh,  // Self-criticism or Hopelessness
  kSt,  // Shifting Topics
  kFd,  // Focus Disconnection
  kSa,  // Sarcastic Answer
  kOt,  // Other
};

inline constexpr std::size_t kLabelCount = 12;

inline constexpr std::array<BehaviorLabel, kLabelCount> kAllLabels = {
    BehaviorLabel::kCo, BehaviorLabel::kGi, BehaviorLabel::kRr,
    BehaviorLabel::kEx, BehaviorLabel::kRe, BehaviorLabel::kEc,
    BehaviorLabel::kDe, BehaviorLabel::kSh, BehaviorLabel::kSt,
    BehaviorLabel::kFd, BehaviorLabel::kSa, BehaviorLabel::kOt};

struct LabelInfo {
  BehaviorLabel label;
  std::string code;
  std::string english_name;
  std::string chinese_name;
  std::string definition_en;
  std::string definition_zh;
};

/// Display names, definitions and the alias table used by the label parser.
///
/// Every label resolves from its two-letter code, its English name
/// (case-insensitive) and its Chinese name. `pi` is accepted as an alias of
/// `gi`, and the heading variants used in the Chinese definition list resolve
/// to the same labels as the annotation keys.
class LabelCatalog {
 public:
  static const LabelCatalog& builtin();

  // Reads `code<TAB>english_name<TAB>chinese_name` records; the file must
  // cover exactly the twelve codes. Names replace the built-in display names
  // and are added as aliases.
  static LabelCatalog load(const std::filesystem::path& path);

  const LabelInfo& info(BehaviorLabel label) const;
  std::string_view code(BehaviorLabel label) const;
  std::string_view display_name(BehaviorLabel label, Locale locale) const;
  std::optional<BehaviorLabel> resolve(std::string_view token) const;

 private:
  LabelCatalog();
  void add_alias(std::string_view alias, BehaviorLabel label);

  std::array<LabelInfo, kLabelCount> infos_;
  std::map<std::string, BehaviorLabel, std::less<>> aliases_;
};

/// Ordered label list attached to one client turn. One sentence per listed
/// label; the distinct values form the set used for strategy lookup.
class BehaviorSet {
 public:
  static BehaviorSet from_labels(std::vector<BehaviorLabel> labels);
  // Skips the non-empty check. Used by the unchecked trajectory loader.
  static BehaviorSet unchecked(std::vector<BehaviorLabel> labels);

  const std::vector<BehaviorLabel>& labels() const { return labels_; }
  std::size_t sentence_count() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::vector<BehaviorLabel> distinct() const;
  // Order-insensitive key over distinct labels, e.g. "co+gi".
  std::string key() const;
  std::vector<std::string> codes() const;
  std::string display(Locale locale,
                      const LabelCatalog& catalog = LabelCatalog::builtin()) const;

  friend bool operator==(const BehaviorSet&, const BehaviorSet&) = default;

 private:
  explicit BehaviorSet(std::vector<BehaviorLabel> labels)
      : labels_(std::move(labels)) {}

  std::vector<BehaviorLabel> labels_;
};

// Accepts comma / full-width comma / 、 / + separated names or codes; a single
// pair of parentheses around the whole list is ignored.
BehaviorSet parse_behavior_codes(
    std::string_view raw, Locale locale,
    const LabelCatalog& catalog = LabelCatalog::builtin());

// Canonical serialization: ordered codes joined by ",".
std::string serialize_behavior_codes(const BehaviorSet& set);

// |P(A) \ {0}| for an alphabet of `alphabet_size` labels.
std::uint64_t behavior_space_size(std::size_t alphabet_size = kLabelCount);

struct TrajectoryTurn {
  int index_t = 0;
  BehaviorSet behavior_set = BehaviorSet::unchecked({});
  std::string content_exemplar;
  std::optional<std::string> original_counselor_context;
};

struct Trajectory {
  std::string id;
  std::string source_dialogue_id;
  std::vector<TrajectoryTurn> turns;

  std::size_t length() const { return turns.size(); }
  // Throws EmptySet / InvalidArgument when an invariant is broken.
  void validate() const;
};

Json to_json(const BehaviorSet& set);
BehaviorSet behavior_set_from_json(const Json& j, bool checked = true);
Json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const Json& j, bool checked = true);

struct CounselorStrategy {
  std::string id;
  std::string name;
  std::string chinese_name;
};

class StrategyCatalog {
 public:
  StrategyCatalog() = default;
  explicit StrategyCatalog(std::vector<CounselorStrategy> strategies);

  // Same record format as the label catalog: `id<TAB>english<TAB>chinese`.
  static StrategyCatalog load(const std::filesystem::path& path);

  const std::vector<CounselorStrategy>& all() const { return strategies_; }
  bool contains(std::string_view id) const;
  std::set<std::string> ids() const;

 private:
  std::vector<CounselorStrategy> strategies_;
};

enum class DefaultPolicy { kPermitAll, kRejectUnmapped };

std::string_view policy_name(DefaultPolicy policy);
DefaultPolicy parse_policy(std::string_view name);

/// The mapping from behavior sets to admissible counselor strategies.
class StrategyMap {
 public:
  StrategyMap(StrategyCatalog catalog, DefaultPolicy policy);

  // Map file lines: `<labels><TAB><id>,<id>`; `@policy<TAB>reject_unmapped`
  // switches the default policy; `#` starts a comment.
  static StrategyMap load(const std::filesystem::path& path,
                          StrategyCatalog catalog);

  void set(const BehaviorSet& behaviors, std::set<std::string> strategy_ids);
  std::set<std::string> lookup(const BehaviorSet& behaviors) const;

  DefaultPolicy policy() const { return policy_; }
  void set_policy(DefaultPolicy policy) { policy_ = policy; }
  const StrategyCatalog& catalog() const { return catalog_; }
  const std::map<std::string, std::set<std::string>>& entries() const {
    return entries_;
  }

 private:
  StrategyCatalog catalog_;
  DefaultPolicy policy_;
  std::map<std::string, std::set<std::string>> entries_;
};

enum class FailureReason { kEmptyBehaviorSet, kEmptyStrategySet, kEmptyTrajectory };

std::string_view failure_reason_name(FailureReason reason);

struct TurnFailure {
  int index_t = 0;
  FailureReason reason = FailureReason::kEmptyBehaviorSet;

  friend bool operator==(const TurnFailure&, const TurnFailure&) = default;
};

struct WalkStep {
  int t = 0;
  BehaviorSet behavior_set = BehaviorSet::unchecked({});
  std::string strategy_id;
};

struct RealizabilityReport {
  bool realizable = false;
  std::vector<TurnFailure> failing_turns;
  std::optional<std::vector<WalkStep>> walkthrough;
};

// Executable form of the inductive realizability argument: every turn needs a
// non-empty behavior set and a non-empty strategy set. On success the report
// carries a witness walk choosing the lexicographically first strategy.
RealizabilityReport verify_realizable(const Trajectory& trajectory,
                                      const StrategyMap& strategies);

Json to_json(const RealizabilityReport& report);

}  // namespace trajsim
