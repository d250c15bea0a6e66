#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trajsim/behavior.hpp"
#include "trajsim/corpus.hpp"
#include "trajsim/gateway.hpp"
#include "trajsim/prompt.hpp"
#include "trajsim/session.hpp"
#include "trajsim/stats.hpp"

namespace trajsim {

// ---------------------------------------------------------------------------
// Sources and discrimination tasks

enum class Source { kHuman, kVanilla, kBehavior, kContent, kFull };

inline constexpr std::array<Source, 5> kAllSources = {
    Source::kHuman, Source::kVanilla, Source::kBehavior, Source::kContent, Source::kFull};

std::string_view source_name(Source source);
Source parse_source(std::string_view name);
Source source_for(PromptSetting setting);
bool is_llm_source(Source source);

enum class TaskKind { kTask1, kTask2 };

std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);
// task1: the four LLM settings; task2: those plus human.
std::vector<Source> task_sources(TaskKind kind);

inline constexpr std::size_t kSegmentTurns = 5;
inline constexpr std::size_t kDefaultQuota = 90;

struct SegmentTurn {
  Speaker role = Speaker::kCounselor;
  std::string text;
};

struct SourceSession {
  std::string ref;
  std::vector<SegmentTurn> turns;
};

using SessionsBySource = std::map<Source, std::vector<SourceSession>>;

SourceSession source_session(const AnnotatedDialogue& dialogue);
SourceSession source_session(const Session& session);

// Removes label annotations such as "（提供信息，认可）" or "(co, ex)" from
// the start or end of an utterance.
std::string strip_label_annotations(std::string_view text);

struct DiscriminationItem {
  std::string item_id;
  std::vector<SegmentTurn> segment;
  Source ground_truth_source = Source::kHuman;
  std::string session_ref;
  std::size_t window_start = 0;
};

struct DiscriminationTask {
  TaskKind kind = TaskKind::kTask1;
  std::size_t per_setting_quota = kDefaultQuota;
  std::uint64_t seed = 0;
  std::vector<DiscriminationItem> items;

  const DiscriminationItem* find(std::string_view item_id) const;
};

// Uniform integer in [0, n) from a 64-bit engine, identical on every
// standard library.
std::uint64_t bounded_random(std::mt19937_64& rng, std::uint64_t n);

// Samples `quota` sessions without replacement per source, one uniformly
// placed 5-turn window each, strips labels, shuffles, numbers item-0001...
// Throws InsufficientSessions when a source lacks eligible sessions.
DiscriminationTask build_task(const SessionsBySource& sessions, TaskKind kind,
                              std::size_t quota, std::uint64_t seed);

// `blind` omits ground truth and session refs (what judges get to see).
Json to_json(const DiscriminationItem& item, bool blind = false);
DiscriminationItem item_from_json(const Json& j);

// task.jsonl: a {"record":"task"} header line followed by one item per line.
void write_task(const std::filesystem::path& path, const DiscriminationTask& task);
DiscriminationTask read_task(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Judging

enum class JudgePass { kAFirst, kBFirst };
enum class Choice { kHuman, kLlm };

std::string_view pass_name(JudgePass pass);
JudgePass parse_pass(std::string_view name);
std::string_view choice_name(Choice choice);
Choice parse_choice(std::string_view name);

// A_first: A = human, B = LLM. B_first swaps them.
Choice choice_for_letter(char letter, JudgePass pass);

// First standalone 'A' or 'B' (no ASCII letter or digit on either side).
// Throws UnparseableVerdict.
char parse_option_letter(std::string_view reply);

struct JudgeVerdict {
  std::string item_id;
  JudgePass pass = JudgePass::kAFirst;
  std::optional<Choice> choice;  // empty: abstention
  std::string raw_option_letter;
  double latency_ms = 0.0;
  std::string rater_id;
  std::string raw_reply;

  bool abstained() const { return !choice.has_value(); }
};

Json to_json(const JudgeVerdict& verdict);
JudgeVerdict verdict_from_json(const Json& j);

/// Judge and classifier prompts: judge.<locale>.txt, classify.<locale>.txt.
class EvalTemplates {
 public:
  static EvalTemplates load(const std::filesystem::path& dir);

  const std::string& judge(Locale locale) const;
  const std::string& classify(Locale locale) const;
  const std::string& version() const { return version_; }

 private:
  std::map<std::pair<std::string, Locale>, std::string> templates_;
  std::string version_;
};

std::string render_judge_prompt(const DiscriminationItem& item, JudgePass pass, Locale locale,
                                const EvalTemplates& templates);

// Unparseable replies come back as abstentions with the raw reply kept.
JudgeVerdict judge_item(const DiscriminationItem& item, Gateway& judge, JudgePass pass,
                        Locale locale, const EvalTemplates& templates);

struct JudgeRunOptions {
  std::vector<JudgePass> passes = {JudgePass::kAFirst, JudgePass::kBFirst};
  Locale locale = Locale::kZh;
  int concurrency = 4;
};

// Judges every (item, pass) pair missing from `verdicts_path`, appending each
// verdict as it lands; returns all verdicts in the file afterwards.
std::vector<JudgeVerdict> run_judging(const DiscriminationTask& task, Gateway& judge,
                                      const EvalTemplates& templates,
                                      const std::filesystem::path& verdicts_path,
                                      const JudgeRunOptions& options = {});

std::vector<JudgeVerdict> read_verdicts(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Accuracy

struct PassAccuracy {
  std::size_t judged = 0;
  std::size_t correct = 0;
  std::size_t abstained = 0;
  std::optional<double> accuracy;  // empty when nothing was judged
  std::optional<double> confusion_rate;
};

struct SourceAccuracy {
  Source source = Source::kHuman;
  PassAccuracy a_first;
  PassAccuracy b_first;
  PassAccuracy pooled;
  double abstention_rate = 0.0;
  // Per-rater accuracy, then mean and sample SD across raters.
  std::size_t raters = 0;
  double rater_mean = 0.0;
  double rater_sd = 0.0;
};

struct AccuracyReport {
  std::vector<SourceAccuracy> rows;  // task source order
  std::size_t verdicts = 0;
  std::size_t abstentions = 0;
  double abstention_rate = 0.0;
};

// Throws MissingVerdicts when a task source has no parseable verdict.
AccuracyReport accuracy_report(const DiscriminationTask& task,
                               const std::vector<JudgeVerdict>& verdicts);

Json to_json(const AccuracyReport& report);

// ---------------------------------------------------------------------------
// Likert questionnaires

enum class Dimension {
  kFluency,
  kEmotion,
  kCoherence,
  kAppropriateness,
  kOverall,
  kListening,
  kQuestioning,
  kEmotionHandling,
  kTechniquePractice,
  kRecommendation,
};

enum class ResearchQuestion { kRq1, kRq3 };

std::string_view dimension_name(Dimension dimension);
Dimension parse_dimension(std::string_view name);
std::string_view rq_name(ResearchQuestion rq);
ResearchQuestion parse_rq(std::string_view name);
std::vector<Dimension> rq_dimensions(ResearchQuestion rq);

// Column order of the report tables.
inline constexpr std::array<PromptSetting, 4> kLikertSettingOrder = {
    PromptSetting::kVanilla, PromptSetting::kContent, PromptSetting::kBehavior,
    PromptSetting::kFull};

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 7;

struct LikertResponse {
  std::string rater_id;
  PromptSetting setting = PromptSetting::kFull;
  Dimension dimension = Dimension::kOverall;
  int score = 0;

  void validate() const;  // InvalidScore outside 1..7
};

Json to_json(const LikertResponse& response);
LikertResponse likert_from_json(const Json& j);

struct LikertCell {
  PromptSetting setting = PromptSetting::kVanilla;
  Dimension dimension = Dimension::kOverall;
  stats::Description description;
  std::optional<stats::UTestResult> test;  // vs reference; empty for the reference
  std::string mark;
};

struct LikertTable {
  ResearchQuestion rq = ResearchQuestion::kRq1;
  PromptSetting reference = PromptSetting::kFull;
  std::vector<LikertCell> cells;  // setting-major in kLikertSettingOrder

  const LikertCell& cell(PromptSetting setting, Dimension dimension) const;
};

// Throws EmptyCell when a (setting, dimension) pair has no responses.
LikertTable likert_report(const std::vector<LikertResponse>& responses, ResearchQuestion rq,
                          PromptSetting reference = PromptSetting::kFull,
                          stats::UTestMode mode = stats::UTestMode::kAuto);

Json to_json(const LikertTable& table);

// ---------------------------------------------------------------------------
// Behavioral adherence

std::string render_label_definitions(Locale locale,
                                     const LabelCatalog& catalog = LabelCatalog::builtin());

// Throws UnparseableVerdict when the reply yields no known labels.
BehaviorSet parse_classifier_reply(std::string_view reply);

BehaviorSet classify_behavior(const std::string& utterance, const std::string& history,
                              Gateway& judge, Locale locale, const EvalTemplates& templates);

double jaccard(const BehaviorSet& a, const BehaviorSet& b);

struct AdherenceTurn {
  int trajectory_index = 0;
  BehaviorSet planned = BehaviorSet::unchecked({});
  std::optional<BehaviorSet> classified;  // empty when the reply was unparseable
  bool exact_match = false;
  double jaccard = 0.0;
};

struct AdherenceReport {
  std::string session_id;
  std::vector<AdherenceTurn> turns;
  std::size_t unparseable = 0;
  double exact_match_rate = 0.0;
  double mean_jaccard = 0.0;
};

// Classifies every client turn that carries a planned behavior set.
AdherenceReport score_adherence(const Session& session, Gateway& judge,
                                const EvalTemplates& templates);

Json to_json(const AdherenceReport& report);

// ---------------------------------------------------------------------------
// Rendering

std::string accuracy_markdown(const AccuracyReport& report);
std::string accuracy_csv(const AccuracyReport& report);
std::string likert_markdown(const LikertTable& table);
std::string likert_csv(const LikertTable& table);

// "5.69 (0.75)" style cell: mean with sample SD, two decimals.
std::string format_mean_sd(const stats::Description& d);

}  // namespace trajsim
