#include "trajsim/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

namespace {

constexpr std::array<IdentifierClass, 5> kAllClasses = {
    IdentifierClass::kName, IdentifierClass::kPlace, IdentifierClass::kOrg,
    IdentifierClass::kPhone, IdentifierClass::kDate};

IdentifierClass parse_identifier_class(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "name") return IdentifierClass::kName;
  if (n == "place") return IdentifierClass::kPlace;
  if (n == "org") return IdentifierClass::kOrg;
  if (n == "phone") return IdentifierClass::kPhone;
  if (n == "date") return IdentifierClass::kDate;
  throw Error(Errc::kInvalidRule, "unknown identifier class: " + std::string(name));
}

void reject_placeholder_matches(const AnonymizerRule& rule) {
  for (auto cls : kAllClasses) {
    const std::string ph(placeholder(cls));
    bool hit = false;
    if (rule.is_regex) {
      hit = std::regex_search(ph, rule.compiled);
    } else {
      hit = std::any_of(rule.literals.begin(), rule.literals.end(),
                        [&](const std::string& lit) {
                          return ph.find(lit) != std::string::npos ||
                                 lit.find('{') != std::string::npos ||
                                 lit.find('}') != std::string::npos;
                        });
    }
    if (hit) {
      throw Error(Errc::kInvalidRule,
                  "rule '" + (rule.is_regex ? rule.pattern : text::join(rule.literals, ",")) +
                      "' matches placeholder " + ph);
    }
  }
}

bool is_required_section(std::string_view name) {
  return std::find(kRequiredProfileSections.begin(), kRequiredProfileSections.end(),
                   name) != kRequiredProfileSections.end();
}

bool is_known_section(std::string_view name) {
  return is_required_section(name) ||
         std::find(kOptionalProfileSections.begin(), kOptionalProfileSections.end(),
                   name) != kOptionalProfileSections.end();
}

}  // namespace

std::string_view placeholder(IdentifierClass cls) {
  switch (cls) {
    case IdentifierClass::kName: return "{NAME}";
    case IdentifierClass::kPlace: return "{PLACE}";
    case IdentifierClass::kOrg: return "{ORG}";
    case IdentifierClass::kPhone: return "{PHONE}";
    case IdentifierClass::kDate: return "{DATE}";
  }
  return "{?}";
}

void AnonymizerConfig::add_literal(IdentifierClass cls,
                                   std::vector<std::string> entries) {
  AnonymizerRule rule;
  rule.cls = cls;
  entries.erase(std::remove_if(entries.begin(), entries.end(),
                               [](const std::string& e) { return e.empty(); }),
                entries.end());
  if (entries.empty()) throw Error(Errc::kInvalidRule, "empty literal rule");
  // Longest entries first so "Ms. Lin" wins over a shorter overlapping entry.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const std::string& a, const std::string& b) {
                     return a.size() > b.size();
                   });
  rule.literals = std::move(entries);
  reject_placeholder_matches(rule);
  rules_.push_back(std::move(rule));
}

void AnonymizerConfig::add_regex(IdentifierClass cls, const std::string& pattern) {
  AnonymizerRule rule;
  rule.cls = cls;
  rule.is_regex = true;
  rule.pattern = pattern;
  try {
    rule.compiled = std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(Errc::kInvalidRule, "malformed pattern '" + pattern + "': " + e.what());
  }
  if (std::regex_match(std::string(), rule.compiled)) {
    throw Error(Errc::kInvalidRule, "pattern '" + pattern + "' matches the empty string");
  }
  reject_placeholder_matches(rule);
  rules_.push_back(std::move(rule));
}

AnonymizerConfig AnonymizerConfig::parse(std::string_view content) {
  AnonymizerConfig config;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || text::starts_with(trimmed, "#")) continue;
    auto fields = text::split_any(trimmed, {"\t"});
    if (fields.size() != 3) {
      throw Error(Errc::kInvalidRule, "expected class<TAB>kind<TAB>pattern: " + line);
    }
    const auto cls = parse_identifier_class(fields[0]);
    const auto kind = text::to_lower_ascii(text::trim(fields[1]));
    if (kind == "regex") {
      config.add_regex(cls, fields[2]);
    } else if (kind == "literal") {
      std::vector<std::string> entries;
      for (const auto& e : text::split_any(fields[2], {","})) {
        entries.emplace_back(text::trim(e));
      }
      config.add_literal(cls, std::move(entries));
    } else {
      throw Error(Errc::kInvalidRule, "unknown rule kind: " + fields[1]);
    }
  }
  return config;
}

AnonymizerConfig AnonymizerConfig::load(const std::filesystem::path& path) {
  return parse(text::read_file(path));
}

std::string anonymize(std::string_view utterance, const AnonymizerConfig& config) {
  std::string out(utterance);
  for (const auto& rule : config.rules()) {
    const std::string ph(placeholder(rule.cls));
    if (rule.is_regex) {
      out = std::regex_replace(out, rule.compiled, ph);
      continue;
    }
    for (const auto& lit : rule.literals) {
      std::string next;
      std::size_t pos = 0;
      for (auto hit = out.find(lit); hit != std::string::npos;
           hit = out.find(lit, pos)) {
        next.append(out, pos, hit - pos);
        next += ph;
        pos = hit + lit.size();
      }
      next.append(out, pos, std::string::npos);
      out = std::move(next);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::string* ClientProfile::section(std::string_view name) const {
  for (const auto& [k, v] : sections) {
    if (k == name) return &v;
  }
  return nullptr;
}

void ClientProfile::validate(const std::set<std::string>& topics) const {
  if (id.empty()) throw Error(Errc::kMissingField, "profile id is empty");
  for (auto name : kRequiredProfileSections) {
    const auto* s = section(name);
    if (s == nullptr || text::trim(*s).empty()) {
      throw Error(Errc::kMissingField,
                  "profile " + id + ": required section " + std::string(name) +
                      " missing or empty");
    }
  }
  for (const auto& [name, body] : sections) {
    if (!is_known_section(name)) {
      throw Error(Errc::kInvalidArgument, "profile " + id + ": unknown section " + name);
    }
  }
  if (char_count != text::codepoint_count(raw_text)) {
    throw Error(Errc::kInvalidArgument, "profile " + id + ": char_count mismatch");
  }
  if (!topics.empty() && topics.count(topic) == 0) {
    throw Error(Errc::kInvalidArgument, "profile " + id + ": topic not in catalog: " + topic);
  }
}

ClientProfile make_profile(std::string id, std::string topic,
                           std::vector<std::pair<std::string, std::string>> sections) {
  ClientProfile p;
  p.id = std::move(id);
  p.topic = std::move(topic);
  std::vector<std::string> bodies;
  for (const auto& [name, body] : sections) bodies.push_back(body);
  p.raw_text = text::join(bodies, "\n");
  p.char_count = text::codepoint_count(p.raw_text);
  p.sections = std::move(sections);
  return p;
}

Json to_json(const ClientProfile& profile) {
  Json sections = Json::object();
  for (const auto& [k, v] : profile.sections) sections[k] = v;
  return Json{{"id", profile.id},
              {"topic", profile.topic},
              {"sections", std::move(sections)},
              {"raw_text", profile.raw_text},
              {"char_count", profile.char_count}};
}

ClientProfile profile_from_json(const Json& j) {
  ClientProfile p;
  try {
    p.id = j.at("id").get<std::string>();
    p.topic = j.value("topic", "");
    for (const auto& [k, v] : j.at("sections").items()) {
      p.sections.emplace_back(k, v.get<std::string>());
    }
    p.raw_text = j.at("raw_text").get<std::string>();
    p.char_count = j.contains("char_count") ? j["char_count"].get<std::size_t>()
                                            : text::codepoint_count(p.raw_text);
  } catch (const Json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("bad profile record: ") + e.what());
  }
  p.validate();
  return p;
}

std::set<std::string> load_topic_catalog(const std::filesystem::path& path) {
  std::set<std::string> out;
  std::istringstream in(text::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (!t.empty() && !text::starts_with(t, "#")) out.emplace(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view speaker_name(Speaker s) {
  return s == Speaker::kCounselor ? "counselor" : "client";
}

Speaker parse_speaker(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "counselor") return Speaker::kCounselor;
  if (n == "client") return Speaker::kClient;
  throw Error(Errc::kInvalidArgument, "unknown speaker: " + std::string(name));
}

void AnnotatedDialogue::validate() const {
  for (std::size_t i = 1; i < turns.size(); ++i) {
    if (turns[i].speaker == turns[i - 1].speaker) {
      throw Error(Errc::kAlternationError,
                  "dialogue " + id + ": turns " + std::to_string(i) + " and " +
                      std::to_string(i + 1) + " have the same speaker");
    }
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].speaker != Speaker::kClient) continue;
    try {
      if (!turns[i].labels) throw Error(Errc::kEmptySet, "missing annotation");
      parse_behavior_codes(*turns[i].labels, Locale::kZh);
    } catch (const Error& e) {
      throw Error(Errc::kLabelParseError, "dialogue " + id + ": turn " +
                                              std::to_string(i + 1) + ": " + e.what());
    }
  }
}

Json to_json(const AnnotatedDialogue& dialogue) {
  Json turns = Json::array();
  for (const auto& t : dialogue.turns) {
    Json turn{{"speaker", std::string(speaker_name(t.speaker))},
              {"utterance", t.utterance}};
    turn["labels"] = t.labels ? Json(*t.labels) : Json(nullptr);
    turns.push_back(std::move(turn));
  }
  return Json{{"id", dialogue.id},
              {"turns", std::move(turns)},
              {"turn_count", dialogue.turn_count()}};
}

AnnotatedDialogue dialogue_from_json(const Json& j) {
  AnnotatedDialogue d;
  try {
    d.id = j.at("id").get<std::string>();
    for (const auto& t : j.at("turns")) {
      DialogueTurn turn;
      turn.speaker = parse_speaker(t.at("speaker").get<std::string>());
      turn.utterance = t.at("utterance").get<std::string>();
      if (t.contains("labels") && !t["labels"].is_null()) {
        turn.labels = t["labels"].get<std::string>();
      }
      d.turns.push_back(std::move(turn));
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("bad dialogue record: ") + e.what());
  }
  if (j.contains("turn_count") && j["turn_count"].get<std::size_t>() != d.turns.size()) {
    throw Error(Errc::kInvalidArgument, "dialogue " + d.id + ": turn_count mismatch");
  }
  return d;
}

IngestOutcome ingest_dialogue(const AnnotatedDialogue& dialogue,
                              const AnonymizerConfig& anonymizer,
                              std::size_t min_turns,
                              std::optional<std::string> trajectory_id) {
  dialogue.validate();
  if (dialogue.turn_count() < min_turns) {
    return Rejected{"too_short", dialogue.turn_count()};
  }
  Trajectory trajectory;
  trajectory.id = trajectory_id.value_or(dialogue.id);
  trajectory.source_dialogue_id = dialogue.id;
  const DialogueTurn* previous_counselor = nullptr;
  for (const auto& turn : dialogue.turns) {
    if (turn.speaker == Speaker::kCounselor) {
      previous_counselor = &turn;
      continue;
    }
    TrajectoryTurn tt;
    tt.index_t = static_cast<int>(trajectory.turns.size() + 1);
    tt.behavior_set = parse_behavior_codes(*turn.labels, Locale::kZh);
    tt.content_exemplar = anonymize(turn.utterance, anonymizer);
    if (previous_counselor != nullptr) {
      tt.original_counselor_context = anonymize(previous_counselor->utterance, anonymizer);
    }
    previous_counselor = nullptr;
    trajectory.turns.push_back(std::move(tt));
  }
  trajectory.validate();
  return trajectory;
}

IngestSummary ingest_corpus(const std::vector<AnnotatedDialogue>& dialogues,
                            const AnonymizerConfig& anonymizer,
                            std::size_t min_turns) {
  IngestSummary summary;
  for (const auto& d : dialogues) {
    const auto next_id = "t" + std::to_string(summary.trajectories.size() + 1);
    auto outcome = ingest_dialogue(d, anonymizer, min_turns, next_id);
    if (auto* t = std::get_if<Trajectory>(&outcome)) {
      summary.trajectories.push_back(std::move(*t));
    } else {
      summary.rejected.emplace_back(d.id, std::get<Rejected>(outcome));
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------

std::uint64_t instance_space(std::uint64_t profiles, std::uint64_t trajectories) {
  return profiles * trajectories;
}

std::vector<ClientInstance> enumerate_instances(
    const std::vector<std::string>& profile_ids,
    const std::vector<std::string>& trajectory_ids, Page page) {
  std::vector<ClientInstance> out;
  const std::size_t total = profile_ids.size() * trajectory_ids.size();
  const std::size_t end = std::min(total, page.offset + page.limit);
  for (std::size_t k = page.offset; k < end; ++k) {
    out.push_back({profile_ids[k / trajectory_ids.size()],
                   trajectory_ids[k % trajectory_ids.size()]});
  }
  return out;
}

// ---------------------------------------------------------------------------

CorpusStats corpus_stats(const std::vector<ClientProfile>& profiles) {
  if (profiles.empty()) throw Error(Errc::kEmptyCorpus, "no profiles");
  CorpusStats s;
  s.count = profiles.size();
  std::vector<double> lengths;
  for (const auto& p : profiles) lengths.push_back(static_cast<double>(p.char_count));
  const auto [lo, hi] = std::minmax_element(lengths.begin(), lengths.end());
  s.min_chars = static_cast<std::size_t>(*lo);
  s.max_chars = static_cast<std::size_t>(*hi);
  s.mean_chars = std::accumulate(lengths.begin(), lengths.end(), 0.0) /
                 static_cast<double>(s.count);
  if (s.count == 1) {
    s.degenerate = true;
  } else {
    double ss = 0.0;
    for (double x : lengths) ss += (x - s.mean_chars) * (x - s.mean_chars);
    s.sd_chars = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  s.count_over_2000 = static_cast<std::size_t>(std::count_if(
      profiles.begin(), profiles.end(),
      [](const ClientProfile& p) { return p.char_count > 2000; }));
  return s;
}

Json to_json(const CorpusStats& stats) {
  return Json{{"count", stats.count},
              {"min_chars", stats.min_chars},
              {"max_chars", stats.max_chars},
              {"mean_chars", stats.mean_chars},
              {"sd_chars", stats.sd_chars},
              {"count_over_2000", stats.count_over_2000},
              {"degenerate", stats.degenerate}};
}

// ---------------------------------------------------------------------------

CorpusStore::CorpusStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  namespace fs = std::filesystem;
  if (fs::exists(*dir_ / "profiles.jsonl")) {
    for (const auto& j : jsonl::read(*dir_ / "profiles.jsonl")) {
      auto p = profile_from_json(j);
      if (profiles_.count(p.id) == 0) profile_order_.push_back(p.id);
      profiles_[p.id] = std::move(p);
    }
  }
  if (fs::exists(*dir_ / "trajectories.jsonl")) {
    for (const auto& j : jsonl::read(*dir_ / "trajectories.jsonl")) {
      auto t = trajectory_from_json(j);
      if (trajectories_.count(t.id) == 0) trajectory_order_.push_back(t.id);
      trajectories_[t.id] = std::move(t);
    }
  }
  if (fs::exists(*dir_ / "dialogues.jsonl")) {
    for (const auto& j : jsonl::read(*dir_ / "dialogues.jsonl")) {
      dialogues_.push_back(dialogue_from_json(j));
    }
  }
}

void CorpusStore::add_profile(const ClientProfile& profile) {
  profile.validate();
  std::unique_lock lock(mu_);
  if (dir_) jsonl::append(*dir_ / "profiles.jsonl", to_json(profile));
  if (profiles_.count(profile.id) == 0) profile_order_.push_back(profile.id);
  profiles_[profile.id] = profile;
}

void CorpusStore::add_dialogue(const AnnotatedDialogue& dialogue) {
  std::unique_lock lock(mu_);
  if (dir_) jsonl::append(*dir_ / "dialogues.jsonl", to_json(dialogue));
  dialogues_.push_back(dialogue);
}

void CorpusStore::add_trajectory(const Trajectory& trajectory) {
  trajectory.validate();
  std::unique_lock lock(mu_);
  if (dir_) jsonl::append(*dir_ / "trajectories.jsonl", to_json(trajectory));
  if (trajectories_.count(trajectory.id) == 0) trajectory_order_.push_back(trajectory.id);
  trajectories_[trajectory.id] = trajectory;
}

std::optional<ClientProfile> CorpusStore::profile(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto it = profiles_.find(id);
  if (it == profiles_.end()) return std::nullopt;
  return it->second;
}

std::optional<Trajectory> CorpusStore::trajectory(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto it = trajectories_.find(id);
  if (it == trajectories_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> CorpusStore::profile_ids() const {
  std::shared_lock lock(mu_);
  return profile_order_;
}

std::vector<std::string> CorpusStore::trajectory_ids() const {
  std::shared_lock lock(mu_);
  return trajectory_order_;
}

std::vector<ClientProfile> CorpusStore::profiles() const {
  std::shared_lock lock(mu_);
  std::vector<ClientProfile> out;
  for (const auto& id : profile_order_) out.push_back(profiles_.find(id)->second);
  return out;
}

std::vector<Trajectory> CorpusStore::trajectories() const {
  std::shared_lock lock(mu_);
  std::vector<Trajectory> out;
  for (const auto& id : trajectory_order_) out.push_back(trajectories_.find(id)->second);
  return out;
}

std::vector<AnnotatedDialogue> CorpusStore::dialogues() const {
  std::shared_lock lock(mu_);
  return dialogues_;
}

bool CorpusStore::resolves(const ClientInstance& instance) const {
  std::shared_lock lock(mu_);
  return profiles_.count(instance.profile_id) > 0 &&
         trajectories_.count(instance.trajectory_id) > 0;
}

}  // namespace trajsim
