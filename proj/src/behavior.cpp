#include "trajsim/behavior.hpp"

#include <algorithm>
#include <sstream>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

namespace {

std::string normalize_alias(std::string_view token) {
  return text::to_lower_ascii(text::trim(token));
}

std::vector<LabelInfo> builtin_infos() {
  return {
      {BehaviorLabel::kCo, "co", "Confirming", "认可",
       "The client understands or agrees with what the counselor has said.",
       "确认：来访者理解或同意咨询师的观点或表达。"},
      {BehaviorLabel::kGi, "gi", "Providing Information", "提供信息",
       "The client provides information according to the specific request of "
       "the counselor.",
       "提供信息：来访者根据咨询师的具体要求提供相关信息。"},
      {BehaviorLabel::kRr, "rr", "Reasonable Request", "合理的请求",
       "The client attempts to obtain clarification, understanding, "
       "information, or advice and opinions from the counselor.",
       "合理请求：来访者试图向咨询师寻求澄清、理解、信息、建议或意见。"},
      {BehaviorLabel::kEx, "ex", "Extending", "扩展",
       "The client not only agrees to the counselor’s intervention, but also "
       "provides a more in-depth description of the topic being discussed, "
       "including the client’s analysis, discussion, or reflection on his or "
       "her original cognition, thoughts, or behaviors.",
       "扩展：来访者不仅同意咨询师的介入，还进一步深入描述讨论的主题，包括对自身"
       "认知、想法或行为的分析、讨论或反思。"},
      {BehaviorLabel::kRe, "re", "Reformulating", "重构（重构观点或行为改变）",
       "The client responds to and introspects the counselor’s intervention "
       "while proposing his or her own perspectives, directions of thinking, "
       "or new behavioral patterns on current issues.",
       "重述与反思：来访者回应并反思咨询师的介入，同时提出自己的观点、思考方向或在"
       "当前问题上的新行为模式。"},
      {BehaviorLabel::kEc, "ec", "Expressing Confusion", "表达困惑",
       "The client expresses confusion or incomprehension of the counselor’s "
       "intervention or directly states that he or she has no way to answer "
       "or respond to the questions or interventions raised by the counselor.",
       "表达困惑：来访者对咨询师的介入表示困惑或不理解，或直接表明自己无法回答或回"
       "应咨询师提出的问题或干预。"},
      {BehaviorLabel::kDe, "de", "Defending", "防卫个人观点",
       "The client is stubborn about an experience, glorifies or makes "
       "unreasonable justifications for his or her own views, thoughts, "
       "feelings, or behaviors, and insists on seeing the experience from the "
       "original perspective.",
       "防御：来访者固守自身的经历，对自己的观点、想法、情感或行为进行美化或不合理"
       "的辩护，坚持以原有的视角看待问题。"},
      {BehaviorLabel::kSh, "sh", "Self-criticism or Hopelessness",
       "自我批评或无望",
       "The client falls into self-criticism or self-reproach, is engulfed in "
       "a state of desperation and expresses his or her inability to make "
       "changes.",
       "自我批评或绝望：来访者陷入自责或自我批评的状态，表现出绝望，并表达自己无法"
       "做出改变。"},
      {BehaviorLabel::kSt, "st", "Shifting Topics", "转移话题",
       "Faced with the intervention of the counselor, the client’s reply does "
       "not postpone the previous issue, but shifts to other issues.",
       "转换话题：面对咨询师的干预，来访者的回应并未延续先前话题，而是转向其他议题。"},
      {BehaviorLabel::kFd, "fd", "Focus Disconnection", "焦点分离",
       "The client disengages from what the counselor is discussing, focuses "
       "on stating issues of interest, and does not respond to the "
       "counselor’s intervention.",
       "焦点脱离：来访者脱离咨询师讨论的内容，专注于自己感兴趣的问题，而不回应咨询"
       "师的介入。"},
      {BehaviorLabel::kSa, "sa", "Sarcastic Answer", "讽刺性的回答",
       "The client expresses dissatisfaction with the counselor, and "
       "questions or ridicules the counselor’s intervention.",
       "讽刺回应：来访者对咨询师表达不满，并质疑或嘲讽咨询师的介入。"},
      {BehaviorLabel::kOt, "ot", "Other", "其他",
       "The client's utterance does not fit any other category, such as "
       "greetings, thanks, or small talk.",
       "其他：来访者的话语不属于以上任何类别，例如寒暄、致谢或闲聊。"},
  };
}

}  // namespace

Locale parse_locale(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "zh") return Locale::kZh;
  if (n == "en") return Locale::kEn;
  throw Error(Errc::kUnknownLocale, "unknown locale: " + std::string(name));
}

std::string_view locale_name(Locale locale) {
  return locale == Locale::kZh ? "zh" : "en";
}

LabelCatalog::LabelCatalog() {
  auto infos = builtin_infos();
  for (std::size_t i = 0; i < kLabelCount; ++i) infos_[i] = infos[i];
  for (const auto& info : infos_) {
    add_alias(info.code, info.label);
    add_alias(info.english_name, info.label);
    add_alias(info.chinese_name, info.label);
  }
  add_alias("pi", BehaviorLabel::kGi);
  add_alias("Giving Information", BehaviorLabel::kGi);
  add_alias("确认", BehaviorLabel::kCo);
  add_alias("合理请求", BehaviorLabel::kRr);
  add_alias("重构", BehaviorLabel::kRe);
  add_alias("重述与反思", BehaviorLabel::kRe);
  add_alias("防御", BehaviorLabel::kDe);
  add_alias("自我批评或绝望", BehaviorLabel::kSh);
  add_alias("Self-criticism", BehaviorLabel::kSh);
  add_alias("转换话题", BehaviorLabel::kSt);
  add_alias("Shifting Topic", BehaviorLabel::kSt);
  add_alias("焦点脱离", BehaviorLabel::kFd);
  add_alias("讽刺回应", BehaviorLabel::kSa);
}

const LabelCatalog& LabelCatalog::builtin() {
  static const LabelCatalog catalog;
  return catalog;
}

void LabelCatalog::add_alias(std::string_view alias, BehaviorLabel label) {
  aliases_[normalize_alias(alias)] = label;
}

LabelCatalog LabelCatalog::load(const std::filesystem::path& path) {
  LabelCatalog catalog;
  std::istringstream in(text::read_file(path));
  std::string line;
  std::set<BehaviorLabel> seen;
  while (std::getline(in, line)) {
    if (text::trim(line).empty() || text::starts_with(text::trim(line), "#")) {
      continue;
    }
    auto fields = text::split_any(line, {"\t"});
    if (fields.size() != 3) {
      throw Error(Errc::kInvalidConfig,
                  path.string() + ": expected code<TAB>english<TAB>chinese: " + line);
    }
    const auto code = normalize_alias(fields[0]);
    auto it = std::find_if(catalog.infos_.begin(), catalog.infos_.end(),
                           [&](const LabelInfo& i) { return i.code == code; });
    if (it == catalog.infos_.end()) {
      throw Error(Errc::kUnknownLabel, path.string() + ": unknown code " + fields[0]);
    }
    if (!seen.insert(it->label).second) {
      throw Error(Errc::kInvalidConfig, path.string() + ": duplicate code " + code);
    }
    it->english_name = std::string(text::trim(fields[1]));
    it->chinese_name = std::string(text::trim(fields[2]));
    catalog.add_alias(it->english_name, it->label);
    catalog.add_alias(it->chinese_name, it->label);
  }
  if (seen.size() != kLabelCount) {
    throw Error(Errc::kInvalidConfig,
                path.string() + ": expected 12 label records, got " +
                    std::to_string(seen.size()));
  }
  return catalog;
}

const LabelInfo& LabelCatalog::info(BehaviorLabel label) const {
  return infos_[static_cast<std::size_t>(label)];
}

std::string_view LabelCatalog::code(BehaviorLabel label) const {
  return info(label).code;
}

std::string_view LabelCatalog::display_name(BehaviorLabel label,
                                            Locale locale) const {
  const auto& i = info(label);
  return locale == Locale::kZh ? i.chinese_name : i.english_name;
}

std::optional<BehaviorLabel> LabelCatalog::resolve(std::string_view token) const {
  auto it = aliases_.find(normalize_alias(token));
  if (it == aliases_.end()) return std::nullopt;
  return it->second;
}

BehaviorSet BehaviorSet::from_labels(std::vector<BehaviorLabel> labels) {
  if (labels.empty()) throw Error(Errc::kEmptySet, "behavior set is empty");
  return BehaviorSet(std::move(labels));
}

BehaviorSet BehaviorSet::unchecked(std::vector<BehaviorLabel> labels) {
  return BehaviorSet(std::move(labels));
}

std::vector<BehaviorLabel> BehaviorSet::distinct() const {
  std::vector<BehaviorLabel> out = labels_;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string BehaviorSet::key() const {
  std::vector<std::string> codes;
  for (auto l : distinct()) {
    codes.emplace_back(LabelCatalog::builtin().code(l));
  }
  return text::join(codes, "+");
}

std::vector<std::string> BehaviorSet::codes() const {
  std::vector<std::string> out;
  for (auto l : labels_) out.emplace_back(LabelCatalog::builtin().code(l));
  return out;
}

std::string BehaviorSet::display(Locale locale, const LabelCatalog& catalog) const {
  std::vector<std::string> names;
  for (auto l : labels_) names.emplace_back(catalog.display_name(l, locale));
  return text::join(names, locale == Locale::kZh ? "，" : ", ");
}

BehaviorSet parse_behavior_codes(std::string_view raw, Locale /*locale*/,
                                 const LabelCatalog& catalog) {
  auto body = text::trim(raw);
  // A single wrapping pair, as in transcript annotations "（提供信息，认可）".
  for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"（", "）"},
                             {"(", ")"}}) {
    if (text::starts_with(body, open) && text::ends_with(body, close)) {
      body = text::trim(body.substr(open.size(), body.size() - open.size() - close.size()));
      break;
    }
  }
  std::vector<BehaviorLabel> labels;
  for (const auto& piece : text::split_any(body, {",", "，", "、", "+", ";", "；"})) {
    const auto token = text::trim(piece);
    if (token.empty()) continue;
    auto label = catalog.resolve(token);
    if (!label) {
      throw Error(Errc::kUnknownLabel, "unknown behavior label: " + std::string(token));
    }
    labels.push_back(*label);
  }
  if (labels.empty()) {
    throw Error(Errc::kEmptySet, "no behavior labels in '" + std::string(raw) + "'");
  }
  return BehaviorSet::from_labels(std::move(labels));
}

std::string serialize_behavior_codes(const BehaviorSet& set) {
  return text::join(set.codes(), ",");
}

std::uint64_t behavior_space_size(std::size_t alphabet_size) {
  if (alphabet_size >= 64) {
    throw Error(Errc::kInvalidArgument, "alphabet too large");
  }
  return (std::uint64_t{1} << alphabet_size) - 1;
}

void Trajectory::validate() const {
  if (turns.empty()) {
    throw Error(Errc::kInvalidArgument, "trajectory " + id + " has no turns");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].index_t != static_cast<int>(i + 1)) {
      throw Error(Errc::kInvalidArgument,
                  "trajectory " + id + ": turn index " +
                      std::to_string(turns[i].index_t) + " at position " +
                      std::to_string(i + 1));
    }
    if (turns[i].behavior_set.empty()) {
      throw Error(Errc::kEmptySet, "trajectory " + id + ": turn " +
                                       std::to_string(i + 1) + " has no labels");
    }
  }
}

Json to_json(const BehaviorSet& set) { return Json(set.codes()); }

BehaviorSet behavior_set_from_json(const Json& j, bool checked) {
  std::vector<BehaviorLabel> labels;
  for (const auto& code : j) {
    auto label = LabelCatalog::builtin().resolve(code.get<std::string>());
    if (!label) {
      throw Error(Errc::kUnknownLabel, "unknown behavior code: " + code.get<std::string>());
    }
    labels.push_back(*label);
  }
  return checked ? BehaviorSet::from_labels(std::move(labels))
                 : BehaviorSet::unchecked(std::move(labels));
}

Json to_json(const Trajectory& trajectory) {
  Json turns = Json::array();
  for (const auto& t : trajectory.turns) {
    Json turn{{"index_t", t.index_t},
              {"behavior_set", to_json(t.behavior_set)},
              {"content_exemplar", t.content_exemplar}};
    if (t.original_counselor_context) {
      turn["original_counselor_context"] = *t.original_counselor_context;
    } else {
      turn["original_counselor_context"] = nullptr;
    }
    turns.push_back(std::move(turn));
  }
  return Json{{"id", trajectory.id},
              {"source_dialogue_id", trajectory.source_dialogue_id},
              {"turns", std::move(turns)},
              {"length_T", trajectory.length()}};
}

Trajectory trajectory_from_json(const Json& j, bool checked) {
  Trajectory t;
  try {
    t.id = j.at("id").get<std::string>();
    t.source_dialogue_id = j.value("source_dialogue_id", t.id);
    for (const auto& turn : j.at("turns")) {
      TrajectoryTurn tt;
      tt.index_t = turn.at("index_t").get<int>();
      tt.behavior_set = behavior_set_from_json(turn.at("behavior_set"), checked);
      tt.content_exemplar = turn.value("content_exemplar", "");
      if (turn.contains("original_counselor_context") &&
          !turn["original_counselor_context"].is_null()) {
        tt.original_counselor_context =
            turn["original_counselor_context"].get<std::string>();
      }
      t.turns.push_back(std::move(tt));
    }
    if (checked && j.contains("length_T") &&
        j["length_T"].get<std::size_t>() != t.turns.size()) {
      throw Error(Errc::kInvalidArgument, "trajectory " + t.id + ": length_T mismatch");
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("bad trajectory record: ") + e.what());
  }
  if (checked) t.validate();
  return t;
}

StrategyCatalog::StrategyCatalog(std::vector<CounselorStrategy> strategies)
    : strategies_(std::move(strategies)) {
  std::set<std::string> seen;
  for (const auto& s : strategies_) {
    if (s.id.empty() || !seen.insert(s.id).second) {
      throw Error(Errc::kInvalidConfig, "duplicate or empty strategy id: " + s.id);
    }
  }
}

StrategyCatalog StrategyCatalog::load(const std::filesystem::path& path) {
  std::vector<CounselorStrategy> out;
  std::istringstream in(text::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || text::starts_with(trimmed, "#")) continue;
    auto fields = text::split_any(line, {"\t"});
    if (fields.size() != 3) {
      throw Error(Errc::kInvalidConfig,
                  path.string() + ": expected id<TAB>english<TAB>chinese: " + line);
    }
    out.push_back({std::string(text::trim(fields[0])),
                   std::string(text::trim(fields[1])),
                   std::string(text::trim(fields[2]))});
  }
  return StrategyCatalog(std::move(out));
}

bool StrategyCatalog::contains(std::string_view id) const {
  return std::any_of(strategies_.begin(), strategies_.end(),
                     [&](const CounselorStrategy& s) { return s.id == id; });
}

std::set<std::string> StrategyCatalog::ids() const {
  std::set<std::string> out;
  for (const auto& s : strategies_) out.insert(s.id);
  return out;
}

std::string_view policy_name(DefaultPolicy policy) {
  return policy == DefaultPolicy::kPermitAll ? "permit_all" : "reject_unmapped";
}

DefaultPolicy parse_policy(std::string_view name) {
  const auto n = text::trim(name);
  if (n == "permit_all") return DefaultPolicy::kPermitAll;
  if (n == "reject_unmapped") return DefaultPolicy::kRejectUnmapped;
  throw Error(Errc::kInvalidConfig, "unknown strategy policy: " + std::string(name));
}

StrategyMap::StrategyMap(StrategyCatalog catalog, DefaultPolicy policy)
    : catalog_(std::move(catalog)), policy_(policy) {
  if (policy_ == DefaultPolicy::kPermitAll && catalog_.all().empty()) {
    throw Error(Errc::kInvalidConfig, "permit_all requires a non-empty strategy catalog");
  }
}

StrategyMap StrategyMap::load(const std::filesystem::path& path,
                              StrategyCatalog catalog) {
  std::istringstream in(text::read_file(path));
  std::string line;
  DefaultPolicy policy = DefaultPolicy::kPermitAll;
  std::vector<std::pair<BehaviorSet, std::set<std::string>>> pending;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || text::starts_with(trimmed, "#")) continue;
    auto fields = text::split_any(trimmed, {"\t"});
    if (fields.size() != 2) {
      throw Error(Errc::kInvalidConfig, path.string() + ": malformed line: " + line);
    }
    if (fields[0] == "@policy") {
      policy = parse_policy(fields[1]);
      continue;
    }
    auto behaviors = parse_behavior_codes(fields[0], Locale::kEn);
    std::set<std::string> ids;
    for (const auto& id : text::split_any(fields[1], {","})) {
      if (!text::trim(id).empty()) ids.emplace(text::trim(id));
    }
    pending.emplace_back(std::move(behaviors), std::move(ids));
  }
  StrategyMap map(std::move(catalog), policy);
  for (auto& [behaviors, ids] : pending) map.set(behaviors, std::move(ids));
  return map;
}

void StrategyMap::set(const BehaviorSet& behaviors,
                      std::set<std::string> strategy_ids) {
  if (behaviors.empty()) {
    throw Error(Errc::kEmptySet, "strategy map key must be a non-empty behavior set");
  }
  if (strategy_ids.empty()) {
    throw Error(Errc::kInvalidConfig,
                "strategy set for " + behaviors.key() + " must be non-empty");
  }
  for (const auto& id : strategy_ids) {
    if (!catalog_.contains(id)) {
      throw Error(Errc::kInvalidConfig, "unknown strategy id: " + id);
    }
  }
  entries_[behaviors.key()] = std::move(strategy_ids);
}

std::set<std::string> StrategyMap::lookup(const BehaviorSet& behaviors) const {
  if (auto it = entries_.find(behaviors.key()); it != entries_.end()) {
    return it->second;
  }
  if (policy_ == DefaultPolicy::kPermitAll) return catalog_.ids();
  return {};
}

std::string_view failure_reason_name(FailureReason reason) {
  switch (reason) {
    case FailureReason::kEmptyBehaviorSet: return "empty_behavior_set";
    case FailureReason::kEmptyStrategySet: return "empty_strategy_set";
    case FailureReason::kEmptyTrajectory: return "empty_trajectory";
  }
  return "unknown";
}

RealizabilityReport verify_realizable(const Trajectory& trajectory,
                                      const StrategyMap& strategies) {
  RealizabilityReport report;
  if (trajectory.turns.empty()) {
    report.failing_turns.push_back({0, FailureReason::kEmptyTrajectory});
    return report;
  }
  std::vector<WalkStep> walk;
  walk.reserve(trajectory.turns.size());
  for (std::size_t i = 0; i < trajectory.turns.size(); ++i) {
    const int t = static_cast<int>(i + 1);
    const auto& behaviors = trajectory.turns[i].behavior_set;
    // Expressivity: some utterance realizes B_t only if B_t is non-empty.
    if (behaviors.empty()) {
      report.failing_turns.push_back({t, FailureReason::kEmptyBehaviorSet});
      continue;
    }
    // Executability: the counselor needs at least one admissible strategy.
    const auto admissible = strategies.lookup(behaviors);
    if (admissible.empty()) {
      report.failing_turns.push_back({t, FailureReason::kEmptyStrategySet});
      continue;
    }
    walk.push_back({t, behaviors, *admissible.begin()});
  }
  report.realizable = report.failing_turns.empty();
  if (report.realizable) report.walkthrough = std::move(walk);
  return report;
}

Json to_json(const RealizabilityReport& report) {
  Json failing = Json::array();
  for (const auto& f : report.failing_turns) {
    failing.push_back({{"index_t", f.index_t},
                       {"reason", std::string(failure_reason_name(f.reason))}});
  }
  Json j{{"realizable", report.realizable}, {"failing_turns", std::move(failing)}};
  if (report.walkthrough) {
    Json walk = Json::array();
    for (const auto& step : *report.walkthrough) {
      walk.push_back({{"t", step.t},
                      {"behavior_set", to_json(step.behavior_set)},
                      {"strategy_id", step.strategy_id}});
    }
    j["walkthrough"] = std::move(walk);
  } else {
    j["walkthrough"] = nullptr;
  }
  return j;
}

}  // namespace trajsim
