#include "trajsim/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

// ---------------------------------------------------------------------------
// Sources and tasks

std::string_view source_name(Source source) {
  switch (source) {
    case Source::kHuman: return "human";
    case Source::kVanilla: return "vanilla";
    case Source::kBehavior: return "behavior";
    case Source::kContent: return "content";
    case Source::kFull: return "full";
  }
  return "unknown";
}

Source parse_source(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "human") return Source::kHuman;
  return source_for(parse_setting(n));
}

Source source_for(PromptSetting setting) {
  switch (setting) {
    case PromptSetting::kVanilla: return Source::kVanilla;
    case PromptSetting::kBehavior: return Source::kBehavior;
    case PromptSetting::kContent: return Source::kContent;
    case PromptSetting::kFull: return Source::kFull;
  }
  return Source::kFull;
}

bool is_llm_source(Source source) { return source != Source::kHuman; }

std::string_view task_kind_name(TaskKind kind) {
  return kind == TaskKind::kTask1 ? "task1" : "task2";
}

TaskKind parse_task_kind(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "task1" || n == "1") return TaskKind::kTask1;
  if (n == "task2" || n == "2") return TaskKind::kTask2;
  throw Error(Errc::kInvalidArgument, "unknown task kind: " + std::string(name));
}

std::vector<Source> task_sources(TaskKind kind) {
  if (kind == TaskKind::kTask1) {
    return {Source::kVanilla, Source::kBehavior, Source::kContent, Source::kFull};
  }
  return {kAllSources.begin(), kAllSources.end()};
}

namespace {

// Bracket pairs that may wrap a label annotation.
const std::vector<std::pair<std::string_view, std::string_view>> kBrackets = {
    {"（", "）"}, {"(", ")"}, {"【", "】"}, {"[", "]"}};

bool is_label_list(std::string_view inner) {
  if (text::trim(inner).empty()) return false;
  try {
    parse_behavior_codes(inner, Locale::kZh);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

std::string strip_label_annotations(std::string_view input) {
  std::string s(text::trim(input));
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    for (const auto& [open, close] : kBrackets) {
      if (text::starts_with(s, open)) {
        const auto end = s.find(close, open.size());
        if (end != std::string::npos &&
            is_label_list(std::string_view(s).substr(open.size(), end - open.size()))) {
          s = std::string(text::trim(std::string_view(s).substr(end + close.size())));
          changed = true;
          break;
        }
      }
      if (text::ends_with(s, close)) {
        const auto begin = s.rfind(open, s.size() - close.size());
        if (begin != std::string::npos) {
          const auto inner_start = begin + open.size();
          const auto inner = std::string_view(s).substr(inner_start, s.size() - close.size() - inner_start);
          if (is_label_list(inner)) {
            s = std::string(text::trim(std::string_view(s).substr(0, begin)));
            changed = true;
            break;
          }
        }
      }
    }
  }
  return s;
}

SourceSession source_session(const AnnotatedDialogue& dialogue) {
  SourceSession s{"dialogue:" + dialogue.id, {}};
  for (const auto& t : dialogue.turns) {
    s.turns.push_back({t.speaker, strip_label_annotations(t.utterance)});
  }
  return s;
}

SourceSession source_session(const Session& session) {
  SourceSession s{"session:" + session.id, {}};
  for (const auto& t : session.history) {
    s.turns.push_back({t.role, strip_label_annotations(t.text)});
  }
  return s;
}

const DiscriminationItem* DiscriminationTask::find(std::string_view item_id) const {
  for (const auto& item : items) {
    if (item.item_id == item_id) return &item;
  }
  return nullptr;
}

std::uint64_t bounded_random(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw Error(Errc::kInvalidArgument, "bounded_random(0)");
  // Reject the low values that would bias x % n.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % n;
  }
}

DiscriminationTask build_task(const SessionsBySource& sessions, TaskKind kind,
                              std::size_t quota, std::uint64_t seed) {
  if (quota == 0) throw Error(Errc::kInvalidArgument, "quota must be positive");
  DiscriminationTask task;
  task.kind = kind;
  task.per_setting_quota = quota;
  task.seed = seed;

  std::mt19937_64 rng(seed);
  for (const auto source : task_sources(kind)) {
    std::vector<const SourceSession*> eligible;
    if (auto it = sessions.find(source); it != sessions.end()) {
      for (const auto& s : it->second) {
        if (s.turns.size() >= kSegmentTurns) eligible.push_back(&s);
      }
    }
    if (eligible.size() < quota) {
      throw Error(Errc::kInsufficientSessions,
                  std::string(source_name(source)) + ": have " + std::to_string(eligible.size()) +
                      ", need " + std::to_string(quota));
    }
    // Partial Fisher-Yates: the first `quota` slots are the sample.
    for (std::size_t i = 0; i < quota; ++i) {
      const auto j = i + bounded_random(rng, eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
      const SourceSession& picked = *eligible[i];
      const auto windows = picked.turns.size() - kSegmentTurns + 1;
      const auto start = static_cast<std::size_t>(bounded_random(rng, windows));
      DiscriminationItem item;
      item.ground_truth_source = source;
      item.session_ref = picked.ref;
      item.window_start = start;
      for (std::size_t k = start; k < start + kSegmentTurns; ++k) {
        item.segment.push_back({picked.turns[k].role, strip_label_annotations(picked.turns[k].text)});
      }
      task.items.push_back(std::move(item));
    }
  }
  for (std::size_t i = task.items.size(); i > 1; --i) {
    const auto j = bounded_random(rng, i);
    std::swap(task.items[i - 1], task.items[j]);
  }
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "item-%04zu", i + 1);
    task.items[i].item_id = id;
  }
  return task;
}

Json to_json(const DiscriminationItem& item, bool blind) {
  Json segment = Json::array();
  for (const auto& t : item.segment) {
    segment.push_back(Json{{"role", std::string(speaker_name(t.role))}, {"text", t.text}});
  }
  Json j{{"item_id", item.item_id}, {"segment", std::move(segment)}};
  if (!blind) {
    j["ground_truth_source"] = std::string(source_name(item.ground_truth_source));
    j["session_ref"] = item.session_ref;
    j["window_start"] = item.window_start;
  }
  return j;
}

DiscriminationItem item_from_json(const Json& j) {
  DiscriminationItem item;
  item.item_id = j.at("item_id").get<std::string>();
  for (const auto& t : j.at("segment")) {
    item.segment.push_back({parse_speaker(t.at("role").get<std::string>()),
                            t.at("text").get<std::string>()});
  }
  item.ground_truth_source = parse_source(j.at("ground_truth_source").get<std::string>());
  item.session_ref = j.value("session_ref", "");
  item.window_start = j.value("window_start", std::size_t{0});
  return item;
}

void write_task(const std::filesystem::path& path, const DiscriminationTask& task) {
  std::vector<Json> records;
  records.push_back(Json{{"record", "task"},
                         {"task_kind", std::string(task_kind_name(task.kind))},
                         {"per_setting_quota", task.per_setting_quota},
                         {"seed", task.seed},
                         {"items", task.items.size()}});
  for (const auto& item : task.items) {
    Json j{{"record", "item"}};
    const Json body = to_json(item);
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    records.push_back(std::move(j));
  }
  jsonl::write(path, records);
}

DiscriminationTask read_task(const std::filesystem::path& path) {
  const auto records = jsonl::read(path);
  if (records.empty() || records.front().value("record", "") != "task") {
    throw Error(Errc::kIoError, path.string() + ": missing task header");
  }
  DiscriminationTask task;
  const auto& h = records.front();
  task.kind = parse_task_kind(h.at("task_kind").get<std::string>());
  task.per_setting_quota = h.at("per_setting_quota").get<std::size_t>();
  task.seed = h.at("seed").get<std::uint64_t>();
  for (std::size_t i = 1; i < records.size(); ++i) task.items.push_back(item_from_json(records[i]));
  return task;
}

// ---------------------------------------------------------------------------
// Judging

std::string_view pass_name(JudgePass pass) {
  return pass == JudgePass::kAFirst ? "A_first" : "B_first";
}

JudgePass parse_pass(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "a_first" || n == "a") return JudgePass::kAFirst;
  if (n == "b_first" || n == "b") return JudgePass::kBFirst;
  throw Error(Errc::kInvalidArgument, "unknown judge pass: " + std::string(name));
}

std::string_view choice_name(Choice choice) { return choice == Choice::kHuman ? "human" : "llm"; }

Choice parse_choice(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "human" || n == "h") return Choice::kHuman;
  if (n == "llm" || n == "l") return Choice::kLlm;
  throw Error(Errc::kInvalidArgument, "unknown choice: " + std::string(name));
}

Choice choice_for_letter(char letter, JudgePass pass) {
  const bool first_option = letter == 'A';
  if (letter != 'A' && letter != 'B') {
    throw Error(Errc::kUnparseableVerdict, std::string("not an option letter: ") + letter);
  }
  const bool human = pass == JudgePass::kAFirst ? first_option : !first_option;
  return human ? Choice::kHuman : Choice::kLlm;
}

char parse_option_letter(std::string_view reply) {
  auto is_word = [](char32_t c) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9');
  };
  std::vector<char32_t> cps;
  for (std::size_t pos = 0; pos < reply.size();) cps.push_back(text::next_codepoint(reply, pos));
  for (std::size_t i = 0; i < cps.size(); ++i) {
    char32_t c = cps[i];
    if (c == U'Ａ') c = U'A';
    if (c == U'Ｂ') c = U'B';
    if (c != U'A' && c != U'B') continue;
    if (i > 0 && is_word(cps[i - 1])) continue;
    if (i + 1 < cps.size() && is_word(cps[i + 1])) continue;
    return static_cast<char>(c);
  }
  throw Error(Errc::kUnparseableVerdict,
              "no standalone A/B in reply: " + std::string(reply.substr(0, 80)));
}

Json to_json(const JudgeVerdict& v) {
  Json j{{"item_id", v.item_id}, {"pass", std::string(pass_name(v.pass))}};
  j["choice"] = v.choice ? Json(std::string(choice_name(*v.choice))) : Json(nullptr);
  j["raw_option_letter"] = v.raw_option_letter;
  j["latency_ms"] = v.latency_ms;
  j["rater_id"] = v.rater_id;
  j["raw_reply"] = v.raw_reply;
  return j;
}

JudgeVerdict verdict_from_json(const Json& j) {
  JudgeVerdict v;
  v.item_id = j.at("item_id").get<std::string>();
  v.pass = parse_pass(j.at("pass").get<std::string>());
  if (j.contains("choice") && !j["choice"].is_null()) {
    v.choice = parse_choice(j["choice"].get<std::string>());
  }
  v.raw_option_letter = j.value("raw_option_letter", "");
  v.latency_ms = j.value("latency_ms", 0.0);
  v.rater_id = j.value("rater_id", "");
  v.raw_reply = j.value("raw_reply", "");
  return v;
}

EvalTemplates EvalTemplates::load(const std::filesystem::path& dir) {
  EvalTemplates t;
  std::string digest_input;
  for (const std::string kind : {"judge", "classify"}) {
    for (auto locale : {Locale::kZh, Locale::kEn}) {
      const auto name = kind + "." + std::string(locale_name(locale)) + ".txt";
      auto body = load_template_file(dir / name);
      digest_input += name + '\0' + body + '\0';
      t.templates_.emplace(std::make_pair(kind, locale), std::move(body));
    }
  }
  t.version_ = text::sha256_hex(digest_input).substr(0, 16);
  return t;
}

const std::string& EvalTemplates::judge(Locale locale) const {
  return templates_.at({"judge", locale});
}

const std::string& EvalTemplates::classify(Locale locale) const {
  return templates_.at({"classify", locale});
}

std::string render_judge_prompt(const DiscriminationItem& item, JudgePass pass, Locale locale,
                                const EvalTemplates& templates) {
  std::vector<HistoryTurn> turns;
  for (const auto& t : item.segment) turns.push_back({t.role, t.text});
  const std::string human = locale == Locale::kZh ? "真人来访者" : "A real human client";
  const std::string llm =
      locale == Locale::kZh ? "由大语言模型模拟的来访者" : "A client simulated by a language model";
  const bool a_human = pass == JudgePass::kAFirst;
  return interpolate(templates.judge(locale),
                     {{"dialogue_segment", render_history(turns, locale)},
                      {"option_a", a_human ? human : llm},
                      {"option_b", a_human ? llm : human}});
}

JudgeVerdict judge_item(const DiscriminationItem& item, Gateway& judge, JudgePass pass,
                        Locale locale, const EvalTemplates& templates) {
  const auto completion = judge.generate(render_judge_prompt(item, pass, locale, templates));
  JudgeVerdict v;
  v.item_id = item.item_id;
  v.pass = pass;
  v.latency_ms = completion.latency_ms;
  v.rater_id = completion.backend_id;
  v.raw_reply = completion.text;
  try {
    const char letter = parse_option_letter(completion.text);
    v.raw_option_letter = std::string(1, letter);
    v.choice = choice_for_letter(letter, pass);
  } catch (const Error& e) {
    if (e.code() != Errc::kUnparseableVerdict) throw;
  }
  return v;
}

std::vector<JudgeVerdict> read_verdicts(const std::filesystem::path& path) {
  std::vector<JudgeVerdict> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& j : jsonl::read(path)) out.push_back(verdict_from_json(j));
  return out;
}

std::vector<JudgeVerdict> run_judging(const DiscriminationTask& task, Gateway& judge,
                                      const EvalTemplates& templates,
                                      const std::filesystem::path& verdicts_path,
                                      const JudgeRunOptions& options) {
  std::set<std::pair<std::string, JudgePass>> done;
  for (const auto& v : read_verdicts(verdicts_path)) done.insert({v.item_id, v.pass});

  std::vector<std::pair<const DiscriminationItem*, JudgePass>> work;
  for (const auto& item : task.items) {
    for (auto pass : options.passes) {
      if (!done.count({item.item_id, pass})) work.emplace_back(&item, pass);
    }
  }

  std::mutex write_mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= work.size()) return;
      try {
        const auto v =
            judge_item(*work[i].first, judge, work[i].second, options.locale, templates);
        std::lock_guard lock(write_mu);
        jsonl::append(verdicts_path, to_json(v));
      } catch (...) {
        std::lock_guard lock(write_mu);
        if (!failure) failure = std::current_exception();
        next = work.size();
        return;
      }
    }
  };
  const auto threads =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.concurrency)), work.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return read_verdicts(verdicts_path);
}

// ---------------------------------------------------------------------------
// Accuracy

namespace {

void finish(PassAccuracy& p, bool llm_source) {
  if (p.judged == 0) return;
  p.accuracy = static_cast<double>(p.correct) / static_cast<double>(p.judged);
  if (llm_source) p.confusion_rate = 1.0 - *p.accuracy;
}

Json pass_json(const PassAccuracy& p) {
  Json j{{"judged", p.judged}, {"correct", p.correct}, {"abstained", p.abstained}};
  j["accuracy"] = p.accuracy ? Json(*p.accuracy) : Json(nullptr);
  j["confusion_rate"] = p.confusion_rate ? Json(*p.confusion_rate) : Json(nullptr);
  return j;
}

}  // namespace

AccuracyReport accuracy_report(const DiscriminationTask& task,
                               const std::vector<JudgeVerdict>& verdicts) {
  // Later verdicts for the same (item, pass, rater) replace earlier ones.
  std::map<std::tuple<std::string, JudgePass, std::string>, const JudgeVerdict*> latest;
  for (const auto& v : verdicts) {
    if (!task.find(v.item_id)) {
      throw Error(Errc::kInvalidArgument, "verdict for unknown item " + v.item_id);
    }
    latest[{v.item_id, v.pass, v.rater_id}] = &v;
  }

  AccuracyReport report;
  std::map<Source, SourceAccuracy> rows;
  std::map<Source, std::map<std::string, std::pair<std::size_t, std::size_t>>> per_rater;
  for (const auto source : task_sources(task.kind)) rows[source].source = source;

  for (const auto& [key, v] : latest) {
    const auto source = task.find(v->item_id)->ground_truth_source;
    auto& row = rows[source];
    auto& bucket = v->pass == JudgePass::kAFirst ? row.a_first : row.b_first;
    ++report.verdicts;
    if (v->abstained()) {
      ++bucket.abstained;
      ++row.pooled.abstained;
      ++report.abstentions;
      continue;
    }
    const bool correct = *v->choice == (is_llm_source(source) ? Choice::kLlm : Choice::kHuman);
    ++bucket.judged;
    ++row.pooled.judged;
    auto& rater = per_rater[source][v->rater_id];
    ++rater.second;
    if (correct) {
      ++bucket.correct;
      ++row.pooled.correct;
      ++rater.first;
    }
  }

  for (const auto source : task_sources(task.kind)) {
    auto& row = rows[source];
    if (row.pooled.judged == 0) {
      throw Error(Errc::kMissingVerdicts,
                  "no parseable verdicts for " + std::string(source_name(source)));
    }
    const bool llm = is_llm_source(source);
    finish(row.a_first, llm);
    finish(row.b_first, llm);
    finish(row.pooled, llm);
    row.abstention_rate = static_cast<double>(row.pooled.abstained) /
                          static_cast<double>(row.pooled.abstained + row.pooled.judged);
    std::vector<double> rater_acc;
    for (const auto& [id, counts] : per_rater[source]) {
      rater_acc.push_back(static_cast<double>(counts.first) / static_cast<double>(counts.second));
    }
    const auto d = stats::describe(rater_acc);
    row.raters = d.n;
    row.rater_mean = d.mean;
    row.rater_sd = d.sd_sample;
    report.rows.push_back(row);
  }
  report.abstention_rate = report.verdicts == 0 ? 0.0
                                                : static_cast<double>(report.abstentions) /
                                                      static_cast<double>(report.verdicts);
  return report;
}

Json to_json(const AccuracyReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    rows.push_back(Json{{"source", std::string(source_name(r.source))},
                        {"accuracy_A", pass_json(r.a_first)},
                        {"accuracy_B", pass_json(r.b_first)},
                        {"pooled", pass_json(r.pooled)},
                        {"abstention_rate", r.abstention_rate},
                        {"raters", r.raters},
                        {"rater_mean", r.rater_mean},
                        {"rater_sd", r.rater_sd}});
  }
  return Json{{"rows", std::move(rows)},
              {"verdicts", report.verdicts},
              {"abstentions", report.abstentions},
              {"abstention_rate", report.abstention_rate}};
}

// ---------------------------------------------------------------------------
// Likert

namespace {

constexpr std::array<std::pair<Dimension, std::string_view>, 10> kDimensionNames = {{
    {Dimension::kFluency, "fluency"},
    {Dimension::kEmotion, "emotion"},
    {Dimension::kCoherence, "coherence"},
    {Dimension::kAppropriateness, "appropriateness"},
    {Dimension::kOverall, "overall"},
    {Dimension::kListening, "listening"},
    {Dimension::kQuestioning, "questioning"},
    {Dimension::kEmotionHandling, "emotion_handling"},
    {Dimension::kTechniquePractice, "technique_practice"},
    {Dimension::kRecommendation, "recommendation"},
}};

}  // namespace

std::string_view dimension_name(Dimension dimension) {
  for (const auto& [d, name] : kDimensionNames) {
    if (d == dimension) return name;
  }
  return "unknown";
}

Dimension parse_dimension(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  for (const auto& [d, dn] : kDimensionNames) {
    if (dn == n) return d;
  }
  throw Error(Errc::kInvalidArgument, "unknown Likert dimension: " + std::string(name));
}

std::string_view rq_name(ResearchQuestion rq) { return rq == ResearchQuestion::kRq1 ? "RQ1" : "RQ3"; }

ResearchQuestion parse_rq(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "rq1" || n == "1") return ResearchQuestion::kRq1;
  if (n == "rq3" || n == "3") return ResearchQuestion::kRq3;
  throw Error(Errc::kInvalidArgument, "unknown research question: " + std::string(name));
}

std::vector<Dimension> rq_dimensions(ResearchQuestion rq) {
  if (rq == ResearchQuestion::kRq1) {
    return {Dimension::kFluency, Dimension::kEmotion, Dimension::kCoherence,
            Dimension::kAppropriateness, Dimension::kOverall};
  }
  return {Dimension::kListening, Dimension::kQuestioning, Dimension::kEmotionHandling,
          Dimension::kTechniquePractice, Dimension::kRecommendation};
}

void LikertResponse::validate() const {
  if (score < kLikertMin || score > kLikertMax) {
    throw Error(Errc::kInvalidScore, "score " + std::to_string(score) + " outside " +
                                         std::to_string(kLikertMin) + ".." +
                                         std::to_string(kLikertMax));
  }
}

Json to_json(const LikertResponse& r) {
  return Json{{"rater_id", r.rater_id},
              {"setting", std::string(setting_name(r.setting))},
              {"dimension", std::string(dimension_name(r.dimension))},
              {"score", r.score}};
}

LikertResponse likert_from_json(const Json& j) {
  LikertResponse r;
  r.rater_id = j.at("rater_id").get<std::string>();
  r.setting = parse_setting(j.at("setting").get<std::string>());
  r.dimension = parse_dimension(j.at("dimension").get<std::string>());
  if (!j.at("score").is_number_integer()) {
    throw Error(Errc::kInvalidScore, "score must be an integer");
  }
  r.score = j["score"].get<int>();
  r.validate();
  return r;
}

const LikertCell& LikertTable::cell(PromptSetting setting, Dimension dimension) const {
  for (const auto& c : cells) {
    if (c.setting == setting && c.dimension == dimension) return c;
  }
  throw Error(Errc::kEmptyCell, std::string(setting_name(setting)) + "/" +
                                    std::string(dimension_name(dimension)));
}

LikertTable likert_report(const std::vector<LikertResponse>& responses, ResearchQuestion rq,
                          PromptSetting reference, stats::UTestMode mode) {
  std::map<std::pair<PromptSetting, Dimension>, std::vector<double>> scores;
  for (const auto& r : responses) {
    r.validate();
    scores[{r.setting, r.dimension}].push_back(r.score);
  }
  auto values = [&](PromptSetting s, Dimension d) -> const std::vector<double>& {
    auto it = scores.find({s, d});
    if (it == scores.end() || it->second.empty()) {
      throw Error(Errc::kEmptyCell, std::string(setting_name(s)) + "/" +
                                        std::string(dimension_name(d)) + " has no responses");
    }
    return it->second;
  };

  LikertTable table;
  table.rq = rq;
  table.reference = reference;
  const auto dims = rq_dimensions(rq);
  for (const auto setting : kLikertSettingOrder) {
    for (const auto dim : dims) {
      LikertCell cell;
      cell.setting = setting;
      cell.dimension = dim;
      const auto& v = values(setting, dim);
      cell.description = stats::describe(v);
      if (setting != reference) {
        cell.test = stats::mann_whitney_u(v, values(reference, dim), mode);
        cell.mark = std::string(stats::mark_significance(cell.test->p_two_sided));
      }
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

Json to_json(const LikertTable& table) {
  Json cells = Json::array();
  for (const auto& c : table.cells) {
    Json j{{"setting", std::string(setting_name(c.setting))},
           {"dimension", std::string(dimension_name(c.dimension))},
           {"n", c.description.n},
           {"mean", c.description.mean},
           {"sd", c.description.sd_sample},
           {"degenerate", c.description.degenerate},
           {"mark", c.mark}};
    j["test"] = c.test ? stats::to_json(*c.test) : Json(nullptr);
    cells.push_back(std::move(j));
  }
  return Json{{"rq", std::string(rq_name(table.rq))},
              {"reference", std::string(setting_name(table.reference))},
              {"cells", std::move(cells)}};
}

// ---------------------------------------------------------------------------
// Adherence

std::string render_label_definitions(Locale locale, const LabelCatalog& catalog) {
  std::vector<std::string> lines;
  for (const auto label : kAllLabels) {
    const auto& info = catalog.info(label);
    if (locale == Locale::kZh) {
      lines.push_back("- " + info.code + "（" + info.chinese_name + "）：" + info.definition_zh);
    } else {
      lines.push_back("- " + info.code + " (" + info.english_name + "): " + info.definition_en);
    }
  }
  return text::join(lines, "\n");
}

BehaviorSet parse_classifier_reply(std::string_view reply) {
  std::string line;
  for (const auto& piece : text::split_any(reply, {"\n"})) {
    if (!text::trim(piece).empty()) {
      line = std::string(text::trim(piece));
      break;
    }
  }
  for (std::string_view prefix : {"labels:", "label:", "标签：", "标签:"}) {
    if (text::starts_with(text::to_lower_ascii(line), prefix)) {
      line = std::string(text::trim(std::string_view(line).substr(prefix.size())));
    }
  }
  while (text::ends_with(line, ".") || text::ends_with(line, "。")) {
    line.resize(line.size() - (text::ends_with(line, ".") ? 1 : std::string_view("。").size()));
  }
  if (line.empty()) throw Error(Errc::kUnparseableVerdict, "classifier reply is empty");
  try {
    return parse_behavior_codes(line, Locale::kEn);
  } catch (const Error& e) {
    throw Error(Errc::kUnparseableVerdict, std::string("classifier reply: ") + e.what());
  }
}

BehaviorSet classify_behavior(const std::string& utterance, const std::string& history,
                              Gateway& judge, Locale locale, const EvalTemplates& templates) {
  if (text::trim(utterance).empty()) throw Error(Errc::kInvalidArgument, "utterance is empty");
  const auto prompt = interpolate(templates.classify(locale),
                                  {{"label_definitions", render_label_definitions(locale)},
                                   {"dialogue_history", history},
                                   {"utterance", utterance}});
  return parse_classifier_reply(judge.generate(prompt).text);
}

double jaccard(const BehaviorSet& a, const BehaviorSet& b) {
  const auto da = a.distinct();
  const auto db = b.distinct();
  std::vector<BehaviorLabel> inter, uni;
  std::set_intersection(da.begin(), da.end(), db.begin(), db.end(), std::back_inserter(inter));
  std::set_union(da.begin(), da.end(), db.begin(), db.end(), std::back_inserter(uni));
  return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

AdherenceReport score_adherence(const Session& session, Gateway& judge,
                                const EvalTemplates& templates) {
  AdherenceReport report;
  report.session_id = session.id;
  std::vector<HistoryTurn> history;
  std::size_t matched = 0;
  double jaccard_sum = 0.0;
  for (const auto& t : session.history) {
    if (t.role == Speaker::kClient && t.behavior_set) {
      AdherenceTurn at;
      at.trajectory_index = t.trajectory_index.value_or(0);
      at.planned = *t.behavior_set;
      try {
        at.classified = classify_behavior(t.text, render_history(history, session.locale), judge,
                                          session.locale, templates);
        at.exact_match = at.classified->key() == at.planned.key();
        at.jaccard = jaccard(at.planned, *at.classified);
        matched += at.exact_match ? 1 : 0;
        jaccard_sum += at.jaccard;
      } catch (const Error& e) {
        if (e.code() != Errc::kUnparseableVerdict) throw;
        ++report.unparseable;
      }
      report.turns.push_back(std::move(at));
    }
    history.push_back({t.role, t.text});
  }
  const auto scored = report.turns.size() - report.unparseable;
  if (scored > 0) {
    report.exact_match_rate = static_cast<double>(matched) / static_cast<double>(scored);
    report.mean_jaccard = jaccard_sum / static_cast<double>(scored);
  }
  return report;
}

Json to_json(const AdherenceReport& report) {
  Json turns = Json::array();
  for (const auto& t : report.turns) {
    Json j{{"trajectory_index", t.trajectory_index}, {"planned", to_json(t.planned)}};
    j["classified"] = t.classified ? to_json(*t.classified) : Json(nullptr);
    j["exact_match"] = t.exact_match;
    j["jaccard"] = t.jaccard;
    turns.push_back(std::move(j));
  }
  return Json{{"session_id", report.session_id},
              {"turns", std::move(turns)},
              {"unparseable", report.unparseable},
              {"exact_match_rate", report.exact_match_rate},
              {"mean_jaccard", report.mean_jaccard}};
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

std::string setting_label(PromptSetting s) {
  switch (s) {
    case PromptSetting::kVanilla: return "vanilla";
    case PromptSetting::kBehavior: return "+behavior";
    case PromptSetting::kContent: return "+content";
    case PromptSetting::kFull: return "full";
  }
  return "";
}

}  // namespace

std::string format_mean_sd(const stats::Description& d) {
  return fixed(d.mean, 2) + " (" + fixed(d.sd_sample, 2) + ")";
}

std::string accuracy_markdown(const AccuracyReport& report) {
  std::ostringstream out;
  out << "| source | accuracy (A first) | accuracy (B first) | accuracy | confusion rate | "
         "rater mean (sd) | abstention |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    out << "| " << source_name(r.source) << " | " << opt_fixed(r.a_first.accuracy) << " | "
        << opt_fixed(r.b_first.accuracy) << " | " << opt_fixed(r.pooled.accuracy) << " | "
        << opt_fixed(r.pooled.confusion_rate) << " | " << fixed(r.rater_mean) << " ("
        << fixed(r.rater_sd) << ") | " << fixed(r.abstention_rate) << " |\n";
  }
  out << "\n" << report.verdicts << " verdicts, " << report.abstentions << " abstentions ("
      << fixed(report.abstention_rate) << ")\n";
  return out.str();
}

std::string accuracy_csv(const AccuracyReport& report) {
  std::ostringstream out;
  out << "source,pass,judged,correct,abstained,accuracy,confusion_rate\n";
  auto row = [&](Source s, std::string_view pass, const PassAccuracy& p) {
    out << source_name(s) << ',' << pass << ',' << p.judged << ',' << p.correct << ','
        << p.abstained << ',' << (p.accuracy ? fixed(*p.accuracy, 6) : "") << ','
        << (p.confusion_rate ? fixed(*p.confusion_rate, 6) : "") << '\n';
  };
  for (const auto& r : report.rows) {
    row(r.source, "A_first", r.a_first);
    row(r.source, "B_first", r.b_first);
    row(r.source, "pooled", r.pooled);
  }
  return out.str();
}

std::string likert_markdown(const LikertTable& table) {
  const auto dims = rq_dimensions(table.rq);
  std::ostringstream out;
  out << "**" << rq_name(table.rq) << "** (reference: " << setting_label(table.reference)
      << "; * p < 0.05, ** p < 0.01)\n\n| setting |";
  for (const auto d : dims) out << ' ' << dimension_name(d) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < dims.size(); ++i) out << "---|";
  out << '\n';
  for (const auto setting : kLikertSettingOrder) {
    out << "| " << setting_label(setting) << " |";
    for (const auto d : dims) {
      const auto& c = table.cell(setting, d);
      out << ' ' << format_mean_sd(c.description) << c.mark << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::string likert_csv(const LikertTable& table) {
  std::ostringstream out;
  out << "rq,setting,dimension,n,mean,sd,u1,p,method,mark\n";
  for (const auto& c : table.cells) {
    out << rq_name(table.rq) << ',' << setting_name(c.setting) << ','
        << dimension_name(c.dimension) << ',' << c.description.n << ','
        << fixed(c.description.mean, 6) << ',' << fixed(c.description.sd_sample, 6) << ',';
    if (c.test) {
      out << fixed(c.test->u1, 1) << ',' << fixed(c.test->p_two_sided, 6) << ','
          << stats::method_name(c.test->method);
    } else {
      out << ",,";
    }
    out << ',' << c.mark << '\n';
  }
  return out.str();
}

}  // namespace trajsim
