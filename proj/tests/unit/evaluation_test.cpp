#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "trajsim/app.hpp"
#include "trajsim/error.hpp"
#include "trajsim/evaluation.hpp"
#include "trajsim/jsonl.hpp"
#include "trajsim/text.hpp"

namespace trajsim {
namespace {

using L = BehaviorLabel;

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::kInvalidArgument;
}

const EvalTemplates& templates() {
  static const auto t = EvalTemplates::load(testing::templates_dir());
  return t;
}

// `count` synthetic sessions per source with `turns` turns each; every text
// names its source, session and turn, and some carry label annotations.
SessionsBySource synthetic_sources(std::size_t count, std::size_t turns) {
  SessionsBySource out;
  for (const auto source : kAllSources) {
    for (std::size_t s = 0; s < count; ++s) {
      SourceSession session{std::string(source_name(source)) + ":" + std::to_string(s), {}};
      for (std::size_t k = 0; k < turns; ++k) {
        const auto role = k % 2 == 0 ? Speaker::kCounselor : Speaker::kClient;
        std::string text = session.ref + "#" + std::to_string(k);
        if (role == Speaker::kClient && k % 4 == 1) text = "（认可，扩展）" + text;
        if (role == Speaker::kClient && k % 4 == 3) text += " (co, gi)";
        session.turns.push_back({role, text});
      }
      out[source].push_back(std::move(session));
    }
  }
  return out;
}

DiscriminationItem item_with(Source source, std::string id) {
  DiscriminationItem item;
  item.item_id = std::move(id);
  item.ground_truth_source = source;
  for (std::size_t k = 0; k < kSegmentTurns; ++k) {
    item.segment.push_back({k % 2 == 0 ? Speaker::kCounselor : Speaker::kClient,
                            "turn " + std::to_string(k)});
  }
  return item;
}

JudgeVerdict verdict(const std::string& item, JudgePass pass, std::optional<Choice> choice,
                     std::string rater = "judge") {
  JudgeVerdict v;
  v.item_id = item;
  v.pass = pass;
  v.choice = choice;
  v.rater_id = std::move(rater);
  return v;
}

std::vector<LikertResponse> load_likert(const std::string& name) {
  std::vector<LikertResponse> out;
  for (const auto& j : jsonl::read(testing::fixtures_dir() / name)) {
    out.push_back(likert_from_json(j));
  }
  return out;
}

// Exact two-sided p by enumerating every split of the pooled scores.
double oracle_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto u_of = [](const std::vector<double>& xs, const std::vector<double>& ys) {
    double u = 0;
    for (double x : xs)
      for (double y : ys) u += x > y ? 1.0 : x == y ? 0.5 : 0.0;
    return u;
  };
  const double u1 = u_of(a, b);
  const std::size_t n = pooled.size();
  std::size_t lo = 0, hi = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) (mask >> i & 1 ? xs : ys).push_back(pooled[i]);
    const double u = u_of(xs, ys);
    ++total;
    lo += u <= u1 + 1e-9;
    hi += u >= u1 - 1e-9;
  }
  return std::min(1.0, 2.0 * std::min(double(lo) / total, double(hi) / total));
}

std::vector<double> cell_scores(const std::vector<LikertResponse>& rs, PromptSetting s,
                                Dimension d) {
  std::vector<double> out;
  for (const auto& r : rs) {
    if (r.setting == s && r.dimension == d) out.push_back(r.score);
  }
  return out;
}

// --- tasks -------------------------------------------------------------------

TEST(Sources, NamesAndKinds) {
  for (auto s : kAllSources) EXPECT_EQ(parse_source(source_name(s)), s);
  EXPECT_EQ(task_sources(TaskKind::kTask1).size(), 4u);
  EXPECT_EQ(task_sources(TaskKind::kTask2).size(), 5u);
  EXPECT_EQ(parse_task_kind("task2"), TaskKind::kTask2);
  EXPECT_EQ(code_of([] { parse_task_kind("task3"); }), Errc::kInvalidArgument);
  EXPECT_FALSE(is_llm_source(Source::kHuman));
  EXPECT_TRUE(is_llm_source(Source::kContent));
}

TEST(StripLabels, RemovesLeadingAndTrailingAnnotations) {
  EXPECT_EQ(strip_label_annotations("（提供信息，认可）我叫李华。"), "我叫李华。");
  EXPECT_EQ(strip_label_annotations("嗯，是的。(co, ex)"), "嗯，是的。");
  EXPECT_EQ(strip_label_annotations("【co】 [gi] 好的"), "好的");
  EXPECT_EQ(strip_label_annotations("我去了（杭州）"), "我去了（杭州）");
  EXPECT_EQ(strip_label_annotations("(see above) fine"), "(see above) fine");
  EXPECT_EQ(strip_label_annotations("plain"), "plain");
}

TEST(BoundedRandom, StaysInRangeAndIsSeeded) {
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const auto n = 1 + static_cast<std::uint64_t>(i % 37);
    const auto x = bounded_random(a, n);
    EXPECT_LT(x, n);
    EXPECT_EQ(x, bounded_random(b, n));
  }
  EXPECT_EQ(code_of([&] { bounded_random(a, 0); }), Errc::kInvalidArgument);
}

TEST(BuildTask, Quota2OverFixturesGivesEightItems) {
  const auto sources = synthetic_sources(5, 8);
  const auto task = build_task(sources, TaskKind::kTask1, 2, 42);
  ASSERT_EQ(task.items.size(), 8u);
  std::map<Source, int> per;
  for (const auto& item : task.items) ++per[item.ground_truth_source];
  for (auto s : task_sources(TaskKind::kTask1)) EXPECT_EQ(per[s], 2);
  EXPECT_EQ(per.count(Source::kHuman), 0u);
  EXPECT_EQ(task.items.front().item_id, "item-0001");
  EXPECT_EQ(task.items.back().item_id, "item-0008");

  const auto again = build_task(sources, TaskKind::kTask1, 2, 42);
  EXPECT_EQ(jsonl::dump_line(to_json(task.items[3])), jsonl::dump_line(to_json(again.items[3])));
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    EXPECT_EQ(to_json(task.items[i]), to_json(again.items[i]));
  }
}

TEST(BuildTask, FullScaleShapes) {
  const auto sources = synthetic_sources(120, 12);
  const auto t1 = build_task(sources, TaskKind::kTask1, kDefaultQuota, 1);
  const auto t2 = build_task(sources, TaskKind::kTask2, kDefaultQuota, 1);
  EXPECT_EQ(t1.items.size(), 360u);
  EXPECT_EQ(t2.items.size(), 450u);
  std::map<Source, int> per;
  for (const auto& item : t2.items) ++per[item.ground_truth_source];
  for (auto s : kAllSources) EXPECT_EQ(per[s], 90);
}

TEST(BuildTask, SegmentsAreFiveContiguousLabelFreeTurns) {
  const auto sources = synthetic_sources(20, 11);
  const auto task = build_task(sources, TaskKind::kTask2, 10, 99);
  for (const auto& item : task.items) {
    ASSERT_EQ(item.segment.size(), kSegmentTurns);
    EXPECT_LE(item.window_start + kSegmentTurns, 11u);
    for (std::size_t k = 0; k < kSegmentTurns; ++k) {
      const auto& t = item.segment[k];
      EXPECT_EQ(t.text, item.session_ref + "#" + std::to_string(item.window_start + k));
      EXPECT_EQ(t.role, (item.window_start + k) % 2 == 0 ? Speaker::kCounselor : Speaker::kClient);
      EXPECT_EQ(t.text.find("认可"), std::string::npos);
      EXPECT_EQ(t.text.find("(co"), std::string::npos);
    }
    EXPECT_TRUE(text::starts_with(item.session_ref, source_name(item.ground_truth_source)));
  }
}

TEST(BuildTaskProperty, DeterministicQuotasExactNoSessionReused) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 25; ++round) {
    const std::size_t count = 3 + rng() % 10;
    const std::size_t quota = 1 + rng() % count;
    const std::size_t turns = 5 + rng() % 6;
    const auto kind = rng() % 2 ? TaskKind::kTask1 : TaskKind::kTask2;
    const auto seed = rng();
    const auto sources = synthetic_sources(count, turns);
    const auto task = build_task(sources, kind, quota, seed);
    const auto again = build_task(sources, kind, quota, seed);
    ASSERT_EQ(task.items.size(), quota * task_sources(kind).size());
    std::set<std::string> refs;
    std::map<Source, std::size_t> per;
    for (std::size_t i = 0; i < task.items.size(); ++i) {
      EXPECT_EQ(to_json(task.items[i]), to_json(again.items[i]));
      EXPECT_TRUE(refs.insert(task.items[i].session_ref).second) << task.items[i].session_ref;
      ++per[task.items[i].ground_truth_source];
    }
    for (auto s : task_sources(kind)) EXPECT_EQ(per[s], quota);
  }
}

TEST(BuildTask, DifferentSeedsShuffleDifferently) {
  const auto sources = synthetic_sources(30, 9);
  const auto a = build_task(sources, TaskKind::kTask2, 20, 1);
  const auto b = build_task(sources, TaskKind::kTask2, 20, 2);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    same += a.items[i].session_ref == b.items[i].session_ref ? 1 : 0;
  }
  EXPECT_LT(same, a.items.size() / 2);
}

TEST(BuildTask, InsufficientSessions) {
  auto sources = synthetic_sources(3, 8);
  EXPECT_EQ(code_of([&] { build_task(sources, TaskKind::kTask1, 4, 0); }),
            Errc::kInsufficientSessions);
  // Sessions shorter than five turns are not eligible.
  sources[Source::kFull] = synthetic_sources(10, 4)[Source::kFull];
  EXPECT_EQ(code_of([&] { build_task(sources, TaskKind::kTask1, 1, 0); }),
            Errc::kInsufficientSessions);
  // Human is only needed for task2.
  sources = synthetic_sources(3, 8);
  sources.erase(Source::kHuman);
  EXPECT_NO_THROW(build_task(sources, TaskKind::kTask1, 3, 0));
  EXPECT_EQ(code_of([&] { build_task(sources, TaskKind::kTask2, 3, 0); }),
            Errc::kInsufficientSessions);
  EXPECT_EQ(code_of([&] { build_task(sources, TaskKind::kTask1, 0, 0); }),
            Errc::kInvalidArgument);
}

TEST(BuildTask, HumanSourceFromFixtureDialogues) {
  SessionsBySource sources = synthetic_sources(4, 6);
  sources[Source::kHuman].clear();
  for (const auto& d : testing::fixture_dialogues()) {
    sources[Source::kHuman].push_back(source_session(d));
  }
  const auto task = build_task(sources, TaskKind::kTask2, 4, 11);
  for (const auto& item : task.items) {
    if (item.ground_truth_source != Source::kHuman) continue;
    EXPECT_TRUE(text::starts_with(item.session_ref, "dialogue:"));
    for (const auto& t : item.segment) EXPECT_EQ(strip_label_annotations(t.text), t.text);
  }
}

TEST(TaskFile, RoundTripWithHeader) {
  testing::TempDir dir;
  const auto task = build_task(synthetic_sources(4, 7), TaskKind::kTask2, 3, 5);
  write_task(dir / "task.jsonl", task);
  const auto records = jsonl::read(dir / "task.jsonl");
  ASSERT_EQ(records.size(), 16u);
  EXPECT_EQ(records[0]["record"], "task");
  EXPECT_EQ(records[0]["task_kind"], "task2");
  EXPECT_EQ(records[0]["items"], 15);
  EXPECT_EQ(records[1]["record"], "item");
  const auto back = read_task(dir / "task.jsonl");
  EXPECT_EQ(back.kind, task.kind);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.per_setting_quota, 3u);
  ASSERT_EQ(back.items.size(), task.items.size());
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    EXPECT_EQ(to_json(back.items[i]), to_json(task.items[i]));
  }
  jsonl::write(dir / "bad.jsonl", {Json{{"record", "item"}}});
  EXPECT_EQ(code_of([&] { read_task(dir / "bad.jsonl"); }), Errc::kIoError);
}

TEST(TaskFile, BlindItemsHideGroundTruth) {
  const auto item = item_with(Source::kFull, "item-0001");
  const auto blind = to_json(item, true);
  EXPECT_FALSE(blind.contains("ground_truth_source"));
  EXPECT_FALSE(blind.contains("session_ref"));
  EXPECT_EQ(blind["segment"].size(), 5u);
  EXPECT_EQ(to_json(item)["ground_truth_source"], "full");
}

// --- judging -----------------------------------------------------------------

TEST(Judge, OptionLetterParsing) {
  EXPECT_EQ(parse_option_letter("I think option B."), 'B');
  EXPECT_EQ(parse_option_letter("A"), 'A');
  EXPECT_EQ(parse_option_letter("答案：B"), 'B');
  EXPECT_EQ(parse_option_letter("选Ａ"), 'A');
  EXPECT_EQ(parse_option_letter("**B**"), 'B');
  EXPECT_EQ(parse_option_letter("Both seem human, but A"), 'A');
  EXPECT_EQ(code_of([] { parse_option_letter("ABBA"); }), Errc::kUnparseableVerdict);
  EXPECT_EQ(code_of([] { parse_option_letter("no idea"); }), Errc::kUnparseableVerdict);
  EXPECT_EQ(code_of([] { parse_option_letter(""); }), Errc::kUnparseableVerdict);
}

TEST(Judge, LetterMappingReversesAcrossPasses) {
  EXPECT_EQ(choice_for_letter('A', JudgePass::kAFirst), Choice::kHuman);
  EXPECT_EQ(choice_for_letter('B', JudgePass::kAFirst), Choice::kLlm);
  EXPECT_EQ(choice_for_letter('A', JudgePass::kBFirst), Choice::kLlm);
  EXPECT_EQ(choice_for_letter('B', JudgePass::kBFirst), Choice::kHuman);
  for (char letter : {'A', 'B'}) {
    EXPECT_NE(choice_for_letter(letter, JudgePass::kAFirst),
              choice_for_letter(letter, JudgePass::kBFirst));
  }
  EXPECT_EQ(code_of([] { choice_for_letter('C', JudgePass::kAFirst); }),
            Errc::kUnparseableVerdict);
}

TEST(Judge, PromptOrdersOptionsPerPass) {
  const auto item = item_with(Source::kVanilla, "item-0001");
  const auto a = render_judge_prompt(item, JudgePass::kAFirst, Locale::kZh, templates());
  const auto b = render_judge_prompt(item, JudgePass::kBFirst, Locale::kZh, templates());
  EXPECT_NE(a.find("A. 真人来访者\nB. 由大语言模型模拟的来访者"), std::string::npos);
  EXPECT_NE(b.find("A. 由大语言模型模拟的来访者\nB. 真人来访者"), std::string::npos);
  EXPECT_NE(a.find("咨询师：turn 0\n来访者：turn 1"), std::string::npos);
  const auto en = render_judge_prompt(item, JudgePass::kAFirst, Locale::kEn, templates());
  EXPECT_NE(en.find("A. A real human client"), std::string::npos);
  EXPECT_EQ(en.find('{'), std::string::npos);
}

TEST(Judge, ConstantMockMapsThroughPass) {
  auto mock = testing::mock_gateway([](const std::string&) { return "A"; });
  const auto item = item_with(Source::kFull, "item-0001");
  const auto a = judge_item(item, *mock.gateway, JudgePass::kAFirst, Locale::kZh, templates());
  const auto b = judge_item(item, *mock.gateway, JudgePass::kBFirst, Locale::kZh, templates());
  EXPECT_EQ(a.choice, Choice::kHuman);
  EXPECT_EQ(b.choice, Choice::kLlm);
  EXPECT_EQ(a.raw_option_letter, "A");
  EXPECT_EQ(a.rater_id, mock.gateway->config().id());
}

TEST(Judge, UnparseableReplyIsAbstention) {
  auto mock = testing::mock_gateway([](const std::string&) { return "I cannot tell."; });
  const auto v = judge_item(item_with(Source::kFull, "item-0001"), *mock.gateway,
                            JudgePass::kAFirst, Locale::kEn, templates());
  EXPECT_TRUE(v.abstained());
  EXPECT_EQ(v.raw_reply, "I cannot tell.");
  EXPECT_EQ(v.raw_option_letter, "");
  const auto j = to_json(v);
  EXPECT_TRUE(j["choice"].is_null());
  EXPECT_TRUE(verdict_from_json(j).abstained());
}

TEST(Judge, GatewayErrorsPropagate) {
  auto mock = testing::mock_gateway();
  mock.transport->fail_always(TransportResult::http_error(401));
  EXPECT_EQ(code_of([&] {
              judge_item(item_with(Source::kFull, "i"), *mock.gateway, JudgePass::kAFirst,
                         Locale::kZh, templates());
            }),
            Errc::kAuthError);
}

TEST(RunJudging, BothPassesRestartable) {
  testing::TempDir dir;
  const auto task = build_task(synthetic_sources(5, 8), TaskKind::kTask1, 2, 3);
  auto mock = testing::mock_gateway(mock_judge_responder());
  JudgeRunOptions options;
  options.concurrency = 3;
  const auto path = dir / "verdicts.jsonl";
  auto verdicts = run_judging(task, *mock.gateway, templates(), path, options);
  EXPECT_EQ(verdicts.size(), 16u);
  EXPECT_EQ(mock.transport->calls(), 16u);
  std::set<std::pair<std::string, JudgePass>> seen;
  for (const auto& v : verdicts) EXPECT_TRUE(seen.insert(std::make_pair(v.item_id, v.pass)).second);

  // Nothing left to do on a rerun.
  verdicts = run_judging(task, *mock.gateway, templates(), path, options);
  EXPECT_EQ(verdicts.size(), 16u);
  EXPECT_EQ(mock.transport->calls(), 16u);

  // Drop the last five lines; a rerun fills exactly those back in.
  auto records = jsonl::read(path);
  records.resize(records.size() - 5);
  jsonl::write(path, records);
  verdicts = run_judging(task, *mock.gateway, templates(), path, options);
  EXPECT_EQ(verdicts.size(), 16u);
  EXPECT_EQ(mock.transport->calls(), 21u);
}

TEST(RunJudging, FailureKeepsFinishedVerdicts) {
  testing::TempDir dir;
  const auto task = build_task(synthetic_sources(5, 8), TaskKind::kTask1, 2, 3);
  auto mock = testing::mock_gateway([&](const std::string&) { return "A"; });
  mock.transport->script({TransportResult::ok("A"), TransportResult::ok("B"),
                          TransportResult::http_error(403)});
  JudgeRunOptions options;
  options.concurrency = 1;
  options.passes = {JudgePass::kAFirst};
  EXPECT_EQ(code_of([&] { run_judging(task, *mock.gateway, templates(), dir / "v.jsonl", options); }),
            Errc::kAuthError);
  EXPECT_EQ(read_verdicts(dir / "v.jsonl").size(), 2u);
  const auto all = run_judging(task, *mock.gateway, templates(), dir / "v.jsonl", options);
  EXPECT_EQ(all.size(), 8u);
}

// --- accuracy ------------------------------------------------------------------

DiscriminationTask single_source_task(Source source, std::size_t n) {
  DiscriminationTask task;
  task.kind = source == Source::kHuman ? TaskKind::kTask2 : TaskKind::kTask1;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "item-%04zu", i + 1);
    task.items.push_back(item_with(source, id));
  }
  return task;
}

// Adds one correct verdict for every other source of the task kind so the
// report has something in each row.
void pad_other_sources(DiscriminationTask& task, std::vector<JudgeVerdict>& verdicts,
                       Source except) {
  for (auto s : task_sources(task.kind)) {
    if (s == except) continue;
    const auto id = "pad-" + std::string(source_name(s));
    task.items.push_back(item_with(s, id));
    verdicts.push_back(verdict(id, JudgePass::kAFirst,
                               is_llm_source(s) ? Choice::kLlm : Choice::kHuman));
  }
}

TEST(Accuracy, EightySixOfNinetyFooled) {
  auto task = single_source_task(Source::kFull, 90);
  std::vector<JudgeVerdict> verdicts;
  for (std::size_t i = 0; i < 90; ++i) {
    verdicts.push_back(verdict(task.items[i].item_id, JudgePass::kAFirst,
                               i < 86 ? Choice::kHuman : Choice::kLlm));
  }
  pad_other_sources(task, verdicts, Source::kFull);
  const auto report = accuracy_report(task, verdicts);
  ASSERT_EQ(report.rows.size(), 4u);
  const auto& full = report.rows[3];
  ASSERT_EQ(full.source, Source::kFull);
  EXPECT_EQ(full.pooled.judged, 90u);
  EXPECT_EQ(full.pooled.correct, 4u);
  EXPECT_NEAR(*full.pooled.accuracy, 0.044, 5e-4);
  EXPECT_NEAR(*full.pooled.confusion_rate, 0.956, 5e-4);
  EXPECT_EQ(*full.pooled.accuracy + *full.pooled.confusion_rate, 1.0);
  EXPECT_FALSE(full.b_first.accuracy);
}

TEST(Accuracy, AllCorrect) {
  auto task = single_source_task(Source::kHuman, 10);
  std::vector<JudgeVerdict> verdicts;
  for (const auto& item : task.items) {
    verdicts.push_back(verdict(item.item_id, JudgePass::kAFirst, Choice::kHuman));
    verdicts.push_back(verdict(item.item_id, JudgePass::kBFirst, Choice::kHuman));
  }
  pad_other_sources(task, verdicts, Source::kHuman);
  const auto report = accuracy_report(task, verdicts);
  const auto& human = report.rows[0];
  EXPECT_EQ(human.source, Source::kHuman);
  EXPECT_EQ(*human.pooled.accuracy, 1.0);
  EXPECT_FALSE(human.pooled.confusion_rate);  // reported for LLM sources only
  for (const auto& row : report.rows) {
    if (row.source != Source::kHuman) {
      EXPECT_EQ(*row.pooled.confusion_rate, 0.0);
    }
  }
}

TEST(Accuracy, MissingVerdicts) {
  auto task = single_source_task(Source::kVanilla, 3);
  std::vector<JudgeVerdict> verdicts;
  pad_other_sources(task, verdicts, Source::kVanilla);
  EXPECT_EQ(code_of([&] { accuracy_report(task, verdicts); }), Errc::kMissingVerdicts);
  // Abstentions alone do not count.
  verdicts.push_back(verdict("item-0001", JudgePass::kAFirst, std::nullopt));
  EXPECT_EQ(code_of([&] { accuracy_report(task, verdicts); }), Errc::kMissingVerdicts);
  verdicts.push_back(verdict("nope", JudgePass::kAFirst, Choice::kLlm));
  EXPECT_EQ(code_of([&] { accuracy_report(task, verdicts); }), Errc::kInvalidArgument);
}

TEST(Accuracy, AbstentionsLeaveTheDenominator) {
  auto task = single_source_task(Source::kBehavior, 4);
  std::vector<JudgeVerdict> verdicts = {
      verdict("item-0001", JudgePass::kAFirst, Choice::kLlm),
      verdict("item-0002", JudgePass::kAFirst, Choice::kHuman),
      verdict("item-0003", JudgePass::kAFirst, std::nullopt),
      verdict("item-0004", JudgePass::kAFirst, std::nullopt),
  };
  pad_other_sources(task, verdicts, Source::kBehavior);
  const auto report = accuracy_report(task, verdicts);
  const auto& row = report.rows[1];
  ASSERT_EQ(row.source, Source::kBehavior);
  EXPECT_EQ(row.pooled.judged, 2u);
  EXPECT_EQ(row.pooled.abstained, 2u);
  EXPECT_EQ(*row.pooled.accuracy, 0.5);
  EXPECT_EQ(row.abstention_rate, 0.5);
  EXPECT_EQ(report.verdicts, 7u);
  EXPECT_EQ(report.abstentions, 2u);
}

TEST(Accuracy, PerRaterMeanAndSd) {
  auto task = single_source_task(Source::kContent, 4);
  std::vector<JudgeVerdict> verdicts;
  // r1: 4/4, r2: 2/4, r3: 0/4.
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& id = task.items[i].item_id;
    verdicts.push_back(verdict(id, JudgePass::kAFirst, Choice::kLlm, "r1"));
    verdicts.push_back(verdict(id, JudgePass::kAFirst, i < 2 ? Choice::kLlm : Choice::kHuman, "r2"));
    verdicts.push_back(verdict(id, JudgePass::kAFirst, Choice::kHuman, "r3"));
  }
  pad_other_sources(task, verdicts, Source::kContent);
  const auto row = accuracy_report(task, verdicts).rows[2];
  ASSERT_EQ(row.source, Source::kContent);
  EXPECT_EQ(row.raters, 3u);
  EXPECT_DOUBLE_EQ(row.rater_mean, 0.5);
  EXPECT_DOUBLE_EQ(row.rater_sd, 0.5);
  EXPECT_DOUBLE_EQ(*row.pooled.accuracy, 0.5);
}

TEST(Accuracy, LaterVerdictReplacesEarlier) {
  auto task = single_source_task(Source::kFull, 1);
  std::vector<JudgeVerdict> verdicts = {
      verdict("item-0001", JudgePass::kAFirst, Choice::kHuman),
      verdict("item-0001", JudgePass::kAFirst, Choice::kLlm),
  };
  pad_other_sources(task, verdicts, Source::kFull);
  EXPECT_EQ(*accuracy_report(task, verdicts).rows[3].pooled.accuracy, 1.0);
}

TEST(DualPassProperty, ConstantLetterJudgeGivesComplementaryAccuracies) {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 6; ++round) {
    const auto kind = round % 2 ? TaskKind::kTask2 : TaskKind::kTask1;
    const std::string letter = round % 3 == 0 ? "B" : "A";
    const auto task = build_task(synthetic_sources(8, 5 + rng() % 5), kind, 1 + rng() % 8, rng());
    auto mock = testing::mock_gateway([letter](const std::string&) { return letter; });
    testing::TempDir dir;
    const auto verdicts = run_judging(task, *mock.gateway, templates(), dir / "v.jsonl");
    const auto report = accuracy_report(task, verdicts);
    ASSERT_EQ(report.rows.size(), task_sources(kind).size());
    for (const auto& row : report.rows) {
      ASSERT_TRUE(row.a_first.accuracy && row.b_first.accuracy);
      EXPECT_EQ(*row.a_first.accuracy + *row.b_first.accuracy, 1.0);
      EXPECT_TRUE(*row.a_first.accuracy == 0.0 || *row.a_first.accuracy == 1.0);
      if (is_llm_source(row.source)) {
        EXPECT_EQ(*row.pooled.accuracy + *row.pooled.confusion_rate, 1.0);
        EXPECT_EQ(*row.a_first.accuracy, letter == "B" ? 1.0 : 0.0);
      } else {
        EXPECT_EQ(*row.a_first.accuracy, letter == "A" ? 1.0 : 0.0);
      }
    }
  }
}

TEST(AccuracyProperty, BoundsAndComplement) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 50; ++round) {
    const auto task = build_task(synthetic_sources(6, 6), TaskKind::kTask2, 1 + rng() % 6, rng());
    std::vector<JudgeVerdict> verdicts;
    for (const auto& item : task.items) {
      for (auto pass : {JudgePass::kAFirst, JudgePass::kBFirst}) {
        const auto r = rng() % 5;
        verdicts.push_back(verdict(item.item_id, pass,
                                   r == 0   ? std::nullopt
                                   : r % 2 ? std::optional(Choice::kHuman)
                                           : std::optional(Choice::kLlm)));
      }
    }
    AccuracyReport report;
    try {
      report = accuracy_report(task, verdicts);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kMissingVerdicts);
      continue;
    }
    for (const auto& row : report.rows) {
      EXPECT_GE(*row.pooled.accuracy, 0.0);
      EXPECT_LE(*row.pooled.accuracy, 1.0);
      if (is_llm_source(row.source)) {
        EXPECT_EQ(*row.pooled.accuracy + *row.pooled.confusion_rate, 1.0);
      }
      EXPECT_EQ(row.pooled.judged, row.a_first.judged + row.b_first.judged);
    }
  }
}

TEST(Accuracy, RenderedTables) {
  auto task = single_source_task(Source::kFull, 90);
  std::vector<JudgeVerdict> verdicts;
  for (std::size_t i = 0; i < 90; ++i) {
    verdicts.push_back(verdict(task.items[i].item_id, JudgePass::kAFirst,
                               i < 86 ? Choice::kHuman : Choice::kLlm));
  }
  pad_other_sources(task, verdicts, Source::kFull);
  const auto report = accuracy_report(task, verdicts);
  const auto md = accuracy_markdown(report);
  EXPECT_NE(md.find("| full | 0.044 | - | 0.044 | 0.956 |"), std::string::npos) << md;
  const auto csv = accuracy_csv(report);
  EXPECT_NE(csv.find("full,pooled,90,4,0,0.044444,0.955556"), std::string::npos) << csv;
  const auto j = to_json(report);
  EXPECT_EQ(j["rows"][3]["accuracy_A"]["correct"], 4);
  EXPECT_TRUE(j["rows"][3]["accuracy_B"]["accuracy"].is_null());
}

// --- Likert --------------------------------------------------------------------

TEST(Likert, ResponseValidation) {
  EXPECT_EQ(code_of([] {
              likert_from_json(Json::parse(
                  R"({"rater_id":"r","setting":"full","dimension":"overall","score":0})"));
            }),
            Errc::kInvalidScore);
  EXPECT_EQ(code_of([] {
              likert_from_json(Json::parse(
                  R"({"rater_id":"r","setting":"full","dimension":"overall","score":8})"));
            }),
            Errc::kInvalidScore);
  EXPECT_EQ(code_of([] {
              likert_from_json(Json::parse(
                  R"({"rater_id":"r","setting":"full","dimension":"overall","score":5.5})"));
            }),
            Errc::kInvalidScore);
  const auto r = likert_from_json(
      Json::parse(R"({"rater_id":"r","setting":"content","dimension":"emotion_handling","score":7})"));
  EXPECT_EQ(r.dimension, Dimension::kEmotionHandling);
  EXPECT_EQ(likert_from_json(to_json(r)).score, 7);
  EXPECT_EQ(code_of([] { parse_dimension("vibes"); }), Errc::kInvalidArgument);
}

TEST(Likert, DimensionsPerQuestion) {
  EXPECT_EQ(rq_dimensions(ResearchQuestion::kRq1).size(), 5u);
  EXPECT_EQ(rq_dimensions(ResearchQuestion::kRq3).front(), Dimension::kListening);
  EXPECT_EQ(parse_rq("RQ3"), ResearchQuestion::kRq3);
}

TEST(Likert, FourRaterFixtureRq1) {
  const auto responses = load_likert("likert_rq1.jsonl");
  ASSERT_EQ(responses.size(), 80u);
  const auto table = likert_report(responses, ResearchQuestion::kRq1);
  ASSERT_EQ(table.cells.size(), 20u);
  // Setting-major in table column order.
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    EXPECT_EQ(table.cells[i].setting, kLikertSettingOrder[i / 5]);
    EXPECT_EQ(table.cells[i].dimension, rq_dimensions(ResearchQuestion::kRq1)[i % 5]);
    EXPECT_EQ(table.cells[i].description.n, 4u);
  }
  const auto& vf = table.cell(PromptSetting::kVanilla, Dimension::kFluency);
  EXPECT_DOUBLE_EQ(vf.description.mean, 4.25);
  EXPECT_DOUBLE_EQ(vf.description.sd_sample, 0.5);
  ASSERT_TRUE(vf.test);
  EXPECT_EQ(vf.test->method, stats::UTestMethod::kExact);
  EXPECT_DOUBLE_EQ(vf.test->u1, 0.5);
  EXPECT_NEAR(vf.test->p_two_sided, 2.0 / 35.0, 1e-12);
  EXPECT_EQ(vf.mark, "");
  EXPECT_EQ(format_mean_sd(vf.description), "4.25 (0.50)");

  const auto& cf = table.cell(PromptSetting::kContent, Dimension::kFluency);
  EXPECT_NEAR(cf.test->p_two_sided, 1.0 / 35.0, 1e-12);
  EXPECT_EQ(cf.mark, "*");

  const auto& vc = table.cell(PromptSetting::kVanilla, Dimension::kCoherence);
  EXPECT_DOUBLE_EQ(vc.test->p_two_sided, 1.0);  // identical cells
  EXPECT_EQ(vc.mark, "");

  EXPECT_NEAR(table.cell(PromptSetting::kBehavior, Dimension::kFluency).test->p_two_sided,
              17.0 / 35.0, 1e-12);
  EXPECT_NEAR(table.cell(PromptSetting::kContent, Dimension::kOverall).test->p_two_sided,
              3.0 / 35.0, 1e-12);
  EXPECT_NEAR(table.cell(PromptSetting::kBehavior, Dimension::kOverall).test->p_two_sided,
              23.0 / 35.0, 1e-12);

  const auto& ref = table.cell(PromptSetting::kFull, Dimension::kAppropriateness);
  EXPECT_FALSE(ref.test);
  EXPECT_EQ(ref.mark, "");
  EXPECT_EQ(format_mean_sd(ref.description), "6.00 (0.00)");
}

TEST(Likert, EveryCellMatchesEnumerationOracle) {
  for (const auto& [file, rq] : {std::pair{"likert_rq1.jsonl", ResearchQuestion::kRq1},
                                 std::pair{"likert_rq3.jsonl", ResearchQuestion::kRq3}}) {
    const auto responses = load_likert(file);
    const auto table = likert_report(responses, rq);
    ASSERT_EQ(table.cells.size(), 20u);
    std::size_t starred = 0;
    for (const auto& cell : table.cells) {
      const auto v = cell_scores(responses, cell.setting, cell.dimension);
      double sum = 0;
      for (double x : v) sum += x;
      EXPECT_DOUBLE_EQ(cell.description.mean, sum / v.size());
      if (cell.setting == PromptSetting::kFull) continue;
      const double p =
          oracle_exact_p(v, cell_scores(responses, PromptSetting::kFull, cell.dimension));
      EXPECT_NEAR(cell.test->p_two_sided, p, 1e-12);
      const std::string expected_mark = p < 0.01 ? "**" : p < 0.05 ? "*" : "";
      EXPECT_EQ(cell.mark, expected_mark);
      starred += cell.mark.empty() ? 0 : 1;
    }
    EXPECT_GT(starred, 0u);
  }
}

TEST(Likert, DoubleStarNeedsLargerCells) {
  // Four raters scoring two sessions each: 8 vs 8, exact mode.
  std::vector<LikertResponse> responses;
  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < 2; ++k) {
      for (auto s : kLikertSettingOrder) {
        for (auto d : rq_dimensions(ResearchQuestion::kRq1)) {
          int score = s == PromptSetting::kFull ? 6 + (r + k) % 2 : 3 + (r * 2 + k) % 3;
          if (s == PromptSetting::kBehavior) score = 5 + (r + k) % 3;
          responses.push_back({"r" + std::to_string(r + 1), s, d, score});
        }
      }
    }
  }
  const auto table =
      likert_report(responses, ResearchQuestion::kRq1, PromptSetting::kFull, stats::UTestMode::kExact);
  const auto& vanilla = table.cell(PromptSetting::kVanilla, Dimension::kOverall);
  EXPECT_EQ(vanilla.description.n, 8u);
  EXPECT_NEAR(vanilla.test->p_two_sided,
              oracle_exact_p(cell_scores(responses, PromptSetting::kVanilla, Dimension::kOverall),
                             cell_scores(responses, PromptSetting::kFull, Dimension::kOverall)),
              1e-12);
  EXPECT_LT(vanilla.test->p_two_sided, 0.01);
  EXPECT_EQ(vanilla.mark, "**");
  EXPECT_NE(likert_markdown(table).find("**"), std::string::npos);
}

TEST(Likert, EmptyCell) {
  auto responses = load_likert("likert_rq1.jsonl");
  std::erase_if(responses, [](const LikertResponse& r) {
    return r.setting == PromptSetting::kContent && r.dimension == Dimension::kEmotion;
  });
  EXPECT_EQ(code_of([&] { likert_report(responses, ResearchQuestion::kRq1); }), Errc::kEmptyCell);
  // The RQ3 table does not need RQ1 cells.
  EXPECT_EQ(code_of([&] { likert_report(responses, ResearchQuestion::kRq3); }), Errc::kEmptyCell);
  auto rq3 = load_likert("likert_rq3.jsonl");
  EXPECT_NO_THROW(likert_report(rq3, ResearchQuestion::kRq3));
}

TEST(LikertProperty, MarksInvariantUnderMonotoneRescaling) {
  std::mt19937_64 rng(31);
  const auto base = load_likert("likert_rq3.jsonl");
  for (int round = 0; round < 30; ++round) {
    // Perturb the fixture and keep every score in 2..6 so that a strictly
    // increasing map onto a random 5-subset of 1..7 stays on the scale.
    auto original = base;
    for (auto& r : original) {
      if (rng() % 4 == 0) r.score += rng() % 2 ? 1 : -1;
      r.score = std::clamp(r.score, 2, 6);
    }
    std::vector<int> scale = {1, 2, 3, 4, 5, 6, 7};
    std::shuffle(scale.begin(), scale.end(), rng);
    scale.resize(5);
    std::sort(scale.begin(), scale.end());
    auto rescaled = original;
    for (auto& r : rescaled) r.score = scale[r.score - 2];
    const auto a = likert_report(original, ResearchQuestion::kRq3);
    const auto b = likert_report(rescaled, ResearchQuestion::kRq3);
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
      EXPECT_EQ(a.cells[i].mark, b.cells[i].mark);
      if (a.cells[i].test) {
        EXPECT_NEAR(a.cells[i].test->p_two_sided, b.cells[i].test->p_two_sided, 1e-12);
      }
    }
  }
}

TEST(Likert, RenderedTables) {
  const auto table = likert_report(load_likert("likert_rq1.jsonl"), ResearchQuestion::kRq1);
  const auto md = likert_markdown(table);
  EXPECT_NE(md.find("| setting | fluency | emotion | coherence | appropriateness | overall |"),
            std::string::npos);
  EXPECT_NE(md.find("| vanilla | 4.25 (0.50) | 3.00 (0.82)* |"), std::string::npos) << md;
  EXPECT_LT(md.find("| vanilla |"), md.find("| +content |"));
  EXPECT_LT(md.find("| +content |"), md.find("| +behavior |"));
  EXPECT_LT(md.find("| +behavior |"), md.find("| full |"));
  const auto csv = likert_csv(table);
  EXPECT_NE(csv.find("RQ1,vanilla,fluency,4,4.250000,0.500000,0.5,0.057143,exact,\n"),
            std::string::npos)
      << csv;
  EXPECT_NE(csv.find("RQ1,full,fluency,4,5.750000,0.500000,,,,\n"), std::string::npos);
  const auto j = to_json(table);
  EXPECT_EQ(j["cells"].size(), 20u);
  EXPECT_EQ(j["reference"], "full");
  EXPECT_TRUE(j["cells"][15]["test"].is_null());
}

TEST(Likert, FormatMeanSd) {
  EXPECT_EQ(format_mean_sd(stats::describe(std::vector<double>{5.69})), "5.69 (0.00)");
  EXPECT_EQ(format_mean_sd(stats::describe(std::vector<double>{6, 6, 5, 6})), "5.75 (0.50)");
}

// --- adherence -------------------------------------------------------------------

TEST(Classifier, ReplyParsing) {
  EXPECT_EQ(parse_classifier_reply("rr").labels(), (std::vector<L>{L::kRr}));
  EXPECT_EQ(parse_classifier_reply("pi").labels(), (std::vector<L>{L::kGi}));
  EXPECT_EQ(parse_classifier_reply("Labels: co, gi.").labels(), (std::vector<L>{L::kCo, L::kGi}));
  EXPECT_EQ(parse_classifier_reply("\n  ex,re\nbecause...").labels(),
            (std::vector<L>{L::kEx, L::kRe}));
  EXPECT_EQ(code_of([] { parse_classifier_reply(""); }), Errc::kUnparseableVerdict);
  EXPECT_EQ(code_of([] { parse_classifier_reply("zz"); }), Errc::kUnparseableVerdict);
}

TEST(Classifier, PromptCarriesAllDefinitions) {
  std::string seen;
  auto mock = testing::mock_gateway([&](const std::string& p) {
    seen = p;
    return "rr";
  });
  const auto set = classify_behavior("你是说我可能在工作中不够自信？", "咨询师：你好。",
                                     *mock.gateway, Locale::kZh, templates());
  EXPECT_EQ(set.labels(), (std::vector<L>{L::kRr}));
  for (auto l : kAllLabels) {
    EXPECT_NE(seen.find("- " + std::string(LabelCatalog::builtin().code(l)) + "（"),
              std::string::npos);
  }
  EXPECT_NE(seen.find("你是说我可能在工作中不够自信？"), std::string::npos);
  EXPECT_EQ(code_of([&] {
              classify_behavior(" ", "", *mock.gateway, Locale::kZh, templates());
            }),
            Errc::kInvalidArgument);
  EXPECT_EQ(render_label_definitions(Locale::kEn).find("- co (Confirming): "), 0u);
}

TEST(Classifier, Jaccard) {
  auto set = [](std::vector<L> v) { return BehaviorSet::unchecked(std::move(v)); };
  EXPECT_DOUBLE_EQ(jaccard(set({L::kCo, L::kEx}), set({L::kEx, L::kCo})), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(set({L::kCo, L::kEx}), set({L::kCo})), 0.5);
  EXPECT_DOUBLE_EQ(jaccard(set({L::kCo, L::kGi, L::kCo}), set({L::kGi, L::kRr})), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard(set({L::kCo}), set({L::kSa})), 0.0);
}

TEST(Adherence, ScoresEveryPlannedTurn) {
  auto store = std::make_shared<CorpusStore>();
  for (const auto& p : testing::fixture_profiles()) store->add_profile(p);
  store->add_trajectory(testing::make_trajectory("tx", {{L::kCo, L::kEx}, {L::kGi}, {L::kRr}}));
  auto rig = testing::make_engine(testing::default_strategy_map(), {}, store);
  const auto s = rig.engine->create_session("p1", "tx", PromptSetting::kFull);
  for (int i = 0; i < 3; ++i) rig.engine->post_counselor_turn(s.id, "说说看" + std::to_string(i));

  const std::vector<std::string> replies = {"ex, co", "nonsense", "rr, co"};
  std::size_t call = 0;
  auto judge = testing::mock_gateway([&](const std::string&) { return replies[call++]; });
  const auto report = score_adherence(rig.engine->session(s.id), *judge.gateway, templates());
  ASSERT_EQ(report.turns.size(), 3u);
  EXPECT_EQ(report.unparseable, 1u);
  EXPECT_TRUE(report.turns[0].exact_match);  // set match, order ignored
  EXPECT_DOUBLE_EQ(report.turns[0].jaccard, 1.0);
  EXPECT_FALSE(report.turns[1].classified);
  EXPECT_FALSE(report.turns[2].exact_match);
  EXPECT_DOUBLE_EQ(report.turns[2].jaccard, 0.5);
  EXPECT_EQ(report.turns[2].trajectory_index, 3);
  EXPECT_DOUBLE_EQ(report.exact_match_rate, 0.5);
  EXPECT_DOUBLE_EQ(report.mean_jaccard, 0.75);
  // The judge saw the earlier turns as history for the last classification.
  EXPECT_NE(judge.transport->received().back().find("咨询师：说说看1"), std::string::npos);
  const auto j = to_json(report);
  EXPECT_TRUE(j["turns"][1]["classified"].is_null());
}

TEST(Adherence, VanillaSessionsHaveNothingToScore) {
  auto rig = testing::make_engine();
  const auto s = rig.engine->create_session("p1", "t1", PromptSetting::kVanilla);
  rig.engine->post_counselor_turn(s.id, "你好");
  auto judge = testing::mock_gateway([](const std::string&) { return "co"; });
  const auto report = score_adherence(rig.engine->session(s.id), *judge.gateway, templates());
  EXPECT_TRUE(report.turns.empty());
  EXPECT_EQ(judge.transport->calls(), 0u);
}

TEST(EvalTemplates, VersionIsStable) {
  EXPECT_EQ(templates().version().size(), 16u);
  EXPECT_EQ(EvalTemplates::load(testing::templates_dir()).version(), templates().version());
}

}  // namespace
}  // namespace trajsim
