#include "trajsim/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "trajsim/app.hpp"
#include "trajsim/error.hpp"
#include "trajsim/http_api.hpp"
#include "trajsim/stats.hpp"
#include "trajsim/text.hpp"

namespace trajsim::cli {

namespace {

struct Globals {
  std::string config_file;
  std::string data_dir, template_dir, config_dir, locale, policy;
  std::string base_url, model, judge_base_url, judge_model;
  bool mock = false;
  bool log_prompts = false;
  bool json = false;
};

struct Context {
  Globals g;
  CLI::App* root = nullptr;
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

AppConfig make_config(const Context& ctx) {
  Settings file;
  if (!ctx.g.config_file.empty()) file = load_settings_file(ctx.g.config_file);
  Settings flags;
  auto set = [&](const char* flag, const char* key, const std::string& value) {
    if (ctx.root->count(flag) > 0) flags[key] = value;
  };
  set("--data-dir", "data_dir", ctx.g.data_dir);
  set("--template-dir", "template_dir", ctx.g.template_dir);
  set("--config-dir", "config_dir", ctx.g.config_dir);
  set("--locale", "locale", ctx.g.locale);
  set("--policy", "strategy_policy", ctx.g.policy);
  set("--base-url", "backend.base_url", ctx.g.base_url);
  set("--model", "backend.model", ctx.g.model);
  set("--judge-base-url", "judge.base_url", ctx.g.judge_base_url);
  set("--judge-model", "judge.model", ctx.g.judge_model);
  if (ctx.g.mock) flags["mock"] = "true";
  if (ctx.g.log_prompts) flags["log_prompts"] = "true";
  auto config = resolve_config(file, settings_from_env(), flags);
  config.validate();
  return config;
}

std::filesystem::path or_default(const std::string& value, std::filesystem::path fallback) {
  return value.empty() ? std::move(fallback) : std::filesystem::path(value);
}

void print_json(std::ostream& out, const Json& j) { out << j.dump(2, ' ', false) << '\n'; }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- ingest ------------------------------------------------------------------

struct IngestArgs {
  std::string dialogues, out, anonymizer, profiles;
  std::size_t min_turns = kDefaultMinTurns;
};

int cmd_ingest(Context& ctx, const IngestArgs& a) {
  const auto config = make_config(ctx);
  const std::filesystem::path out_dir = or_default(a.out, config.data_dir);
  std::filesystem::create_directories(out_dir);
  const auto anonymizer =
      AnonymizerConfig::load(or_default(a.anonymizer, config.config_dir / "anonymizer.tsv"));

  std::vector<AnnotatedDialogue> dialogues;
  for (const auto& j : jsonl::read(a.dialogues)) dialogues.push_back(dialogue_from_json(j));
  const auto summary = ingest_corpus(dialogues, anonymizer, a.min_turns);

  std::vector<Json> trajectories, dialogue_records;
  for (const auto& t : summary.trajectories) trajectories.push_back(to_json(t));
  for (const auto& d : dialogues) dialogue_records.push_back(to_json(d));
  jsonl::write(out_dir / "trajectories.jsonl", trajectories);
  jsonl::write(out_dir / "dialogues.jsonl", dialogue_records);

  std::size_t profile_count = 0;
  if (!a.profiles.empty()) {
    const auto topics_path = config.config_dir / "topics.txt";
    const auto topics =
        std::filesystem::exists(topics_path) ? load_topic_catalog(topics_path) : std::set<std::string>{};
    std::vector<Json> profiles;
    for (const auto& j : jsonl::read(a.profiles)) {
      auto p = profile_from_json(j);
      p.validate(topics);
      profiles.push_back(to_json(p));
    }
    profile_count = profiles.size();
    jsonl::write(out_dir / "profiles.jsonl", profiles);
  }

  if (ctx.g.json) {
    Json rejected = Json::array();
    for (const auto& [id, r] : summary.rejected) {
      Json j;
      j["dialogue_id"] = id;
      j["reason"] = r.reason;
      j["turn_count"] = r.turn_count;
      rejected.push_back(std::move(j));
    }
    Json j;
    j["retained"] = summary.trajectories.size();
    j["rejected"] = summary.rejected.size();
    j["profiles"] = profile_count;
    j["min_turns"] = a.min_turns;
    j["rejections"] = std::move(rejected);
    print_json(ctx.out, j);
  } else {
    ctx.out << summary.trajectories.size() << " retained, " << summary.rejected.size()
            << " rejected\n";
    if (profile_count > 0) ctx.out << profile_count << " profiles\n";
  }
  return kExitOk;
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string profile, trajectory, setting = "full", script, strategy;
  bool interactive = false;
  bool freeform_tail = false;
  bool show_labels = false;
  int regenerate_on_mismatch = 0;
};

int cmd_simulate(Context& ctx, const SimulateArgs& a) {
  App app(make_config(ctx));
  SessionOptions options;
  options.freeform_tail = a.freeform_tail;
  options.regenerate_on_mismatch = a.regenerate_on_mismatch;
  auto session =
      app.engine->create_session(a.profile, a.trajectory, parse_setting(a.setting), options);
  const bool zh = session.locale == Locale::kZh;

  std::ifstream script;
  if (!a.script.empty()) {
    script.open(a.script);
    if (!script) throw Error(Errc::kIoError, "cannot open script " + a.script);
  }
  std::istream& source = a.script.empty() ? ctx.in : script;
  const bool echo = !ctx.g.json;
  if (echo) {
    ctx.out << "session " << session.id << " (" << setting_name(session.setting) << ", "
            << session.trajectory_length << " client turns)\n";
  }

  std::string line;
  for (;;) {
    const auto state = app.engine->session(session.id);
    if (state.status == SessionStatus::kTrajectoryDone || state.status == SessionStatus::kClosed) {
      break;
    }
    if (a.interactive && echo) ctx.out << (zh ? "咨询师> " : "Counselor> ") << std::flush;
    if (!std::getline(source, line)) break;
    const auto trimmed = std::string(text::trim(line));
    if (trimmed.empty()) continue;
    if (trimmed == "/quit" || trimmed == "/exit") break;
    std::optional<std::string> strategy;
    if (!a.strategy.empty()) strategy = a.strategy;
    const auto reply = app.engine->post_counselor_turn(session.id, trimmed, strategy);
    if (echo) {
      if (!a.interactive) ctx.out << (zh ? "咨询师：" : "Counselor: ") << trimmed << '\n';
      ctx.out << (zh ? "来访者：" : "Client: ") << reply.text;
      if (a.show_labels && reply.behavior_set) {
        ctx.out << "  [" << serialize_behavior_codes(*reply.behavior_set) << "]";
      }
      if (reply.count_mismatch) ctx.out << "  (sentence count mismatch)";
      ctx.out << '\n';
    }
  }

  const auto final_state = app.engine->session(session.id);
  if (ctx.g.json) {
    print_json(ctx.out, Json{{"session_id", final_state.id},
                             {"transcript", transcript_document(final_state, !a.show_labels)}});
  } else {
    ctx.out << "status " << status_name(final_state.status) << ", cursor " << final_state.cursor_t
            << "/" << final_state.trajectory_length + 1 << '\n';
  }
  return kExitOk;
}

// --- serve -------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(Context& ctx, const ServeArgs& a) {
  App app(make_config(ctx));
  httplib::Server server;
  HttpApi api(app);
  api.mount(server);
  ctx.out << "listening on http://" << a.host << ":" << a.port << " (templates "
          << app.composer->template_version() << (app.config.mock ? ", mock backend" : "") << ")\n"
          << std::flush;
  if (!server.listen(a.host, a.port)) {
    throw Error(Errc::kIoError, "cannot bind " + a.host + ":" + std::to_string(a.port));
  }
  return kExitOk;
}

// --- verify ------------------------------------------------------------------

struct VerifyArgs {
  std::string trajectory, strategies = "default";
};

int cmd_verify(Context& ctx, const VerifyArgs& a) {
  const auto config = make_config(ctx);
  CorpusStore store(config.data_dir);
  const auto trajectory = store.trajectory(a.trajectory);
  if (!trajectory) throw Error(Errc::kUnknownTrajectory, "unknown trajectory: " + a.trajectory);
  StrategyMap map = a.strategies == "default"
                        ? load_strategy_map(config)
                        : StrategyMap::load(a.strategies,
                                            StrategyCatalog::load(config.config_dir / "strategies.tsv"));
  if (config.strategy_policy) map.set_policy(*config.strategy_policy);
  const auto report = verify_realizable(*trajectory, map);
  if (ctx.g.json) {
    Json j{{"trajectory_id", trajectory->id},
           {"length_T", trajectory->length()},
           {"policy", std::string(policy_name(map.policy()))}};
    j.update(to_json(report));
    print_json(ctx.out, j);
  } else {
    ctx.out << "trajectory " << trajectory->id << " (T = " << trajectory->length() << ", policy "
            << policy_name(map.policy()) << "): "
            << (report.realizable ? "realizable" : "NOT realizable") << '\n';
    for (const auto& f : report.failing_turns) {
      ctx.out << "  turn " << f.index_t << ": " << failure_reason_name(f.reason) << '\n';
    }
    if (report.walkthrough) {
      for (const auto& step : *report.walkthrough) {
        ctx.out << "  t=" << step.t << "  " << serialize_behavior_codes(step.behavior_set)
                << "  -> " << step.strategy_id << '\n';
      }
    }
  }
  return report.realizable ? kExitOk : kExitDomainError;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string kind = "task1", out, task, verdicts, passes = "both", format = "md", likert;
  std::size_t quota = kDefaultQuota;
  std::uint64_t seed = 0;
  int concurrency = 4;
};

int cmd_eval_build(Context& ctx, const EvalArgs& a) {
  const auto config = make_config(ctx);
  CorpusStore store(config.data_dir);
  const auto sources = collect_sources(store, config.sessions_dir());
  const auto task = build_task(sources, parse_task_kind(a.kind), a.quota, a.seed);
  const std::filesystem::path out = or_default(a.out, config.eval_dir() / "task.jsonl");
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_task(out, task);
  if (ctx.g.json) {
    print_json(ctx.out, Json{{"task", out.string()},
                             {"task_kind", std::string(task_kind_name(task.kind))},
                             {"items", task.items.size()},
                             {"per_setting_quota", task.per_setting_quota},
                             {"seed", task.seed}});
  } else {
    ctx.out << task_kind_name(task.kind) << ": " << task.items.size() << " items ("
            << task.per_setting_quota << " per source, seed " << task.seed << ") -> "
            << out.string() << '\n';
  }
  return kExitOk;
}

int cmd_eval_judge(Context& ctx, const EvalArgs& a) {
  App app(make_config(ctx));
  const std::filesystem::path task_path =
      or_default(a.task, app.config.eval_dir() / "task.jsonl");
  const std::filesystem::path verdicts_path =
      or_default(a.verdicts, app.config.eval_dir() / "verdicts.jsonl");
  if (verdicts_path.has_parent_path()) std::filesystem::create_directories(verdicts_path.parent_path());
  const auto task = read_task(task_path);
  JudgeRunOptions options;
  options.locale = app.config.locale;
  options.concurrency = a.concurrency;
  if (a.passes == "both") {
    options.passes = {JudgePass::kAFirst, JudgePass::kBFirst};
  } else {
    options.passes = {parse_pass(a.passes)};
  }
  const auto verdicts = run_judging(task, *app.judge, app.eval_templates, verdicts_path, options);
  std::size_t abstained = 0;
  for (const auto& v : verdicts) abstained += v.abstained() ? 1 : 0;
  if (ctx.g.json) {
    print_json(ctx.out, Json{{"verdicts", verdicts.size()},
                             {"abstentions", abstained},
                             {"file", verdicts_path.string()}});
  } else {
    ctx.out << verdicts.size() << " verdicts (" << abstained << " abstentions) -> "
            << verdicts_path.string() << '\n';
  }
  return kExitOk;
}

int cmd_eval_report(Context& ctx, const EvalArgs& a) {
  const auto config = make_config(ctx);
  const std::filesystem::path task_path = or_default(a.task, config.eval_dir() / "task.jsonl");
  const std::filesystem::path verdicts_path =
      or_default(a.verdicts, config.eval_dir() / "verdicts.jsonl");
  const std::filesystem::path likert_path =
      or_default(a.likert, config.eval_dir() / "likert.jsonl");
  const std::filesystem::path out_dir = or_default(a.out, config.eval_dir());
  if (a.format != "md" && a.format != "csv") {
    throw Error(Errc::kInvalidArgument, "--format must be md or csv");
  }

  std::optional<AccuracyReport> accuracy;
  if (std::filesystem::exists(task_path) && std::filesystem::exists(verdicts_path)) {
    accuracy = accuracy_report(read_task(task_path), read_verdicts(verdicts_path));
  }
  std::vector<LikertTable> tables;
  if (std::filesystem::exists(likert_path)) {
    std::vector<LikertResponse> responses;
    for (const auto& j : jsonl::read(likert_path)) responses.push_back(likert_from_json(j));
    for (auto rq : {ResearchQuestion::kRq1, ResearchQuestion::kRq3}) {
      bool any = false;
      for (const auto& r : responses) {
        const auto dims = rq_dimensions(rq);
        any = any || std::find(dims.begin(), dims.end(), r.dimension) != dims.end();
      }
      if (any) tables.push_back(likert_report(responses, rq));
    }
  }
  if (!accuracy && tables.empty()) {
    throw Error(Errc::kMissingVerdicts, "nothing to report: no verdicts and no Likert responses");
  }

  std::string md = "# Evaluation report\n";
  std::string csv;
  if (accuracy) {
    md += "\n## Discrimination accuracy\n\n" + accuracy_markdown(*accuracy);
    csv += accuracy_csv(*accuracy);
  }
  for (const auto& t : tables) {
    md += "\n## Likert ratings\n\n" + likert_markdown(t);
    if (!csv.empty()) csv += "\n";
    csv += likert_csv(t);
  }
  std::filesystem::create_directories(out_dir);
  text::write_file(out_dir / "report.md", md);
  text::write_file(out_dir / "report.csv", csv);

  if (ctx.g.json) {
    Json j = Json::object();
    j["accuracy"] = accuracy ? to_json(*accuracy) : Json(nullptr);
    Json likert = Json::array();
    for (const auto& t : tables) likert.push_back(to_json(t));
    j["likert"] = std::move(likert);
    print_json(ctx.out, j);
  } else {
    ctx.out << (a.format == "md" ? md : csv);
  }
  return kExitOk;
}

// --- adhere ------------------------------------------------------------------

int cmd_adhere(Context& ctx, const std::string& session_id) {
  App app(make_config(ctx));
  const auto path = app.config.sessions_dir() / (session_id + ".jsonl");
  if (!std::filesystem::exists(path)) {
    throw Error(Errc::kUnknownSession, "unknown session: " + session_id);
  }
  const auto report = score_adherence(load_session_log(path), *app.judge, app.eval_templates);
  if (ctx.g.json) {
    print_json(ctx.out, to_json(report));
  } else {
    for (const auto& t : report.turns) {
      ctx.out << "t=" << t.trajectory_index << "  planned " << serialize_behavior_codes(t.planned)
              << "  classified "
              << (t.classified ? serialize_behavior_codes(*t.classified) : std::string("?"))
              << "  jaccard " << fmt(t.jaccard, 2) << '\n';
    }
    ctx.out << "exact match " << fmt(report.exact_match_rate, 3) << ", mean jaccard "
            << fmt(report.mean_jaccard, 3) << ", unparseable " << report.unparseable << '\n';
  }
  return kExitOk;
}

// --- stats -------------------------------------------------------------------

std::vector<double> parse_numbers(const std::string& csv) {
  std::vector<double> out;
  for (const auto& piece : text::split_any(csv, {",", " "})) {
    const auto t = std::string(text::trim(piece));
    if (t.empty()) continue;
    try {
      out.push_back(std::stod(t));
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidArgument, "not a number: " + t);
    }
  }
  return out;
}

int cmd_stats_corpus(Context& ctx) {
  const auto config = make_config(ctx);
  CorpusStore store(config.data_dir);
  const auto s = corpus_stats(store.profiles());
  if (ctx.g.json) {
    print_json(ctx.out, to_json(s));
  } else {
    ctx.out << s.count << " profiles: min " << s.min_chars << ", max " << s.max_chars << ", mean "
            << fmt(s.mean_chars, 1) << ", sd " << fmt(s.sd_chars, 1)
            << (s.degenerate ? " (n = 1)" : "") << ", over 2000: " << s.count_over_2000 << '\n';
  }
  return kExitOk;
}

int cmd_stats_mwu(Context& ctx, const std::string& a, const std::string& b,
                  const std::string& mode) {
  const auto xs = parse_numbers(a);
  const auto ys = parse_numbers(b);
  const auto r = stats::mann_whitney_u(xs, ys, stats::parse_mode(mode));
  if (ctx.g.json) {
    auto j = stats::to_json(r);
    j["mark"] = std::string(stats::mark_significance(r.p_two_sided));
    print_json(ctx.out, j);
  } else {
    ctx.out << "U1 = " << fmt(r.u1, 1) << ", U2 = " << fmt(r.u2, 1) << ", z = " << fmt(r.z)
            << ", p = " << fmt(r.p_two_sided, 6) << " (" << stats::method_name(r.method) << ") "
            << stats::mark_significance(r.p_two_sided) << '\n';
  }
  return kExitOk;
}

int print_version(Context& ctx) {
  ctx.out << "trajsim " << TRAJSIM_VERSION << '\n';
  try {
    const auto config = resolve_config(
        ctx.g.config_file.empty() ? Settings{} : load_settings_file(ctx.g.config_file),
        settings_from_env(),
        ctx.root->count("--template-dir") ? Settings{{"template_dir", ctx.g.template_dir}}
                                          : Settings{});
    ctx.out << "templates " << TemplateSet::load(config.template_dir).version() << '\n';
    ctx.out << "eval templates " << EvalTemplates::load(config.template_dir).version() << '\n';
  } catch (const std::exception& e) {
    ctx.out << "templates unavailable (" << e.what() << ")\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App root{"Client simulation and evaluation toolkit for counseling training", "trajsim"};
  root.require_subcommand(0, 1);
  root.fallthrough();
  Context ctx{{}, &root, in, out, err};
  auto& g = ctx.g;

  bool version = false;
  root.add_flag("--version", version, "Print build and template versions");
  root.add_option("--config", g.config_file, "key = value settings file");
  root.add_option("--data-dir", g.data_dir, "Corpus, sessions and evaluation artifacts");
  root.add_option("--template-dir", g.template_dir, "Prompt template directory");
  root.add_option("--config-dir", g.config_dir, "Label, strategy and anonymizer tables");
  root.add_option("--locale", g.locale, "zh or en");
  root.add_option("--policy", g.policy, "permit_all or reject_unmapped");
  root.add_option("--base-url", g.base_url, "Client backend base URL");
  root.add_option("--model", g.model, "Client backend model");
  root.add_option("--judge-base-url", g.judge_base_url, "Judge backend base URL");
  root.add_option("--judge-model", g.judge_model, "Judge backend model");
  root.add_flag("--mock", g.mock, "Use the deterministic in-process backends");
  root.add_flag("--log-prompts", g.log_prompts, "Write full prompts to llm_log.jsonl");
  root.add_flag("--json", g.json, "Machine-readable output");

  IngestArgs ingest_args;
  auto* ingest = root.add_subcommand("ingest", "Ingest annotated dialogues into trajectories");
  ingest->add_option("--dialogues", ingest_args.dialogues, "dialogues.jsonl")->required();
  ingest->add_option("--min-turns", ingest_args.min_turns, "Minimum total turns to retain");
  ingest->add_option("--out", ingest_args.out, "Output directory (default: data dir)");
  ingest->add_option("--anonymizer", ingest_args.anonymizer, "Anonymizer rule table");
  ingest->add_option("--profiles", ingest_args.profiles, "profiles.jsonl to validate and store");

  SimulateArgs sim_args;
  auto* simulate = root.add_subcommand("simulate", "Chat with a simulated client");
  simulate->add_option("--profile", sim_args.profile)->required();
  simulate->add_option("--trajectory", sim_args.trajectory)->required();
  simulate->add_option("--setting", sim_args.setting, "vanilla|behavior|content|full");
  auto* interactive = simulate->add_flag("--interactive", sim_args.interactive, "Read turns from stdin");
  auto* script_opt = simulate->add_option("--script", sim_args.script, "One counselor turn per line");
  interactive->excludes(script_opt);
  simulate->add_option("--strategy", sim_args.strategy, "Strategy id attached to every turn");
  simulate->add_flag("--freeform-tail", sim_args.freeform_tail, "Keep chatting after the trajectory");
  simulate->add_flag("--show-labels", sim_args.show_labels, "Show planned behavior labels");
  simulate->add_option("--regenerate-on-mismatch", sim_args.regenerate_on_mismatch);

  ServeArgs serve_args;
  auto* serve = root.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port);

  VerifyArgs verify_args;
  auto* verify = root.add_subcommand("verify", "Check that a trajectory is realizable");
  verify->add_option("--trajectory", verify_args.trajectory)->required();
  verify->add_option("--strategies", verify_args.strategies, "default or a strategy map file");

  EvalArgs eval_args;
  auto* eval = root.add_subcommand("eval", "Discrimination tasks and reports");
  eval->require_subcommand(1);
  auto* build = eval->add_subcommand("build", "Sample a discrimination task");
  build->add_option("--kind", eval_args.kind, "task1|task2");
  build->add_option("--quota", eval_args.quota, "Segments per source");
  build->add_option("--seed", eval_args.seed);
  build->add_option("--out", eval_args.out, "Task file (default: <data>/eval/task.jsonl)");
  auto* judge = eval->add_subcommand("judge", "Run the LLM judge over a task");
  judge->add_option("--task", eval_args.task);
  judge->add_option("--verdicts", eval_args.verdicts);
  judge->add_option("--passes", eval_args.passes, "both|A_first|B_first");
  judge->add_option("--concurrency", eval_args.concurrency);
  auto* report = eval->add_subcommand("report", "Accuracy and Likert tables");
  report->add_option("--format", eval_args.format, "md|csv");
  report->add_option("--task", eval_args.task);
  report->add_option("--verdicts", eval_args.verdicts);
  report->add_option("--likert", eval_args.likert);
  report->add_option("--out", eval_args.out, "Directory for report.md / report.csv");

  std::string adhere_session;
  auto* adhere = root.add_subcommand("adhere", "Score planned vs classified behaviors");
  adhere->add_option("--session", adhere_session)->required();

  std::string mwu_a, mwu_b, mwu_mode = "auto";
  auto* stats_cmd = root.add_subcommand("stats", "Descriptive statistics and U tests");
  stats_cmd->require_subcommand(1);
  auto* corpus = stats_cmd->add_subcommand("corpus", "Profile length statistics");
  auto* mwu = stats_cmd->add_subcommand("mwu", "Mann-Whitney U test");
  mwu->add_option("--a", mwu_a, "Comma-separated sample A")->required();
  mwu->add_option("--b", mwu_b, "Comma-separated sample B")->required();
  mwu->add_option("--mode", mwu_mode, "auto|exact|normal");

  std::vector<std::string> args = argv;
  if (args.empty()) args.push_back("trajsim");
  std::vector<char*> cargv;
  for (auto& a : args) cargv.push_back(a.data());

  try {
    root.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    const auto parsed = root.get_subcommands();
    out << (parsed.empty() ? root.help() : parsed.back()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n";
    const CLI::App* scope = &root;
    for (auto* sub = root.get_subcommands().empty() ? nullptr : root.get_subcommands().back();
         sub != nullptr;
         sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().back()) {
      scope = sub;
    }
    err << scope->help();
    return kExitUsage;
  }

  try {
    if (version) return print_version(ctx);
    if (*ingest) return cmd_ingest(ctx, ingest_args);
    if (*simulate) {
      if (!sim_args.interactive && sim_args.script.empty()) {
        err << "usage error: simulate needs --interactive or --script\n\n" << simulate->help();
        return kExitUsage;
      }
      return cmd_simulate(ctx, sim_args);
    }
    if (*serve) return cmd_serve(ctx, serve_args);
    if (*verify) return cmd_verify(ctx, verify_args);
    if (*build) return cmd_eval_build(ctx, eval_args);
    if (*judge) return cmd_eval_judge(ctx, eval_args);
    if (*report) return cmd_eval_report(ctx, eval_args);
    if (*adhere) return cmd_adhere(ctx, adhere_session);
    if (*corpus) return cmd_stats_corpus(ctx);
    if (*mwu) return cmd_stats_mwu(ctx, mwu_a, mwu_b, mwu_mode);
    out << root.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
}

}  // namespace trajsim::cli
