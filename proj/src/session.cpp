#include "trajsim/session.hpp"

#include <algorithm>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim {

std::string_view status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::kActive: return "active";
    case SessionStatus::kTrajectoryDone: return "trajectory_done";
    case SessionStatus::kFreeform: return "freeform";
    case SessionStatus::kClosed: return "closed";
  }
  return "unknown";
}

SessionStatus parse_status(std::string_view name) {
  if (name == "active") return SessionStatus::kActive;
  if (name == "trajectory_done") return SessionStatus::kTrajectoryDone;
  if (name == "freeform") return SessionStatus::kFreeform;
  if (name == "closed") return SessionStatus::kClosed;
  throw Error(Errc::kInvalidArgument, "unknown session status: " + std::string(name));
}

Json to_json(const SessionTurn& turn, bool with_audit) {
  Json j{{"role", std::string(speaker_name(turn.role))}, {"text", turn.text}};
  if (turn.behavior_set) j["behavior_set"] = to_json(*turn.behavior_set);
  if (turn.sentences) j["sentences"] = *turn.sentences;
  if (turn.role == Speaker::kClient) j["count_mismatch"] = turn.count_mismatch;
  if (turn.trajectory_index) j["trajectory_index"] = *turn.trajectory_index;
  if (turn.strategy_id) j["strategy_id"] = *turn.strategy_id;
  if (with_audit) {
    if (turn.prompt_sha256) j["prompt_sha256"] = *turn.prompt_sha256;
    if (turn.latency_ms) j["latency_ms"] = *turn.latency_ms;
    if (turn.attempt_count) j["attempt_count"] = *turn.attempt_count;
    j["created_at"] = turn.created_at;
  }
  return j;
}

SessionTurn session_turn_from_json(const Json& j) {
  SessionTurn t;
  t.role = parse_speaker(j.at("role").get<std::string>());
  t.text = j.at("text").get<std::string>();
  if (j.contains("behavior_set")) t.behavior_set = behavior_set_from_json(j["behavior_set"]);
  if (j.contains("sentences")) t.sentences = j["sentences"].get<std::vector<std::string>>();
  t.count_mismatch = j.value("count_mismatch", false);
  if (j.contains("trajectory_index")) t.trajectory_index = j["trajectory_index"].get<int>();
  if (j.contains("strategy_id")) t.strategy_id = j["strategy_id"].get<std::string>();
  if (j.contains("prompt_sha256")) t.prompt_sha256 = j["prompt_sha256"].get<std::string>();
  if (j.contains("latency_ms")) t.latency_ms = j["latency_ms"].get<double>();
  if (j.contains("attempt_count")) t.attempt_count = j["attempt_count"].get<int>();
  t.created_at = j.value("created_at", "");
  return t;
}

namespace {

Json options_json(const SessionOptions& o) {
  Json j{{"freeform_tail", o.freeform_tail},
         {"regenerate_on_mismatch", o.regenerate_on_mismatch}};
  if (o.history_max_chars) j["history_max_chars"] = *o.history_max_chars;
  return j;
}

SessionOptions options_from_json(const Json& j) {
  SessionOptions o;
  o.freeform_tail = j.value("freeform_tail", false);
  o.regenerate_on_mismatch = j.value("regenerate_on_mismatch", 0);
  if (j.contains("history_max_chars")) {
    o.history_max_chars = j["history_max_chars"].get<std::size_t>();
  }
  return o;
}

Json header_json(const Session& s) {
  return Json{{"record", "session"},
              {"id", s.id},
              {"profile_id", s.instance.profile_id},
              {"trajectory_id", s.instance.trajectory_id},
              {"setting", std::string(setting_name(s.setting))},
              {"locale", std::string(locale_name(s.locale))},
              {"options", options_json(s.options)},
              {"trajectory_length", s.trajectory_length},
              {"template_version", s.template_version},
              {"created_at", s.created_at}};
}

Json instance_json(const Session& s) {
  return Json{{"profile_id", s.instance.profile_id},
              {"trajectory_id", s.instance.trajectory_id}};
}

}  // namespace

Json to_json(const Session& s) {
  Json j{{"id", s.id},
         {"instance", instance_json(s)},
         {"setting", std::string(setting_name(s.setting))},
         {"locale", std::string(locale_name(s.locale))},
         {"status", std::string(status_name(s.status))},
         {"cursor_t", s.cursor_t},
         {"length_T", s.trajectory_length},
         {"options", options_json(s.options)},
         {"template_version", s.template_version},
         {"created_at", s.created_at}};
  Json history = Json::array();
  for (const auto& t : s.history) history.push_back(to_json(t));
  j["history"] = std::move(history);
  return j;
}

Json transcript_document(const Session& s, bool redact) {
  Json turns = Json::array();
  for (const auto& t : s.history) {
    auto tj = to_json(t, /*with_audit=*/false);
    if (redact) {
      tj.erase("behavior_set");
      tj.erase("strategy_id");
    }
    turns.push_back(std::move(tj));
  }
  return Json{{"instance", instance_json(s)},
              {"setting", std::string(setting_name(s.setting))},
              {"locale", std::string(locale_name(s.locale))},
              {"status", std::string(status_name(s.status))},
              {"cursor_t", s.cursor_t},
              {"length_T", s.trajectory_length},
              {"template_version", s.template_version},
              {"redacted", redact},
              {"turn_count", s.history.size()},
              {"turns", std::move(turns)}};
}

Session load_session_log(const std::filesystem::path& path) {
  const auto records = jsonl::read(path);
  if (records.empty() || records.front().value("record", "") != "session") {
    throw Error(Errc::kIoError, path.string() + ": missing session header");
  }
  const auto& h = records.front();
  Session s;
  s.id = h.at("id").get<std::string>();
  s.instance = {h.at("profile_id").get<std::string>(), h.at("trajectory_id").get<std::string>()};
  s.setting = parse_setting(h.at("setting").get<std::string>());
  s.locale = parse_locale(h.at("locale").get<std::string>());
  s.options = options_from_json(h.value("options", Json::object()));
  s.options.locale = s.locale;
  s.trajectory_length = h.at("trajectory_length").get<std::size_t>();
  s.template_version = h.value("template_version", "");
  s.created_at = h.value("created_at", "");
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto kind = r.value("record", "");
    if (kind == "turn") {
      s.history.push_back(session_turn_from_json(r));
      if (s.history.back().trajectory_index) ++s.cursor_t;
    } else if (kind == "status") {
      s.status = parse_status(r.at("status").get<std::string>());
    }
  }
  return s;
}

SessionEngine::SessionEngine(std::shared_ptr<const CorpusStore> store,
                             std::shared_ptr<const PromptComposer> composer,
                             std::shared_ptr<Gateway> gateway, StrategyMap strategies,
                             EngineOptions options)
    : store_(std::move(store)),
      composer_(std::move(composer)),
      gateway_(std::move(gateway)),
      strategies_(std::move(strategies)),
      options_(std::move(options)) {
  if (!store_ || !composer_ || !gateway_) {
    throw Error(Errc::kInvalidConfig, "session engine needs a store, composer and gateway");
  }
  if (options_.sessions_dir) {
    std::filesystem::create_directories(*options_.sessions_dir);
    load_persisted();
  }
}

std::string SessionEngine::now() const {
  return options_.clock ? options_.clock() : text::iso_utc_now();
}

void SessionEngine::load_persisted() {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(*options_.sessions_dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Session> loaded;
  for (const auto& f : files) loaded.push_back(load_session_log(f));
  auto number = [](const std::string& id) {
    return id.size() > 1 && id[0] == 's' ? std::stoi(id.substr(1)) : 0;
  };
  std::sort(loaded.begin(), loaded.end(),
            [&](const Session& a, const Session& b) { return number(a.id) < number(b.id); });
  for (auto& s : loaded) {
    next_id_ = std::max(next_id_, number(s.id) + 1);
    order_.push_back(s.id);
    auto e = std::make_shared<Entry>();
    e->session = std::move(s);
    sessions_.emplace(order_.back(), std::move(e));
  }
}

void SessionEngine::persist_header(const Session& s) const {
  if (!options_.sessions_dir) return;
  jsonl::write(*options_.sessions_dir / (s.id + ".jsonl"), {header_json(s)});
}

void SessionEngine::persist_turn(const Session& s, const SessionTurn& turn) const {
  if (!options_.sessions_dir) return;
  Json j{{"record", "turn"}};
  const Json body = to_json(turn);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  jsonl::append(*options_.sessions_dir / (s.id + ".jsonl"), j);
}

void SessionEngine::persist_status(const Session& s) const {
  if (!options_.sessions_dir) return;
  jsonl::append(*options_.sessions_dir / (s.id + ".jsonl"),
                Json{{"record", "status"},
                     {"status", std::string(status_name(s.status))},
                     {"at", now()}});
}

std::shared_ptr<SessionEngine::Entry> SessionEngine::entry(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::kUnknownSession, "unknown session: " + session_id);
  return it->second;
}

Session SessionEngine::create_session(const std::string& profile_id,
                                      const std::string& trajectory_id, PromptSetting setting,
                                      SessionOptions options) {
  if (!store_->profile(profile_id)) {
    throw Error(Errc::kUnknownProfile, "unknown profile: " + profile_id);
  }
  const auto trajectory = store_->trajectory(trajectory_id);
  if (!trajectory) throw Error(Errc::kUnknownTrajectory, "unknown trajectory: " + trajectory_id);
  if (options.regenerate_on_mismatch < 0) {
    throw Error(Errc::kInvalidArgument, "regenerate_on_mismatch must be >= 0");
  }

  auto e = std::make_shared<Entry>();
  Session& s = e->session;
  s.instance = {profile_id, trajectory_id};
  s.setting = setting;
  s.locale = options.locale.value_or(options_.default_locale);
  s.options = options;
  s.options.locale = s.locale;
  s.trajectory_length = trajectory->length();
  s.template_version = composer_->template_version();
  s.created_at = now();
  {
    std::lock_guard lock(mu_);
    s.id = "s" + std::to_string(next_id_++);
    order_.push_back(s.id);
    sessions_.emplace(s.id, e);
  }
  persist_header(s);
  return s;
}

SessionTurn SessionEngine::post_counselor_turn(const std::string& session_id,
                                               const std::string& text,
                                               std::optional<std::string> strategy_id) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  Session& s = e->session;

  if (s.status == SessionStatus::kClosed || s.status == SessionStatus::kTrajectoryDone) {
    throw Error(Errc::kSessionClosed,
                "session " + s.id + " is " + std::string(status_name(s.status)));
  }
  if (text::trim(text).empty()) throw Error(Errc::kInvalidArgument, "counselor text is empty");

  const bool on_trajectory = s.status == SessionStatus::kActive;
  std::optional<TrajectoryTurn> slot;
  PromptSetting setting = s.setting;
  if (on_trajectory) {
    const auto trajectory = store_->trajectory(s.instance.trajectory_id);
    if (!trajectory) {
      throw Error(Errc::kUnknownTrajectory, "unknown trajectory: " + s.instance.trajectory_id);
    }
    slot = trajectory->turns.at(static_cast<std::size_t>(s.cursor_t - 1));
    if (strategy_id && strategies_.policy() == DefaultPolicy::kRejectUnmapped) {
      const auto allowed = strategies_.lookup(slot->behavior_set);
      if (!allowed.count(*strategy_id)) {
        throw Error(Errc::kStrategyNotPermitted,
                    "strategy " + *strategy_id + " is not mapped for behavior set " +
                        slot->behavior_set.key());
      }
    }
  } else {
    setting = PromptSetting::kVanilla;
  }

  const auto profile = store_->profile(s.instance.profile_id);
  if (!profile) throw Error(Errc::kUnknownProfile, "unknown profile: " + s.instance.profile_id);

  SessionTurn counselor;
  counselor.role = Speaker::kCounselor;
  counselor.text = text;
  counselor.strategy_id = strategy_id;
  counselor.created_at = now();

  std::vector<HistoryTurn> history;
  history.reserve(s.history.size() + 1);
  for (const auto& t : s.history) history.push_back({t.role, t.text});
  history.push_back({Speaker::kCounselor, text});

  PromptRequest request;
  request.setting = setting;
  request.locale = s.locale;
  request.profile_text = profile->raw_text;
  request.history = render_history(history, s.locale, s.options.history_max_chars);
  if (uses_behavior(setting)) request.behavior_set = slot->behavior_set;
  if (uses_content(setting)) request.exemplar = slot->content_exemplar;
  const auto prompt = composer_->compose(request);

  const bool counted = uses_behavior(setting);
  const std::size_t expected = counted ? slot->behavior_set.sentence_count() : 1;
  Completion completion;
  SplitResult split;
  for (int attempt = 0; attempt <= s.options.regenerate_on_mismatch; ++attempt) {
    completion = gateway_->generate(prompt);
    split = split_sentences(completion.text, expected);
    if (!counted || !split.count_mismatch) break;
  }

  SessionTurn client;
  client.role = Speaker::kClient;
  client.text = completion.text;
  client.sentences = split.sentences;
  client.count_mismatch = counted && split.count_mismatch;
  if (counted) client.behavior_set = slot->behavior_set;
  if (on_trajectory) client.trajectory_index = s.cursor_t;
  client.prompt_sha256 = text::sha256_hex(prompt);
  client.latency_ms = completion.latency_ms;
  client.attempt_count = completion.attempt_count;
  client.created_at = now();

  s.history.push_back(counselor);
  s.history.push_back(client);
  persist_turn(s, counselor);
  persist_turn(s, client);
  if (on_trajectory) {
    ++s.cursor_t;
    if (static_cast<std::size_t>(s.cursor_t) == s.trajectory_length + 1) {
      s.status = s.options.freeform_tail ? SessionStatus::kFreeform
                                         : SessionStatus::kTrajectoryDone;
      persist_status(s);
    }
  }
  return client;
}

void SessionEngine::close_session(const std::string& session_id) {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  if (e->session.status == SessionStatus::kClosed) return;
  e->session.status = SessionStatus::kClosed;
  persist_status(e->session);
}

Session SessionEngine::session(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mu);
  return e->session;
}

Json SessionEngine::transcript(const std::string& session_id, bool redact) const {
  return transcript_document(session(session_id), redact);
}

std::vector<std::string> SessionEngine::session_ids() const {
  std::lock_guard lock(mu_);
  return order_;
}

Json replay_transcript(SessionEngine& engine, const Session& recorded, bool redact) {
  auto options = recorded.options;
  options.locale = recorded.locale;
  auto fresh = engine.create_session(recorded.instance.profile_id, recorded.instance.trajectory_id,
                                     recorded.setting, options);
  for (const auto& t : recorded.history) {
    if (t.role == Speaker::kCounselor) engine.post_counselor_turn(fresh.id, t.text, t.strategy_id);
  }
  if (recorded.status == SessionStatus::kClosed) engine.close_session(fresh.id);
  return engine.transcript(fresh.id, redact);
}

}  // namespace trajsim
