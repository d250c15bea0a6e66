#include "trajsim/http_api.hpp"

#include "httplib.h"
#include "trajsim/text.hpp"

namespace trajsim {

int http_status_for(Errc code) {
  switch (code) {
    case Errc::kUnknownProfile:
    case Errc::kUnknownTrajectory:
    case Errc::kUnknownSession:
      return 404;
    case Errc::kSessionClosed:
    case Errc::kStrategyNotPermitted:
    case Errc::kInsufficientSessions:
    case Errc::kMissingVerdicts:
    case Errc::kEmptyCell:
    case Errc::kEmptyCorpus:
      return 409;
    case Errc::kTimeout:
      return 504;
    case Errc::kRateLimited:
      return 503;
    case Errc::kAuthError:
    case Errc::kMalformedResponse:
    case Errc::kUnparseableVerdict:
      return 502;
    case Errc::kIoError:
    case Errc::kInvalidConfig:
      return 500;
    default:
      return 400;
  }
}

namespace {

using Handler = std::function<Json(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(jsonl::dump_line(body), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view code,
                const std::string& message) {
  send_json(res, status, Json{{"code", std::string(code)}, {"message", message}});
}

// Runs a handler and maps exceptions onto {code, message} bodies.
httplib::Server::Handler wrap(Handler handler) {
  return [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    try {
      res.status = 200;
      auto body = handler(req, res);
      send_json(res, res.status, body);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), e.name(), e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, errc_name(Errc::kInvalidArgument), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  auto j = Json::parse(req.body);
  if (!j.is_object()) throw Error(Errc::kInvalidArgument, "request body must be a JSON object");
  return j;
}

std::string required_string(const Json& body, const char* field) {
  if (!body.contains(field) || !body[field].is_string()) {
    throw Error(Errc::kMissingField, field);
  }
  return body[field].get<std::string>();
}

bool query_flag(const httplib::Request& req, const char* name, bool fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = text::to_lower_ascii(req.get_param_value(name));
  return v == "1" || v == "true" || v == "yes";
}

Json session_summary(const Session& s) {
  return Json{{"id", s.id},
              {"profile_id", s.instance.profile_id},
              {"trajectory_id", s.instance.trajectory_id},
              {"setting", std::string(setting_name(s.setting))},
              {"status", std::string(status_name(s.status))},
              {"cursor_t", s.cursor_t},
              {"length_T", s.trajectory_length},
              {"progress", s.cursor_t - 1}};
}

}  // namespace

void HttpApi::mount(httplib::Server& server) {
  auto& app = app_;
  const auto task_path = app.config.eval_dir() / "task.jsonl";
  const auto verdicts_path = app.config.eval_dir() / "verdicts.jsonl";
  const auto likert_path = app.config.eval_dir() / "likert.jsonl";

  server.Post("/sessions", wrap([&app](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    SessionOptions options;
    options.freeform_tail = body.value("freeform_tail", false);
    options.regenerate_on_mismatch = body.value("regenerate_on_mismatch", 0);
    if (body.contains("locale")) options.locale = parse_locale(body["locale"].get<std::string>());
    const auto setting = parse_setting(body.value("setting", std::string("full")));
    auto s = app.engine->create_session(required_string(body, "profile_id"),
                                        required_string(body, "trajectory_id"), setting, options);
    res.status = 201;
    return to_json(s);
  }));

  server.Get("/sessions", wrap([&app](const httplib::Request&, httplib::Response&) {
    Json out = Json::array();
    for (const auto& id : app.engine->session_ids()) {
      out.push_back(session_summary(app.engine->session(id)));
    }
    return out;
  }));

  server.Get(R"(/sessions/([^/]+))", wrap([&app](const httplib::Request& req, httplib::Response&) {
    return to_json(app.engine->session(req.matches[1]));
  }));

  server.Post(R"(/sessions/([^/]+)/turns)",
              wrap([&app](const httplib::Request& req, httplib::Response&) {
                const auto body = parse_body(req);
                std::optional<std::string> strategy;
                if (body.contains("strategy_id") && !body["strategy_id"].is_null()) {
                  strategy = body["strategy_id"].get<std::string>();
                }
                const std::string id = req.matches[1];
                const auto reply =
                    app.engine->post_counselor_turn(id, required_string(body, "text"), strategy);
                return Json{{"turn", to_json(reply, /*with_audit=*/false)},
                            {"session", session_summary(app.engine->session(id))}};
              }));

  server.Post(R"(/sessions/([^/]+)/close)",
              wrap([&app](const httplib::Request& req, httplib::Response&) {
                app.engine->close_session(req.matches[1]);
                return session_summary(app.engine->session(req.matches[1]));
              }));

  server.Get(R"(/sessions/([^/]+)/transcript)",
             wrap([&app](const httplib::Request& req, httplib::Response&) {
               return app.engine->transcript(req.matches[1], query_flag(req, "redact", false));
             }));

  server.Get("/profiles", wrap([&app](const httplib::Request&, httplib::Response&) {
    Json out = Json::array();
    for (const auto& p : app.store->profiles()) out.push_back(to_json(p));
    return out;
  }));

  server.Get("/trajectories", wrap([&app](const httplib::Request&, httplib::Response&) {
    // Summaries only: per-turn labels stay server-side unless a transcript is
    // requested unredacted.
    Json out = Json::array();
    for (const auto& t : app.store->trajectories()) {
      out.push_back(Json{{"id", t.id},
                         {"source_dialogue_id", t.source_dialogue_id},
                         {"length_T", t.length()}});
    }
    return out;
  }));

  server.Get("/meta/settings", wrap([&app](const httplib::Request&, httplib::Response&) {
    Json settings = Json::array();
    for (auto s : kAllSettings) settings.push_back(std::string(setting_name(s)));
    Json strategies = Json::array();
    for (const auto& s : app.strategies.catalog().all()) {
      strategies.push_back(Json{{"id", s.id}, {"name", s.name}, {"chinese_name", s.chinese_name}});
    }
    Json dims = Json::object();
    for (auto rq : {ResearchQuestion::kRq1, ResearchQuestion::kRq3}) {
      Json list = Json::array();
      for (auto d : rq_dimensions(rq)) list.push_back(std::string(dimension_name(d)));
      dims[std::string(rq_name(rq))] = std::move(list);
    }
    return Json{{"settings", std::move(settings)},
                {"locales", Json::array({"zh", "en"})},
                {"default_locale", std::string(locale_name(app.config.locale))},
                {"template_version", app.composer->template_version()},
                {"strategy_policy", std::string(policy_name(app.strategies.policy()))},
                {"strategies", std::move(strategies)},
                {"likert_dimensions", std::move(dims)},
                {"likert_scale", Json{{"min", kLikertMin}, {"max", kLikertMax}}}};
  }));

  server.Get("/eval/task", wrap([task_path](const httplib::Request&, httplib::Response&) {
    if (!std::filesystem::exists(task_path)) {
      throw Error(Errc::kInsufficientSessions, "no discrimination task has been built");
    }
    const auto task = read_task(task_path);
    Json items = Json::array();
    for (const auto& item : task.items) items.push_back(to_json(item, /*blind=*/true));
    return Json{{"task_kind", std::string(task_kind_name(task.kind))},
                {"per_setting_quota", task.per_setting_quota},
                {"items", std::move(items)}};
  }));

  server.Post("/eval/verdicts", wrap([this, task_path, verdicts_path](
                                         const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto task = read_task(task_path);
    std::vector<Json> incoming;
    if (body.contains("verdicts")) {
      for (const auto& v : body["verdicts"]) incoming.push_back(v);
    } else {
      incoming.push_back(body);
    }
    std::vector<JudgeVerdict> parsed;
    for (const auto& j : incoming) {
      JudgeVerdict v;
      v.item_id = required_string(j, "item_id");
      if (!task.find(v.item_id)) throw Error(Errc::kInvalidArgument, "unknown item " + v.item_id);
      v.rater_id = required_string(j, "rater_id");
      v.pass = parse_pass(j.value("pass", std::string("A_first")));
      v.choice = parse_choice(required_string(j, "choice"));
      const bool human_is_a = v.pass == JudgePass::kAFirst;
      v.raw_option_letter = (*v.choice == Choice::kHuman) == human_is_a ? "A" : "B";
      v.latency_ms = j.value("latency_ms", 0.0);
      parsed.push_back(std::move(v));
    }
    std::lock_guard lock(eval_mu_);
    for (const auto& v : parsed) jsonl::append(verdicts_path, to_json(v));
    res.status = 201;
    return Json{{"accepted", parsed.size()}, {"total", read_verdicts(verdicts_path).size()}};
  }));

  server.Get("/eval/report", wrap([this, task_path, verdicts_path](const httplib::Request&,
                                                                   httplib::Response&) {
    std::lock_guard lock(eval_mu_);
    return to_json(accuracy_report(read_task(task_path), read_verdicts(verdicts_path)));
  }));

  server.Post("/eval/likert", wrap([this, likert_path](const httplib::Request& req,
                                                       httplib::Response& res) {
    const auto body = parse_body(req);
    const auto rater = required_string(body, "rater_id");
    const auto setting = parse_setting(required_string(body, "setting"));
    if (!body.contains("scores") || !body["scores"].is_object() || body["scores"].empty()) {
      throw Error(Errc::kMissingField, "scores");
    }
    std::vector<LikertResponse> responses;
    for (auto it = body["scores"].begin(); it != body["scores"].end(); ++it) {
      if (!it.value().is_number_integer()) {
        throw Error(Errc::kInvalidScore, it.key() + ": score must be an integer");
      }
      LikertResponse r{rater, setting, parse_dimension(it.key()), it.value().get<int>()};
      r.validate();
      responses.push_back(r);
    }
    std::lock_guard lock(eval_mu_);
    for (const auto& r : responses) jsonl::append(likert_path, to_json(r));
    res.status = 201;
    return Json{{"accepted", responses.size()}};
  }));

  server.Get("/eval/likert/report", wrap([this, likert_path](const httplib::Request& req,
                                                             httplib::Response&) {
    const auto rq = parse_rq(req.has_param("rq") ? req.get_param_value("rq") : "RQ1");
    const auto reference =
        parse_setting(req.has_param("reference") ? req.get_param_value("reference") : "full");
    std::vector<LikertResponse> responses;
    {
      std::lock_guard lock(eval_mu_);
      if (std::filesystem::exists(likert_path)) {
        for (const auto& j : jsonl::read(likert_path)) responses.push_back(likert_from_json(j));
      }
    }
    return to_json(likert_report(responses, rq, reference));
  }));
}

}  // namespace trajsim
