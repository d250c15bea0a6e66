#pragma once

#include <mutex>
#include <string>

#include "trajsim/app.hpp"
#include "trajsim/error.hpp"

namespace httplib {
class Server;
}

namespace trajsim {

int http_status_for(Errc code);

/// JSON-over-HTTP front end for the session engine and the evaluation store.
///
///   POST /sessions                      create
///   GET  /sessions                      list summaries
///   GET  /sessions/{id}                 state
///   POST /sessions/{id}/turns           counselor text in, client reply out
///   POST /sessions/{id}/close
///   GET  /sessions/{id}/transcript?redact=true|false
///   GET  /profiles, /trajectories, /meta/settings
///   GET  /eval/task                     blind items
///   POST /eval/verdicts                 human judgments
///   GET  /eval/report                   accuracy per source
///   POST /eval/likert                   questionnaire scores
///   GET  /eval/likert/report?rq=RQ1
///
/// Errors come back as {"code", "message"} with a 4xx/5xx status.
class HttpApi {
 public:
  explicit HttpApi(App& app) : app_(app) {}

  void mount(httplib::Server& server);

 private:
  App& app_;
  std::mutex eval_mu_;
};

}  // namespace trajsim
