#pragma once

#include "advtext/humaneval.hpp"

namespace httplib {
class Server;
}

namespace advtext::humaneval {

// JSON API under /api plus the UI assets from config().static_dir at "/".
//
//   POST /api/sessions                {worker_id, locale} -> token and quiz
//   GET  /api/sessions/:worker
//   GET  /api/sessions/:worker/quiz
//   POST /api/sessions/:worker/quiz   {answers: [{item_id, q1, q2, q3}]}
//   GET  /api/sessions/:worker/page
//   POST /api/sessions/:worker/page   {page, answers: [...]}
//   GET  /api/options
//   GET  /api/admin/aggregate         X-Admin-Token
//
// Per-worker routes require the X-Session-Token returned at session start.
void mount(httplib::Server& server, Service& service);

// Blocks serving on config().host and config().port.
void serve(Service& service);

}  // namespace advtext::humaneval
