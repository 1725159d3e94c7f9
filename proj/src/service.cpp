#include "voxprompt/service.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <regex>

// Uploads sent without a content type arrive as form-encoded; let the
// configured payload limit decide instead of httplib's 8 KiB default.
#define CPPHTTPLIB_FORM_URL_ENCODED_PAYLOAD_MAX_LENGTH (std::size_t{1} << 40)
#include <httplib.h>
#include <json.hpp>

#include "voxprompt/eval.hpp"
#include "voxprompt/png.hpp"
#include "voxprompt/propagate.hpp"
#include "voxprompt/rle.hpp"

namespace voxprompt {

using Json = nlohmann::ordered_json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

struct StoredVolume {
  std::shared_ptr<const Volume> volume;
  std::optional<LabelVolume> labels;  // guarded by Impl::mu
};

struct StoredSession {
  std::string id;
  std::string volume_id;
  std::int64_t created_at = 0;
  std::optional<std::int32_t> class_id;
  std::timed_mutex op;
  std::unique_ptr<Session> session;
};

Json runs_json(const Mask2D& m) {
  Json a = Json::array();
  for (const auto& r : rle_encode(m)) a.push_back({r[0], r[1]});
  return a;
}

PointPrompt point_from_json(const Json& j) {
  PointPrompt p;
  p.position = {j.at("row").get<int>(), j.at("col").get<int>()};
  const auto& l = j.contains("label") ? j.at("label") : Json("positive");
  if (l.is_string()) {
    const auto s = l.get<std::string>();
    if (s != "positive" && s != "negative")
      throw HttpError{400, "point label must be positive or negative"};
    p.positive = s == "positive";
  } else if (l.is_boolean()) {
    p.positive = l.get<bool>();
  } else {
    p.positive = l.get<int>() != 0;
  }
  return p;
}

PromptSet prompt_from_json(const Json& j) {
  PromptSet p;
  if (j.contains("points"))
    for (const auto& pt : j.at("points")) p.points.push_back(point_from_json(pt));
  if (j.contains("box")) {
    const auto& b = j.at("box");
    if (b.is_array())
      p.box = Box{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    else
      p.box = Box{b.at("row_min").get<int>(), b.at("col_min").get<int>(),
                  b.at("row_max").get<int>(), b.at("col_max").get<int>()};
  }
  if (j.contains("mask")) {
    const auto& m = j.at("mask");
    Runs runs;
    for (const auto& r : m.at("runs")) runs.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    p.mask = rle_decode(runs, m.at("height").get<int>(), m.at("width").get<int>());
  }
  if (p.empty() || (p.mask && p.mask->empty() && p.points.empty() && !p.box))
    throw HttpError{400, "prompt must contain a point, a box or a non-empty mask"};
  return p;
}

std::int64_t now_s() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const Segmenter> model;
  ServiceConfig config;
  httplib::Server server;
  std::mutex mu;
  std::map<std::string, std::shared_ptr<StoredVolume>> volumes;
  std::map<std::string, std::shared_ptr<StoredSession>> sessions;
  std::atomic<std::uint64_t> next_id{1};

  std::string new_id(const char* prefix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06llu", prefix,
                  static_cast<unsigned long long>(next_id.fetch_add(1)));
    return buf;
  }

  std::shared_ptr<StoredVolume> volume(const std::string& id) {
    std::lock_guard lk(mu);
    auto it = volumes.find(id);
    if (it == volumes.end()) throw HttpError{404, "unknown volume '" + id + "'"};
    return it->second;
  }

  std::shared_ptr<StoredSession> session(const std::string& id) {
    std::lock_guard lk(mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError{404, "unknown session '" + id + "'"};
    return it->second;
  }

  static void reply(httplib::Response& res, int status, Json body) {
    Json out = {{"api_version", kApiVersion}};
    out.update(body);
    res.status = status;
    res.set_content(out.dump(), "application/json");
  }

  // Runs fn with JSON error mapping.
  template <class F>
  httplib::Server::Handler wrap(F fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        if (e.status == 503) res.set_header("Retry-After", "1");
        reply(res, e.status, {{"error", e.message}});
      } catch (const nlohmann::json::exception& e) {
        reply(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
      } catch (const std::out_of_range& e) {
        reply(res, 422, {{"error", e.what()}});
      } catch (const std::logic_error& e) {
        // invalid_argument and friends derive from logic_error too.
        const bool state = dynamic_cast<const std::invalid_argument*>(&e) == nullptr &&
                           dynamic_cast<const std::domain_error*>(&e) == nullptr;
        reply(res, state ? 409 : 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  }

  // Locks the session for a mutation and checks If-Match against its revision.
  std::unique_lock<std::timed_mutex> lock(StoredSession& s, const httplib::Request& req,
                                          bool check_revision) {
    std::unique_lock lk(s.op, std::defer_lock);
    if (!lk.try_lock_for(config.session_wait))
      throw HttpError{503, "session busy"};
    if (check_revision && req.has_header("If-Match")) {
      std::string v = req.get_header_value("If-Match");
      v.erase(std::remove(v.begin(), v.end(), '"'), v.end());
      std::uint64_t want = 0;
      try {
        want = std::stoull(v);
      } catch (const std::exception&) {
        throw HttpError{400, "If-Match must be a revision number"};
      }
      const auto have = s.session->revision();
      if (want != have)
        throw HttpError{409, "stale revision " + v + ", current is " + std::to_string(have)};
    }
    return lk;
  }

  Json summary(const StoredSession& s) {
    const auto& pred = s.session->prediction();
    Json slices = Json::array();
    for (int z = 0; z < pred.depth(); ++z)
      if (pred.slice_count(z) > 0) slices.push_back(z);
    Json j = {{"foreground_voxels", pred.count()}, {"slices_with_foreground", slices}};
    std::lock_guard lk(mu);
    const auto& vol = volumes.at(s.volume_id);
    if (s.class_id && vol->labels) {
      const auto truth = vol->labels->class_mask(*s.class_id);
      Json per = Json::object();
      const auto& b = s.session->boundaries();
      for (int z = b.bottom; z <= b.top; ++z)
        per[std::to_string(z)] = dice(pred.slice(z), truth.slice(z));
      j["dice"] = per;
      j["dice3d"] = dice3d(pred, truth);
    }
    return j;
  }

  int slice_arg(const Json& body) { return body.at("slice").get<int>(); }

  void routes();
};

void Service::Impl::routes() {
  auto& s = server;
  s.set_payload_max_length(config.max_upload_bytes);
  if (config.cors_origin) {
    s.set_default_headers({{"Access-Control-Allow-Origin", *config.cors_origin},
                           {"Access-Control-Allow-Headers", "Content-Type, If-Match"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Expose-Headers", "ETag"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  s.Get("/health", wrap([](const httplib::Request&, httplib::Response& res) {
          reply(res, 200, {{"status", "ok"}, {"version", kVersion}});
        }));

  s.Post("/volumes", wrap([this](const httplib::Request& req, httplib::Response& res) {
           const auto* b = reinterpret_cast<const std::uint8_t*>(req.body.data());
           NiftiImage img;
           try {
             img = parse_nifti({b, req.body.size()});
           } catch (const std::exception& e) {
             throw HttpError{400, std::string("nifti: ") + e.what()};
           }
           auto v = std::make_shared<StoredVolume>();
           v->volume = std::make_shared<const Volume>(std::move(img.volume));
           const auto id = new_id("vol-");
           {
             std::lock_guard lk(mu);
             volumes[id] = v;
           }
           const auto& d = v->volume->dims();
           const auto& sp = v->volume->spacing();
           reply(res, 201, {{"volume_id", id}, {"dims", {d.z, d.y, d.x}}, {"spacing", {sp.z, sp.y, sp.x}}});
         }));

  s.Post(R"(/volumes/([^/]+)/labels)",
         wrap([this](const httplib::Request& req, httplib::Response& res) {
           auto v = volume(req.matches[1]);
           const auto* b = reinterpret_cast<const std::uint8_t*>(req.body.data());
           LabelVolume labels;
           try {
             labels = parse_nifti_labels({b, req.body.size()});
           } catch (const std::exception& e) {
             throw HttpError{400, std::string("nifti: ") + e.what()};
           }
           if (!(labels.dims() == v->volume->dims()))
             throw HttpError{400, "label dims differ from the volume"};
           const auto classes = labels.present_classes();
           {
             std::lock_guard lk(mu);
             v->labels = std::move(labels);
           }
           reply(res, 200, {{"classes", classes}});
         }));

  s.Get(R"(/volumes/([^/]+)/slices/(-?\d+))",
        wrap([this](const httplib::Request& req, httplib::Response& res) {
          auto v = volume(req.matches[1]);
          const int k = std::stoi(req.matches[2]);
          const auto& d = v->volume->dims();
          if (k < 0 || k >= d.z) {
            reply(res, 416, {{"error", "slice " + std::to_string(k) + " outside 0.." +
                                           std::to_string(d.z - 1)}});
            return;
          }
          WindowSpec w;
          if (req.has_param("window")) {
            const auto text = req.get_param_value("window");
            const auto comma = text.find(',');
            try {
              if (comma == std::string::npos) throw std::invalid_argument("no comma");
              w.lo = std::stod(text.substr(0, comma));
              w.hi = std::stod(text.substr(comma + 1));
              validate(w);
            } catch (const std::exception&) {
              throw HttpError{400, "window must be lo,hi with lo < hi"};
            }
          }
          const auto f = v->volume->slice(k);
          std::vector<std::uint8_t> px(f.values.size());
          for (std::size_t i = 0; i < px.size(); ++i)
            px[i] = static_cast<std::uint8_t>(std::lround(255.0 * window_value(f.values[i], w)));
          const auto png = encode_png_gray8(px, f.width, f.height);
          res.status = 200;
          res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

  s.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = Json::parse(req.body);
           const auto vid = body.at("volume_id").get<std::string>();
           auto v = volume(vid);
           Boundaries b;
           const auto& bj = body.at("boundaries");
           if (bj.is_array()) {
             b = {bj.at(0).get<int>(), bj.at(1).get<int>()};
           } else {
             b = {bj.at("bottom").get<int>(), bj.at("top").get<int>()};
           }
           const auto mode = forwarding_mode_from_string(body.value("mode", std::string("mask")));
           WindowSpec w;
           if (body.contains("window")) w = {body["window"].at(0).get<double>(), body["window"].at(1).get<double>()};
           auto st = std::make_shared<StoredSession>();
           try {
             st->session = std::make_unique<Session>(model, v->volume, b, mode, w);
           } catch (const std::invalid_argument& e) {
             throw HttpError{422, e.what()};
           }
           if (body.contains("class_id")) st->class_id = body["class_id"].get<std::int32_t>();
           st->id = new_id("ses-");
           st->volume_id = vid;
           st->created_at = now_s();
           {
             std::lock_guard lk(mu);
             sessions[st->id] = st;
           }
           reply(res, 201, {{"session_id", st->id},
                            {"volume_id", vid},
                            {"revision", st->session->revision()},
                            {"boundaries", {b.bottom, b.top}},
                            {"mode", to_string(mode)},
                            {"created_at", st->created_at}});
         }));

  s.Post(R"(/sessions/([^/]+)/prompt)",
         wrap([this](const httplib::Request& req, httplib::Response& res) {
           auto st = session(req.matches[1]);
           const auto body = Json::parse(req.body);
           const int z = slice_arg(body);
           const auto prompt = prompt_from_json(body.at("prompt"));
           auto lk = lock(*st, req, true);
           st->session->prompt(z, prompt);
           Json out = {{"revision", st->session->revision()}};
           out.update(summary(*st));
           reply(res, 200, out);
         }));

  s.Post(R"(/sessions/([^/]+)/edit)",
         wrap([this](const httplib::Request& req, httplib::Response& res) {
           auto st = session(req.matches[1]);
           const auto body = Json::parse(req.body);
           const int z = slice_arg(body);
           const auto point = point_from_json(body.at("point"));
           auto lk = lock(*st, req, true);
           st->session->apply_edit(z, point);
           reply(res, 200, {{"revision", st->session->revision()}, {"summary", summary(*st)}});
         }));

  s.Get(R"(/sessions/([^/]+)/mask)",
        wrap([this](const httplib::Request& req, httplib::Response& res) {
          auto st = session(req.matches[1]);
          auto lk = lock(*st, req, false);
          const auto& pred = st->session->prediction();
          Json slices = Json::array();
          for (int z = 0; z < pred.depth(); ++z)
            if (pred.slice_count(z) > 0) slices.push_back({{"slice", z}, {"runs", runs_json(pred.slice(z))}});
          res.set_header("ETag", std::to_string(st->session->revision()));
          reply(res, 200, {{"revision", st->session->revision()},
                           {"dims", {pred.depth(), pred.height(), pred.width()}},
                           {"rle", slices}});
        }));

  s.Get(R"(/sessions/([^/]+)/alternatives)",
        wrap([this](const httplib::Request& req, httplib::Response& res) {
          auto st = session(req.matches[1]);
          if (!req.has_param("slice")) throw HttpError{400, "slice query parameter required"};
          const int z = std::stoi(req.get_param_value("slice"));
          auto lk = lock(*st, req, false);
          const auto alts = st->session->alternatives(z);
          Json masks = Json::array();
          for (int k = 0; k < 3; ++k) masks.push_back({{"mask_index", k + 1}, {"runs", runs_json(alts[k])}});
          reply(res, 200, {{"revision", st->session->revision()},
                           {"slice", z},
                           {"height", alts[0].height()},
                           {"width", alts[0].width()},
                           {"masks", masks}});
        }));

  s.Post(R"(/sessions/([^/]+)/select)",
         wrap([this](const httplib::Request& req, httplib::Response& res) {
           auto st = session(req.matches[1]);
           const auto body = Json::parse(req.body);
           const int z = slice_arg(body);
           const int k = body.at("mask_index").get<int>();
           auto lk = lock(*st, req, true);
           st->session->select_alternative(z, k);
           reply(res, 200, {{"revision", st->session->revision()}});
         }));
}

Service::Service(std::shared_ptr<const Segmenter> model, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  impl_->config = config;
  const int threads = std::max(1, config.threads);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0)
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace voxprompt
