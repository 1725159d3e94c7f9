#include <doctest.h>

#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support.hpp"
#include "voxprompt/png.hpp"
#include "voxprompt/rle.hpp"
#include "voxprompt/service.hpp"

using namespace voxprompt;
using nlohmann::json;

namespace {

net::ModelConfig grid64() {
  net::ModelConfig c;
  c.image_size = 64;
  c.low_res = 16;
  return c;
}

// Oracle that sleeps so requests overlap.
class SlowOracle : public OracleSegmenter {
 public:
  using OracleSegmenter::OracleSegmenter;
  SlicePrediction predict(const SliceImage& i, const PromptSet& p, int z) const override {
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    return OracleSegmenter::predict(i, p, z);
  }
  int delay_ms = 0;
};

struct Live {
  Phantom ph = vt::ball();
  std::shared_ptr<SlowOracle> model;
  std::unique_ptr<Service> svc;
  std::thread th;
  int port = 0;

  explicit Live(ServiceConfig cfg = {}) {
    model = std::make_shared<SlowOracle>(ph.labels.class_mask(1), grid64());
    cfg.threads = 4;
    svc = std::make_unique<Service>(model, cfg);
    port = svc->bind("127.0.0.1", 0);
    th = std::thread([this] { svc->listen(); });
    httplib::Client c("127.0.0.1", port);
    for (int i = 0; i < 100 && !c.Get("/health"); ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Live() {
    svc->stop();
    th.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30);
    return c;
  }
  std::string upload() const {
    const auto bytes = write_nifti(ph.volume);
    auto r = client().Post("/volumes", std::string(bytes.begin(), bytes.end()),
                           "application/octet-stream");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["volume_id"];
  }
  std::string open_session(const std::string& vid, json extra = json::object()) const {
    json body = {{"volume_id", vid}, {"boundaries", {4, 19}}};
    body.update(extra);
    auto r = client().Post("/sessions", body.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["session_id"];
  }
  json box_prompt(int z) const {
    const auto b = *bbox_of(ph.labels.class_mask(1).slice(z));
    return {{"slice", z}, {"prompt", {{"box", {b.row_min, b.col_min, b.row_max, b.col_max}}}}};
  }
};

}  // namespace

TEST_CASE("png encoder writes a valid signature and IHDR") {
  std::vector<std::uint8_t> px(6, 85);
  const auto png = encode_png_gray8(px, 3, 2);
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  CHECK(std::equal(sig, sig + 8, png.begin()));
  CHECK(std::string(png.begin() + 12, png.begin() + 16) == "IHDR");
  CHECK(png[19] == 3);  // width, big-endian
  CHECK(png[23] == 2);
  CHECK(png[24] == 8);  // bit depth
  CHECK(png[25] == 0);  // greyscale
  CHECK(std::string(png.end() - 8, png.end() - 4) == "IEND");
}

TEST_CASE("service: health and volumes") {
  Live live;
  auto c = live.client();
  auto h = c.Get("/health");
  REQUIRE(h);
  const auto hj = json::parse(h->body);
  CHECK(hj["version"] == kVersion);
  CHECK(hj["api_version"] == kApiVersion);

  const auto a = live.upload();
  const auto b = live.upload();
  CHECK(a != b);

  auto bad = c.Post("/volumes", std::string(400, 'x'), "application/octet-stream");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto bytes = write_nifti(live.ph.volume);
  bytes[344] = 'x';
  bad = c.Post("/volumes", std::string(bytes.begin(), bytes.end()), "application/octet-stream");
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"].get<std::string>().find("magic") != std::string::npos);

  CHECK(c.Get("/volumes/vol-999999/slices/0")->status == 404);
}

TEST_CASE("service: slice png") {
  Live live;
  Volume zero({3, 4, 5}, {1, 1, 1}, 0.0f);
  const auto bytes = write_nifti(zero);
  auto c = live.client();
  auto up = c.Post("/volumes", std::string(bytes.begin(), bytes.end()), "application/octet-stream");
  const std::string id = json::parse(up->body)["volume_id"];

  auto r = c.Get("/volumes/" + id + "/slices/1");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  // Default window (-500, 1000): 0 HU -> round(255 * 500 / 1500) = 85.
  std::vector<std::uint8_t> px(20, 85);
  const auto want = encode_png_gray8(px, 5, 4);
  CHECK(r->body == std::string(want.begin(), want.end()));

  r = c.Get("/volumes/" + id + "/slices/1?window=-500,1000");
  CHECK(r->body == std::string(want.begin(), want.end()));
  CHECK(c.Get("/volumes/" + id + "/slices/3")->status == 416);
  CHECK(c.Get("/volumes/" + id + "/slices/-1")->status == 416);
  CHECK(c.Get("/volumes/" + id + "/slices/0?window=5,1")->status == 400);
}

TEST_CASE("service: session lifecycle") {
  Live live;
  auto c = live.client();
  const auto vid = live.upload();
  auto labels = write_nifti_labels(live.ph.labels);
  auto lr = c.Post("/volumes/" + vid + "/labels", std::string(labels.begin(), labels.end()),
                   "application/octet-stream");
  REQUIRE(lr);
  CHECK(lr->status == 200);

  const auto sid = live.open_session(vid, {{"class_id", 1}});
  auto r = c.Post("/sessions/" + sid + "/prompt", live.box_prompt(11).dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  auto pj = json::parse(r->body);
  CHECK(pj["dice3d"].get<double>() > 0.0);
  const auto rev = pj["revision"].get<std::uint64_t>();

  auto m = c.Get("/sessions/" + sid + "/mask");
  REQUIRE(m);
  const auto mj = json::parse(m->body);
  CHECK(m->get_header_value("ETag") == std::to_string(rev));
  CHECK_FALSE(mj["rle"].empty());
  for (const auto& s : mj["rle"]) {
    CHECK(s["slice"].get<int>() >= 4);
    CHECK(s["slice"].get<int>() <= 19);
    Runs runs;
    for (const auto& q : s["runs"]) runs.push_back({q[0].get<int>(), q[1].get<int>()});
    CHECK(rle_decode(runs, 40, 40) == live.ph.labels.class_mask(1).slice(s["slice"].get<int>()));
  }

  auto e = c.Post("/sessions/" + sid + "/edit",
                  json{{"slice", 11}, {"point", {{"row", 0}, {"col", 0}, {"label", "negative"}}}}.dump(),
                  "application/json");
  REQUIRE(e);
  CHECK(e->status == 200);
  const auto rev2 = json::parse(e->body)["revision"].get<std::uint64_t>();
  CHECK(rev2 > rev);

  auto alt = c.Get("/sessions/" + sid + "/alternatives?slice=11");
  REQUIRE(alt);
  CHECK(alt->status == 200);
  CHECK(json::parse(alt->body)["masks"].size() == 3);

  auto sel = c.Post("/sessions/" + sid + "/select", json{{"slice", 11}, {"mask_index", 2}}.dump(),
                    "application/json");
  REQUIRE(sel);
  CHECK(sel->status == 200);
  CHECK(json::parse(sel->body)["revision"].get<std::uint64_t>() > rev2);

  // Error mapping.
  CHECK(c.Post("/sessions/ses-424242/prompt", live.box_prompt(11).dump(), "application/json")->status == 404);
  CHECK(c.Post("/sessions/" + sid + "/prompt", live.box_prompt(2).dump(), "application/json")->status == 422);
  CHECK(c.Post("/sessions/" + sid + "/prompt", json{{"slice", 11}, {"prompt", json::object()}}.dump(),
               "application/json")->status == 400);
  CHECK(c.Post("/sessions/" + sid + "/select", json{{"slice", 11}, {"mask_index", 0}}.dump(),
               "application/json")->status == 400);
  CHECK(c.Post("/sessions/" + sid + "/prompt", "{not json", "application/json")->status == 400);

  httplib::Headers stale{{"If-Match", std::to_string(rev)}};
  CHECK(c.Post("/sessions/" + sid + "/prompt", stale, live.box_prompt(11).dump(), "application/json")->status == 409);
}

TEST_CASE("service: edit before prompt is a conflict; bad boundaries are 422") {
  Live live;
  auto c = live.client();
  const auto vid = live.upload();
  const auto sid = live.open_session(vid);
  auto e = c.Post("/sessions/" + sid + "/edit",
                  json{{"slice", 11}, {"point", {{"row", 20}, {"col", 20}}}}.dump(), "application/json");
  CHECK(e->status == 409);
  auto s = c.Post("/sessions", json{{"volume_id", vid}, {"boundaries", {10, 99}}}.dump(), "application/json");
  CHECK(s->status == 422);
  s = c.Post("/sessions", json{{"volume_id", vid}, {"boundaries", {{"bottom", 12}, {"top", 3}}}}.dump(),
             "application/json");
  CHECK(s->status == 422);
  s = c.Post("/sessions", json{{"volume_id", "vol-77"}, {"boundaries", {1, 2}}}.dump(), "application/json");
  CHECK(s->status == 404);
}

TEST_CASE("service: concurrent edits with the same If-Match serialize") {
  Live live;
  const auto vid = live.upload();
  const auto sid = live.open_session(vid);
  auto c = live.client();
  auto r = c.Post("/sessions/" + sid + "/prompt", live.box_prompt(11).dump(), "application/json");
  const auto rev = json::parse(r->body)["revision"].get<std::uint64_t>();
  live.model->delay_ms = 20;
  auto edit = [&] {
    auto cl = live.client();
    httplib::Headers h{{"If-Match", std::to_string(rev)}};
    auto res = cl.Post("/sessions/" + sid + "/edit", h,
                       json{{"slice", 11}, {"point", {{"row", 19}, {"col", 19}}}}.dump(), "application/json");
    return res ? res->status : -1;
  };
  auto a = std::async(std::launch::async, edit);
  auto b = std::async(std::launch::async, edit);
  std::vector<int> codes{a.get(), b.get()};
  std::sort(codes.begin(), codes.end());
  CHECK(codes == std::vector<int>{200, 409});
}

TEST_CASE("service: busy session answers 503 with Retry-After") {
  ServiceConfig cfg;
  cfg.session_wait = std::chrono::milliseconds(50);
  Live live(cfg);
  const auto vid = live.upload();
  const auto sid = live.open_session(vid);
  live.model->delay_ms = 40;  // a full sweep takes far longer than 50 ms
  auto slow = std::async(std::launch::async, [&] {
    return live.client().Post("/sessions/" + sid + "/prompt", live.box_prompt(11).dump(), "application/json")->status;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  auto r = live.client().Get("/sessions/" + sid + "/mask");
  REQUIRE(r);
  CHECK(r->status == 503);
  CHECK(r->get_header_value("Retry-After") == "1");
  CHECK(slow.get() == 200);
}

TEST_CASE("service: upload limit and CORS") {
  ServiceConfig cfg;
  cfg.max_upload_bytes = 1024;
  cfg.cors_origin = "http://localhost:5173";
  Live live(cfg);
  const auto bytes = write_nifti(live.ph.volume);
  auto c = live.client();
  auto r = c.Post("/volumes", std::string(bytes.begin(), bytes.end()), "application/octet-stream");
  REQUIRE(r);
  CHECK(r->status == 413);
  auto h = c.Get("/health");
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  auto o = c.Options("/sessions");
  REQUIRE(o);
  CHECK(o->status == 204);
}
