#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "sathi/service.hpp"
#include "support/test_support.hpp"

namespace sathi::service {
namespace {

using nlohmann::json;

struct Fixture {
  testing::TempDir dir;
  config::AppConfig cfg;

  Fixture() : cfg(testing::stub_config()) {
    cfg.journal_path = dir / "journal.jsonl";
    cfg.heartbeat_seconds = 0;
  }
  std::unique_ptr<Service> make() const {
    return std::make_unique<Service>(config::build_runtime(cfg));
  }
};

std::string create(Service& s, json body = json::object()) {
  const auto r = s.create_session(body);
  EXPECT_EQ(r.status, 201);
  return r.body["session_id"];
}

TEST(Wav, BuildParseAndValidate) {
  const std::vector<std::int16_t> samples(1600, 100);
  const auto wav = make_wav(samples, 16000);
  const auto info = parse_wav(wav);
  EXPECT_EQ(info.format, 1);
  EXPECT_EQ(info.channels, 1);
  EXPECT_EQ(info.sample_rate, 16000u);
  EXPECT_EQ(info.bits_per_sample, 16);
  EXPECT_EQ(info.data_bytes, 3200u);
  EXPECT_NO_THROW(validate_speech_wav(wav));
  EXPECT_THROW(validate_speech_wav(make_wav(samples, 8000)), AudioFormatError);
  EXPECT_THROW(validate_speech_wav(make_wav(samples, 16000, 2)), AudioFormatError);
  EXPECT_THROW(parse_wav("RIFF"), AudioFormatError);
  EXPECT_THROW(parse_wav(wav.substr(0, 30)), AudioFormatError);
  EXPECT_THROW(parse_wav("not audio at all, definitely"), AudioFormatError);
}

TEST(Service, SessionLifecycleAndErrors) {
  Fixture f;
  auto svc = f.make();
  EXPECT_EQ(svc->create_session({{"modality", "video"}}).status, 400);
  EXPECT_EQ(svc->create_session({{"language", "fr"}}).status, 400);
  EXPECT_EQ(svc->create_session(json::array()).status, 400);
  const auto id = create(*svc, {{"language", "en"}});
  EXPECT_EQ(id.size(), 32u);

  EXPECT_EQ(svc->post_message("nope", {{"text", "hi"}}).status, 404);
  EXPECT_EQ(svc->post_message(id, {{"text", "hi"}, {"audio", "AAAA"}}).status, 400);
  EXPECT_EQ(svc->post_message(id, json::object()).status, 400);
  EXPECT_EQ(svc->post_message(id, {{"text", "   "}}).status, 400);
  EXPECT_EQ(svc->post_message(id, {{"text", "\xff\xfe"}}).status, 400);
  EXPECT_EQ(svc->post_message(id, {{"audio", "AAAA"}}).status, 422);

  const auto r = svc->post_message(id, {{"text", "which grape variety should I plant"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["phase"], "Clarifying");
  EXPECT_EQ(r.body["pending_slot"], "grape_variety");
  EXPECT_EQ(r.body["turn_index"], 1);
  EXPECT_EQ(r.body["intent_id"], "vineyard_variety_selection");

  const auto view = svc->get_session(id);
  EXPECT_EQ(view.status, 200);
  EXPECT_EQ(view.body["transcript"].size(), 2u);
  EXPECT_EQ(view.body["slots"].size(), 4u);
  EXPECT_EQ(view.body["slots"][0]["id"], "grape_variety");
  EXPECT_EQ(view.body["slots"][0]["filled"], false);
  EXPECT_EQ(svc->get_session("nope").status, 404);

  EXPECT_EQ(svc->post_feedback(id, {{"rating", 4}, {"turn_index", 1}}).status, 201);
  EXPECT_EQ(svc->post_feedback(id, {{"rating", 6}, {"turn_index", 1}}).status, 422);
  EXPECT_EQ(svc->post_feedback(id, {{"rating", 3}, {"turn_index", 0}}).status, 422);
  EXPECT_EQ(svc->post_feedback(id, {{"rating", 3}, {"turn_index", 1}, {"helpful", "yes"}}).status, 422);

  EXPECT_EQ(svc->close_session(id).status, 200);
  EXPECT_EQ(svc->close_session(id).status, 409);
  EXPECT_EQ(svc->post_message(id, {{"text", "hello"}}).status, 409);
}

TEST(Service, SpeechSessions) {
  Fixture f;
  auto svc = f.make();
  const auto id = create(*svc, {{"modality", "speech"}});
  const auto good = base64_encode(make_wav(std::vector<std::int16_t>(160, 0), 16000));
  const auto r = svc->post_message(id, {{"audio", good}});
  EXPECT_EQ(r.status, 501);
  EXPECT_EQ(r.body["error"], "speech_unavailable");
  const auto bad = base64_encode(make_wav(std::vector<std::int16_t>(160, 0), 44100));
  EXPECT_EQ(svc->post_message(id, {{"audio", bad}}).status, 422);
  EXPECT_EQ(svc->post_message(id, {{"audio", 12}}).status, 422);
  // Text still works on a speech session; synthesis failure is reported, not fatal.
  const auto t = svc->post_message(id, {{"text", "thanks, bye"}});
  EXPECT_EQ(t.status, 200);
  EXPECT_TRUE(t.body.contains("audio_error"));
}

TEST(Service, BackendOutageIs502AndStateUnchanged) {
  Fixture f;
  auto rt = config::build_runtime(f.cfg);
  auto down = std::make_shared<backends::UnavailableBackend>();
  rt.router = std::make_shared<backends::ModelRouter>(down, down);
  Service svc(std::move(rt));
  const auto id = create(svc);
  const auto r = svc.post_message(id, {{"text", "thanks, bye"}});
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(r.body["error"], "backend_unavailable");
  EXPECT_EQ(svc.get_session(id).body["phase"], "AwaitingQuery");
}

TEST(Service, RestartRecoversEverySession) {
  Fixture f;
  std::vector<std::string> ids;
  json before;
  {
    auto svc = f.make();
    for (int i = 0; i < 5; ++i) ids.push_back(create(*svc));
    svc->post_message(ids[0], {{"text", "which grape variety should I plant"}});
    svc->post_message(ids[0], {{"text", "Thompson Seedless"}});
    svc->post_message(ids[1], {{"text", "thanks, bye"}});
    svc->write_snapshot();
    svc->post_message(ids[2], {{"text", "my crop is sick"}});
    svc->close_session(ids[3]);
    for (const auto& id : ids) before[id] = svc->get_session(id).body;
  }
  auto again = f.make();
  EXPECT_EQ(again->session_count(), 5u);
  for (const auto& id : ids) EXPECT_EQ(again->get_session(id).body, before[id]) << id;
  // The conversation continues where it left off.
  const auto r = again->post_message(ids[0], {{"text", "hot and dry"}});
  EXPECT_EQ(r.body["pending_slot"], "expected_yield_potential");
}

TEST(Service, CorruptSnapshotFallsBackToJournal) {
  Fixture f;
  std::string id;
  {
    auto svc = f.make();
    id = create(*svc);
    svc->post_message(id, {{"text", "which grape variety should I plant"}});
  }
  write_file(f.dir / "journal.jsonl.snapshot", "{not json");
  auto again = f.make();
  EXPECT_EQ(again->get_session(id).body["phase"], "Clarifying");
}

TEST(Service, ConcurrentSessionsStayIsolated) {
  Fixture f;
  auto svc = f.make();
  std::vector<std::string> ids;
  for (int i = 0; i < 16; ++i) ids.push_back(create(*svc));
  std::vector<std::thread> ts;
  std::atomic<int> failures{0};
  for (const auto& id : ids) {
    ts.emplace_back([&, id] {
      for (std::string t : {"which grape variety should I plant", "Thompson Seedless", "hot and dry",
                            "about 10 tonnes per acre", "black"}) {
        if (svc->post_message(id, {{"text", t}}).status != 200) ++failures;
      }
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(failures, 0);
  for (const auto& id : ids) {
    const auto v = svc->get_session(id).body;
    EXPECT_EQ(v["phase"], "Answered");
    EXPECT_EQ(v["transcript"].size(), 10u);
  }
}

TEST(Service, MetricsHealthAndReload) {
  Fixture f;
  std::filesystem::copy_file(f.cfg.template_path, f.dir / "t.yaml");
  f.cfg.template_path = f.dir / "t.yaml";
  auto svc = f.make();
  const auto id = create(*svc);
  svc->post_message(id, {{"text", "thanks, bye"}});
  const auto h = svc->health();
  EXPECT_EQ(h.body["status"], "ok");
  EXPECT_EQ(h.body["sessions"], 1);
  const auto m = svc->metrics("json");
  EXPECT_EQ(m.status, 200);
  EXPECT_DOUBLE_EQ(m.body["qcr"].get<double>(), 1.0);
  EXPECT_EQ(svc->metrics("text_table").content_type, "text/plain");
  EXPECT_EQ(svc->metrics("xml").status, 400);
  EXPECT_EQ(svc->reload_template().status, 200);
  write_file(f.dir / "t.yaml", "preamble: only\n");
  EXPECT_EQ(svc->reload_template().status, 422);
  // The old template keeps serving.
  EXPECT_EQ(svc->post_message(create(*svc), {{"text", "thanks, bye"}}).status, 200);
}

TEST(Http, RoutesAndCors) {
  Fixture f;
  f.cfg.port = 0;
  auto svc = f.make();
  HttpServer http(*svc, f.cfg);
  const int port = http.bind();
  ASSERT_GT(port, 0);
  std::thread t([&] { http.serve(); });
  httplib::Client c("127.0.0.1", port);

  auto created = c.Post("/v1/sessions", "{}", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const std::string id = json::parse(created->body)["session_id"];

  auto msg = c.Post(("/v1/sessions/" + id + "/messages").c_str(),
                    R"({"text": "which grape variety should I plant"})", "application/json");
  ASSERT_TRUE(msg);
  EXPECT_EQ(msg->status, 200);
  EXPECT_EQ(json::parse(msg->body)["pending_slot"], "grape_variety");

  auto bad = c.Post(("/v1/sessions/" + id + "/messages").c_str(), "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  auto got = c.Get(("/v1/sessions/" + id).c_str());
  ASSERT_TRUE(got);
  EXPECT_EQ(json::parse(got->body)["transcript"].size(), 2u);

  auto fb = c.Post(("/v1/sessions/" + id + "/feedback").c_str(), R"({"rating": 5, "turn_index": 1})",
                   "application/json");
  ASSERT_TRUE(fb);
  EXPECT_EQ(fb->status, 201);

  auto opt = c.Options("/v1/sessions");
  ASSERT_TRUE(opt);
  EXPECT_EQ(opt->status, 204);

  auto health = c.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(json::parse(health->body)["status"], "ok");
  auto table = c.Get("/v1/metrics?format=text_table");
  ASSERT_TRUE(table);
  EXPECT_TRUE(table->body.starts_with("metric"));

  auto del = c.Delete(("/v1/sessions/" + id).c_str());
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 200);
  auto after = c.Post(("/v1/sessions/" + id + "/messages").c_str(), R"({"text": "hi"})",
                      "application/json");
  ASSERT_TRUE(after);
  EXPECT_EQ(after->status, 409);
  auto missing = c.Get("/v1/sessions/unknown");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  http.stop();
  t.join();
}

}  // namespace
}  // namespace sathi::service
