#include <chrono>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "riot/api/http.hpp"
#include "riot/api/service.hpp"
#include "riot/calibration.hpp"
#include "riot/collect/guest.hpp"
#include "riot/collect/host.hpp"
#include "riot/dataset.hpp"
#include "riot/error.hpp"
#include "riot/ml/model.hpp"
#include "riot/scenario.hpp"
#include "riot/trace.hpp"

// after Eigen: resolv.h defines _res
#include "httplib.h"

using namespace riot;
using namespace riot::api;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("riot_api_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("duration parsing") {
  CHECK(parse_duration("24h") == 86400.0);
  CHECK(parse_duration("90s") == 90.0);
  CHECK(parse_duration("500ms") == doctest::Approx(0.5));
  CHECK(parse_duration("15m") == 900.0);
  CHECK(parse_duration("1d") == 86400.0);
  CHECK(parse_duration("12.5") == 12.5);
  CHECK_THROWS_AS(parse_duration("abc"), ValidationError);
  CHECK_THROWS_AS(parse_duration("5y"), ValidationError);
  CHECK_THROWS_AS(parse_duration("0s"), ValidationError);
}

TEST_CASE("content hash") {
  // FNV-1a 64 reference vectors.
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("error mapping") {
  CHECK(http_status(ErrorCode::kValidation) == 400);
  CHECK(http_status(ErrorCode::kDomain) == 400);
  CHECK(http_status(ErrorCode::kNotFound) == 404);
  CHECK(http_status(ErrorCode::kConflict) == 409);
  CHECK(http_status(ErrorCode::kInternal) == 500);
  CHECK(api_code(ErrorCode::kNotFound) == "not_found");
  const auto b = error_body("validation", "bad");
  CHECK(b["error"]["code"] == "validation");
  CHECK(b["error"]["message"] == "bad");
}

TEST_CASE("simulate node matches the library") {
  Service svc({fresh_dir("sim")});
  const auto r = svc.simulate_node({{"scenario", "builtin:1m"}, {"horizon_s", "24h"}});
  CHECK(r["energy_j"].get<double>() == doctest::Approx(1611.0).epsilon(0.05));
  const auto s = scenario::builtin_scenario("1m");
  const auto e = scenario::integrate(scenario::expand_scenario(s), 3.0);
  CHECK(r["energy_j"].get<double>() == e.energy_j);
  CHECK(r["charge_c"].get<double>() == *e.charge_c);
  CHECK(r["timeline"]["truncated"] == true);
  CHECK(r["timeline"]["entries"].size() == 2000);
  CHECK(r["cycle_starts"] == 1440);

  const auto r5 = svc.simulate_node({{"scenario", "5h"}, {"horizon_s", 86400}});
  CHECK(r5["energy_j"].get<double>() == doctest::Approx(3.0).epsilon(0.05));

  auto custom = svc.simulate_node(
      {{"scenario", {{"name", "c"}, {"horizon_s", 10}, {"cycle", {{{"state", "Idle"}, {"duration_s", 10}}}}}}});
  CHECK(custom["energy_j"].get<double>() ==
        doctest::Approx(calibration::shipped_calibration().power_mw(node::NodeState::kIdle) * 10 / 1000));
  auto with_calib = svc.simulate_node(
      {{"scenario", {{"name", "c"}, {"horizon_s", 10}, {"cycle", {{{"state", "Idle"}, {"duration_s", 10}}}}}},
       {"calibration", {{"Idle", 2.0}}}});
  CHECK(with_calib["energy_j"].get<double>() == doctest::Approx(0.02));

  CHECK_THROWS_AS(svc.simulate_node({{"scenario", "1m"}, {"bogus", 1}}), ValidationError);
  CHECK_THROWS_AS(svc.simulate_node({{"horizon_s", 5}}), ValidationError);
  CHECK_THROWS_AS(svc.simulate_node({{"scenario", "9x"}}), NotFoundError);
  CHECK_THROWS_AS(svc.simulate_node({{"scenario", "1m"}, {"horizon_s", -1}}), ValidationError);

  const auto h = svc.simulate_node({{"scenario", "1h"}, {"horizon_s", 7200},
                                    {"harvest", {{"source", "light"}, {"input_power_mw", 100}}}});
  CHECK(h["harvest"]["depletion_count"] == 0);
  CHECK(h["harvest"]["voltage"].size() > 7000);
}

TEST_CASE("simulate ap matches the library") {
  Service svc({fresh_dir("ap")});
  const auto r = svc.simulate_ap({{"profile", "ap-validation"}});
  const auto e = scenario::integrate(scenario::expand_scenario(scenario::ap_validation_profile()),
                                     gateway::default_constants().ap.supply_voltage_v);
  CHECK(r["energy_j"].get<double>() == e.energy_j);
  CHECK(r["charge_c"].get<double>() == *e.charge_c);
  CHECK(r["avg_current_ma"].get<double>() == *e.avg_current_ma);
  CHECK(r["trace_preview"]["current_ma"].size() == static_cast<std::size_t>(e.duration_s * 10));
  CHECK(r["warnings"].is_array());
  CHECK_THROWS_AS(svc.simulate_ap({{"profile", "ap-validation"}, {"preview_rate_hz", 0}}), ValidationError);
}

TEST_CASE("dataset and model store") {
  const auto dir = fresh_dir("store");
  Service svc({dir});
  const Json dreq{{"rows", 200}, {"seed", 3}};
  const auto d1 = svc.create_dataset(dreq);
  const auto d2 = svc.create_dataset(dreq);
  CHECK(d1["dataset_id"] == d2["dataset_id"]);
  CHECK(d1["n_rows"] == 200);
  const auto id = d1["dataset_id"].get<std::string>();
  const auto other = svc.create_dataset({{"rows", 200}, {"seed", 4}});
  CHECK(other["dataset_id"] != d1["dataset_id"]);
  const auto csv = svc.dataset_csv(id);
  CHECK(csv.find("state_duration_s,vlc_payload_bytes,ble_payload_bytes,current_uA") != std::string::npos);
  CHECK_THROWS_AS(svc.dataset_csv("0000000000000000"), NotFoundError);
  CHECK_THROWS_AS(svc.dataset_csv("../../etc/passwd"), NotFoundError);

  const auto m1 = svc.create_model({{"kind", "linear"}, {"dataset_id", id}, {"seed", 1}});
  const auto m2 = svc.create_model({{"kind", "linear"}, {"dataset_id", id}, {"seed", 1}});
  CHECK(m1["model_id"] == m2["model_id"]);
  CHECK(m1["n_train"] == 160);
  CHECK(m1["n_test"] == 40);
  CHECK(m1["metrics"]["test"]["r2"].is_number());
  CHECK(m1.contains("coefficients"));
  const auto mid = m1["model_id"].get<std::string>();

  // a training row predicts to its own fitted value; a linear model on all rows
  const auto all = svc.create_model({{"kind", "linear"}, {"dataset_id", id}, {"test_fraction", 0}});
  CHECK(all["n_test"] == 0);
  CHECK(all["metrics"]["test"].is_null());
  std::istringstream in(csv);
  const auto rows = trace::read_dataset_csv(in);
  const auto model = ml::load_model(dir / "models" / (all["model_id"].get<std::string>() + ".model.json"));
  const Json feat{{"features", {rows[0].state_duration_s, rows[0].vlc_payload_bytes, rows[0].ble_payload_bytes}}};
  const auto p = svc.predict(all["model_id"].get<std::string>(), feat);
  CHECK(std::abs(p["current_ua"].get<double>() - ml::predict(model, ml::features_of(rows[0]))) < 1e-6);
  const auto batch = svc.predict(mid, {{"rows", {{10, 0, 0}, {20, 24, 64}}}});
  CHECK(batch["current_ua"].size() == 2);
  CHECK_THROWS_AS(svc.predict(mid, {{"features", {1, 2}}}), ValidationError);
  CHECK_THROWS_AS(svc.predict("ffffffffffffffff", {{"features", {1, 2, 3}}}), NotFoundError);

  CHECK_THROWS_AS(svc.create_model({{"kind", "svm"}, {"dataset_id", id}}), ValidationError);
  CHECK_THROWS_AS(svc.create_model({{"kind", "rf"}, {"dataset_id", "0123456789abcdef"}}), NotFoundError);
  CHECK_THROWS_AS(svc.create_model({{"kind", "rf"}, {"dataset_id", id}, {"hyperparameters", {{"depth", 3}}}}),
                  ValidationError);

  const auto job = svc.create_model({{"kind", "gb"}, {"dataset_id", id}, {"seed", 2}, {"background", true},
                                     {"hyperparameters", {{"n_stages", 10}}}});
  const auto jid = job["job_id"].get<std::string>();
  Json st;
  for (int i = 0; i < 200; ++i) {
    st = svc.job(jid);
    if (st["status"] == "done" || st["status"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  CHECK(st["status"] == "done");
  CHECK(svc.model_info(jid)["kind"] == "gradient_boosting");
  CHECK_THROWS_AS(svc.job("nope"), NotFoundError);
  CHECK(fs::exists(dir / "index.json"));
}

TEST_CASE("collect sessions summary") {
  const auto dir = fresh_dir("collect");
  collect::HostOptions ho;
  ho.port = 0;
  ho.output_dir = dir;
  collect::Host host(ho);
  host.start();
  trace::CurrentTrace t;
  t.device_id = "n1";
  t.sample_rate_hz = 1000;
  t.samples_ua.assign(500, 42.0);
  collect::GuestOptions go;
  go.port = host.port();
  collect::guest_run(t, go);
  REQUIRE(host.wait_for_sessions(1, collect::Millis(5000)));
  host.stop();
  Service svc({fresh_dir("collect_store"), dir});
  const auto s = svc.collect_sessions();
  REQUIRE(s["sessions"].size() == 1);
  CHECK(s["sessions"][0]["device_count"] == 1);
  CHECK(s["sessions"][0]["devices"][0]["device_id"] == "n1");
  Service none({fresh_dir("collect_none")});
  CHECK(none.collect_sessions()["sessions"].empty());
}

TEST_CASE("http smoke") {
  Service svc({fresh_dir("http")});
  HttpServer server(svc);
  const auto port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);
  for (int i = 0; i < 100; ++i) {
    if (auto r = cli.Get("/api/v1/health")) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  auto h = cli.Get("/api/v1/health");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(Json::parse(h->body)["status"] == "ok");

  auto sc = cli.Get("/api/v1/scenarios");
  REQUIRE(sc);
  CHECK(Json::parse(sc->body)["scenarios"].size() == 10);

  const Json body{{"scenario", "builtin:1m"}, {"horizon_s", 86400}};
  auto sim = cli.Post("/api/v1/simulate/node", body.dump(), "application/json");
  REQUIRE(sim);
  CHECK(sim->status == 200);
  CHECK(Json::parse(sim->body)["energy_j"].get<double>() == svc.simulate_node(body)["energy_j"].get<double>());

  auto ap = cli.Post("/api/v1/simulate/ap", R"({"profile":"ap-validation"})", "application/json");
  REQUIRE(ap);
  CHECK(Json::parse(ap->body).contains("trace_preview"));

  auto bad = cli.Post("/api/v1/simulate/node", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(Json::parse(bad->body)["error"]["code"] == "validation");

  auto nf = cli.Post("/api/v1/simulate/node", R"({"scenario":"7q"})", "application/json");
  REQUIRE(nf);
  CHECK(nf->status == 404);
  CHECK(Json::parse(nf->body)["error"]["code"] == "not_found");

  auto ds = cli.Post("/api/v1/datasets", R"({"rows":100,"seed":9})", "application/json");
  REQUIRE(ds);
  CHECK(ds->status == 201);
  const auto did = Json::parse(ds->body)["dataset_id"].get<std::string>();
  auto csv = cli.Get("/api/v1/datasets/" + did);
  REQUIRE(csv);
  CHECK(csv->get_header_value("Content-Type") == "text/csv");
  auto info = cli.Get("/api/v1/datasets/" + did, {{"Accept", "application/json"}});
  REQUIRE(info);
  CHECK(Json::parse(info->body)["n_rows"] == 100);

  auto m = cli.Post("/api/v1/models", Json{{"kind", "ridge"}, {"dataset_id", did}, {"seed", 1}}.dump(),
                    "application/json");
  REQUIRE(m);
  CHECK(m->status == 201);
  const auto mid = Json::parse(m->body)["model_id"].get<std::string>();
  auto mi = cli.Get("/api/v1/models/" + mid);
  REQUIRE(mi);
  CHECK(mi->status == 200);
  auto pr = cli.Post("/api/v1/models/" + mid + "/predict", R"({"features":[10,24,64]})", "application/json");
  REQUIRE(pr);
  CHECK(pr->status == 200);
  CHECK(Json::parse(pr->body)["current_ua"].is_number());

  auto missing = cli.Get("/api/v1/nowhere");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(Json::parse(missing->body)["error"]["code"] == "not_found");

  auto sessions = cli.Get("/api/v1/collect/sessions");
  REQUIRE(sessions);
  CHECK(sessions->status == 200);

  server.stop();
  th.join();
}
