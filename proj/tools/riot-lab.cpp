#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "riot/api/http.hpp"
#include "riot/api/service.hpp"
#include "riot/calibration.hpp"
#include "riot/collect/guest.hpp"
#include "riot/collect/host.hpp"
#include "riot/dataset.hpp"
#include "riot/error.hpp"
#include "riot/ml/model.hpp"
#include "riot/scenario_io.hpp"
#include "riot/trace.hpp"

namespace fs = std::filesystem;
using riot::api::Json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw riot::IoError("cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw riot::ValidationError(path + ": " + e.what());
  }
}

std::pair<std::string, std::uint16_t> split_endpoint(const std::string& s, std::uint16_t default_port) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) return {s, default_port};
  const std::string port = s.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) throw riot::ValidationError("bad port in '" + s + "'");
  return {s.substr(0, colon), static_cast<std::uint16_t>(p)};
}

void print_totals(const Json& r, bool json) {
  if (json) {
    std::cout << r.dump(2) << "\n";
    return;
  }
  std::printf("duration_s      %.6f\n", r.at("duration_s").get<double>());
  std::printf("energy_j        %.6f\n", r.at("energy_j").get<double>());
  if (!r.at("charge_c").is_null()) std::printf("charge_c        %.6f\n", r.at("charge_c").get<double>());
  std::printf("avg_power_mw    %.6f\n", r.at("avg_power_mw").get<double>());
  if (!r.at("avg_current_ma").is_null()) std::printf("avg_current_ma  %.6f\n", r.at("avg_current_ma").get<double>());
  if (r.contains("cycle_starts")) std::printf("cycle_starts    %zu\n", r.at("cycle_starts").get<std::size_t>());
  if (r.contains("warnings"))
    for (const auto& w : r.at("warnings")) std::printf("warning: %s\n", w.get<std::string>().c_str());
  if (r.contains("harvest")) {
    const auto& h = r.at("harvest");
    std::printf("harvest.v_end_v      %.6f\n", h.at("v_end_v").get<double>());
    std::printf("harvest.harvested_j  %.6f\n", h.at("harvested_j").get<double>());
    std::printf("harvest.consumed_j   %.6f\n", h.at("consumed_j").get<double>());
    std::printf("harvest.depletions   %zu\n", h.at("depletion_count").get<std::size_t>());
  }
}

void print_metrics(const char* label, const riot::ml::Evaluation& e) {
  std::printf("%s n=%zu", label, e.metrics.n);
  if (e.metrics.r2) std::printf(" r2=%.6f", *e.metrics.r2);
  else std::printf(" r2=undefined");
  if (e.r2_standardized_target) std::printf(" r2_standardized_target=%.6f", *e.r2_standardized_target);
  std::printf(" mae_uA=%.6g rmse_uA=%.6g\n", e.metrics.mae, e.metrics.rmse);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy modelling, trace collection and prediction for VLC/BLE IoT testbeds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(riot::api::kVersion));

  // simulate-node
  auto* sn = app.add_subcommand("simulate-node", "Integrate a node scenario");
  std::string sn_scenario, sn_horizon, sn_calib, sn_trace, sn_harvest;
  double sn_rate = 1000.0, sn_voltage = 3.0, sn_noise = 0.0;
  std::uint64_t sn_seed = 0;
  bool sn_json = false;
  sn->add_option("--scenario", sn_scenario, "Scenario file, builtin:<id> or bare id")->required();
  sn->add_option("--horizon", sn_horizon, "Horizon such as 24h, 90s, 15m");
  sn->add_option("--calib", sn_calib, "Node calibration file");
  sn->add_option("--voltage", sn_voltage, "Node supply voltage for charge/current");
  sn->add_option("--harvest", sn_harvest, "Harvest config JSON file");
  sn->add_option("--emit-trace", sn_trace, "Write a synthesized current trace CSV");
  sn->add_option("--rate", sn_rate, "Trace sample rate in Hz");
  sn->add_option("--noise", sn_noise, "Trace Gaussian noise sigma in uA");
  sn->add_option("--seed", sn_seed, "Trace noise seed");
  sn->add_flag("--json", sn_json, "Print the full JSON result");

  // simulate-ap
  auto* sa = app.add_subcommand("simulate-ap", "Integrate an AP operating-point profile");
  std::string sa_profile, sa_constants, sa_trace;
  double sa_rate = 1000.0;
  bool sa_json = false;
  sa->add_option("--profile", sa_profile, "Profile file or ap-validation")->required();
  sa->add_option("--constants", sa_constants, "Gateway constants file");
  sa->add_option("--emit-trace", sa_trace, "Write a synthesized current trace CSV");
  sa->add_option("--rate", sa_rate, "Trace sample rate in Hz");
  sa->add_flag("--json", sa_json, "Print the full JSON result");

  // calibrate
  auto* ca = app.add_subcommand("calibrate", "Fit node state powers to 24 h energy totals");
  std::string ca_totals, ca_catalog = "builtin", ca_out = "node_calibration.cfg", ca_report;
  double ca_tol = 0.05;
  ca->add_option("--totals", ca_totals, "Totals CSV (scenario,period_s,energy_j); default: reference totals");
  ca->add_option("--catalog", ca_catalog, "State duration catalog")->check(CLI::IsMember({"builtin"}));
  ca->add_option("--out", ca_out, "Calibration file to write");
  ca->add_option("--report", ca_report, "Residual report file (also printed)");
  ca->add_option("--tolerance", ca_tol, "Max relative residual accepted");

  // gen-dataset
  auto* gd = app.add_subcommand("gen-dataset", "Generate a labelled regression dataset");
  std::string gd_scenario = "windows", gd_out = "dataset.csv", gd_calib;
  riot::trace::GeneratorOptions gd_opt;
  gd->add_option("--scenario", gd_scenario, "Window generator")->check(CLI::IsMember({"windows"}));
  gd->add_option("--rows", gd_opt.n_rows, "Number of rows");
  gd->add_option("--seed", gd_opt.seed, "Seed");
  gd->add_option("--noise", gd_opt.noise_sigma_ua, "Per-sample noise sigma in uA");
  gd->add_option("--voltage", gd_opt.node_voltage_v, "Node supply voltage");
  gd->add_option("--calib", gd_calib, "Node calibration file");
  gd->add_option("--out", gd_out, "Output CSV");

  // host
  auto* ho = app.add_subcommand("host", "Collect traces from guests");
  std::string ho_listen = "127.0.0.1:" + std::to_string(riot::collect::kDefaultPort), ho_out = "collect_out";
  std::size_t ho_sessions = 0;
  double ho_wait_s = 0.0;
  ho->add_option("--listen", ho_listen, "addr:port to bind");
  ho->add_option("--out", ho_out, "Output directory");
  ho->add_option("--sessions", ho_sessions, "Exit after this many sessions (0: run until interrupted)");
  ho->add_option("--max-wait", ho_wait_s, "Give up waiting after this many seconds (0: no limit)");

  // guest
  auto* gu = app.add_subcommand("guest", "Stream a trace to a host");
  std::string gu_connect = "127.0.0.1:" + std::to_string(riot::collect::kDefaultPort), gu_replay, gu_id;
  riot::collect::GuestOptions gu_opt;
  gu->add_option("--connect", gu_connect, "host:port");
  gu->add_option("--replay", gu_replay, "Trace CSV to stream")->required();
  gu->add_option("--device-id", gu_id, "Override the trace device id");
  gu->add_option("--batch", gu_opt.batch_size, "Samples per batch")->check(CLI::PositiveNumber);
  gu->add_flag("--realtime", gu_opt.realtime, "Pace batches at the trace sample rate");
  gu->add_option("--skew-us", gu_opt.clock_skew_us, "Simulated guest clock skew");

  // train
  auto* tr = app.add_subcommand("train", "Train a current regressor");
  std::string tr_model, tr_data, tr_out = "model.json", tr_hyper;
  std::uint64_t tr_seed = 0;
  double tr_test = 0.2;
  tr->add_option("--model", tr_model, "mlp|gb|rf|et|linear|ridge")->required();
  tr->add_option("--data", tr_data, "Dataset CSV")->required();
  tr->add_option("--seed", tr_seed, "Seed");
  tr->add_option("--test-fraction", tr_test, "Held-out fraction (0: train on all)");
  tr->add_option("--hyper", tr_hyper, "Hyperparameters as a JSON object");
  tr->add_option("--out", tr_out, "Model file to write");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a saved model on a dataset");
  std::string ev_model, ev_data;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Dataset CSV")->required();

  // serve
  auto* se = app.add_subcommand("serve", "Run the HTTP API");
  std::string se_listen = "127.0.0.1", se_store = "riot_store", se_collect;
  int se_port = -1;
  se->add_option("--port", se_port, "Port (default 8080 or RIOT_LAB_HTTP_PORT)");
  se->add_option("--listen", se_listen, "Bind address");
  se->add_option("--store", se_store, "Dataset/model store directory");
  se->add_option("--collect-dir", se_collect, "Collector output directory to summarize");

  // export-builtins
  auto* ex = app.add_subcommand("export-builtins", "Write built-in scenarios and reference totals");
  std::string ex_out = "data";
  ex->add_option("--out", ex_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sn) {
      riot::api::Service svc({});
      Json req{{"scenario", sn_scenario}, {"node_voltage_v", sn_voltage}};
      if (!sn_horizon.empty()) req["horizon_s"] = sn_horizon;
      if (!sn_calib.empty()) req["calibration"] = sn_calib;
      if (!sn_harvest.empty()) req["harvest"] = read_json(sn_harvest);
      print_totals(svc.simulate_node(req), sn_json);
      if (!sn_trace.empty()) {
        auto s = riot::api::resolve_scenario(sn_scenario);
        if (!sn_horizon.empty()) s.horizon_s = riot::api::parse_duration(sn_horizon);
        std::optional<riot::node::NodePowerCalibration> c;
        if (!sn_calib.empty()) c = riot::node::NodePowerCalibration::load(sn_calib);
        const auto t = riot::scenario::expand_scenario(s, {c ? &*c : nullptr, nullptr});
        riot::trace::SynthOptions so;
        so.sample_rate_hz = sn_rate;
        so.node_voltage_v = sn_voltage;
        so.noise_sigma_ua = sn_noise;
        so.seed = sn_seed;
        so.device_id = "node";
        riot::trace::write_trace(riot::trace::synthesize_trace(t, so), sn_trace);
        std::fprintf(stderr, "wrote %s\n", sn_trace.c_str());
      }
    } else if (*sa) {
      riot::api::Service svc({});
      Json req{{"profile", sa_profile}};
      if (!sa_constants.empty()) req["constants"] = sa_constants;
      print_totals(svc.simulate_ap(req), sa_json);
      if (!sa_trace.empty()) {
        const auto s = riot::api::resolve_scenario(sa_profile);
        auto k = sa_constants.empty() ? riot::gateway::default_constants() : riot::gateway::load_constants(sa_constants);
        const auto t = riot::scenario::expand_scenario(s, {nullptr, &k});
        riot::trace::SynthOptions so;
        so.sample_rate_hz = sa_rate;
        so.node_voltage_v = k.ap.supply_voltage_v;
        so.device_id = "ap";
        riot::trace::write_trace(riot::trace::synthesize_trace(t, so), sa_trace);
        std::fprintf(stderr, "wrote %s\n", sa_trace.c_str());
      }
    } else if (*ca) {
      const auto totals = ca_totals.empty() ? riot::calibration::reference_totals()
                                            : riot::calibration::read_totals_csv(ca_totals);
      auto fo = riot::calibration::default_fit_options();
      fo.feasibility_tolerance = ca_tol;
      const auto fit = riot::calibration::fit_calibration(totals, riot::calibration::builtin_catalog(), fo);
      fit.calibration.save(ca_out);
      const auto report = fit.report.render();
      std::cout << report;
      if (!ca_report.empty()) {
        std::ofstream out(ca_report);
        if (!(out << report)) throw riot::IoError("cannot write " + ca_report);
      }
      std::fprintf(stderr, "wrote %s\n", ca_out.c_str());
    } else if (*gd) {
      std::optional<riot::node::NodePowerCalibration> c;
      if (!gd_calib.empty()) {
        c = riot::node::NodePowerCalibration::load(gd_calib);
        gd_opt.calibration = &*c;
      }
      const auto rows = riot::trace::generate_dataset(gd_opt);
      riot::trace::write_dataset_csv(rows, fs::path(gd_out));
      std::printf("rows %zu\nwrote %s\n", rows.size(), gd_out.c_str());
    } else if (*ho) {
      riot::collect::HostOptions o;
      std::tie(o.bind_addr, o.port) = split_endpoint(ho_listen, riot::collect::kDefaultPort);
      o.output_dir = ho_out;
      riot::collect::Host host(o);
      host.start();
      std::fprintf(stderr, "listening on %s:%u\n", o.bind_addr.c_str(), host.port());
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto started = std::chrono::steady_clock::now();
      while (!g_stop) {
        if (ho_sessions > 0 && host.wait_for_sessions(ho_sessions, riot::collect::Millis(200))) break;
        if (ho_sessions == 0) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        if (ho_wait_s > 0 && std::chrono::steady_clock::now() - started > std::chrono::duration<double>(ho_wait_s)) break;
      }
      host.stop();
      const auto sum = host.summary();
      for (const auto& s : sum.sessions)
        std::printf("%s samples=%zu partial=%s offset_us=%.1f file=%s\n", s.device_id.c_str(), s.samples,
                    s.partial ? "yes" : "no", s.offset_us, s.trace_file.c_str());
      for (const auto& r : sum.refused) std::printf("refused %s: %s\n", r.device_id.c_str(), r.reason.c_str());
      if (ho_sessions > 0 && sum.sessions.size() + sum.refused.size() < ho_sessions) {
        std::fprintf(stderr, "error: only %zu of %zu sessions completed\n", sum.sessions.size(), ho_sessions);
        return riot::exit_code_for(riot::ErrorCode::kIo);
      }
    } else if (*gu) {
      auto t = riot::trace::read_trace(gu_replay);
      if (!gu_id.empty()) t.device_id = gu_id;
      std::tie(gu_opt.host, gu_opt.port) = split_endpoint(gu_connect, riot::collect::kDefaultPort);
      const auto r = riot::collect::guest_run(t, gu_opt);
      std::printf("batches %zu\nsamples %zu\nretries %zu\n", r.batches_sent, r.samples_sent, r.retries);
    } else if (*tr) {
      const auto kind = riot::ml::make_kind(tr_model, tr_hyper.empty() ? riot::api::Json(nullptr) : Json::parse(tr_hyper));
      if (!(tr_test >= 0.0 && tr_test < 1.0)) throw riot::ValidationError("--test-fraction must be in [0, 1)");
      const auto rows = riot::trace::read_dataset_csv(fs::path(tr_data));
      std::vector<riot::trace::DatasetRow> train = rows, test;
      if (tr_test > 0.0) {
        auto split = riot::ml::train_test_split(rows, tr_test, tr_seed);
        if (!split.test.empty() && split.train.size() >= 2) {
          train = std::move(split.train);
          test = std::move(split.test);
        }
      }
      const auto model = riot::ml::fit(kind, train, tr_seed);
      riot::ml::save_model(model, tr_out);
      std::printf("model %s seed %llu train %zu test %zu\n", riot::ml::kind_name(kind).c_str(),
                  static_cast<unsigned long long>(tr_seed), train.size(), test.size());
      if (const auto* lp = std::get_if<riot::ml::LinearParams>(&model.params))
        std::printf("coefficients intercept=%.12g weights_standardized=[%.12g, %.12g, %.12g]\n", lp->intercept,
                    lp->weights[0], lp->weights[1], lp->weights[2]);
      print_metrics("train", riot::ml::evaluate(model, train));
      if (!test.empty()) print_metrics("test", riot::ml::evaluate(model, test));
      for (const auto& w : model.warnings) std::printf("warning: %s\n", w.c_str());
      std::fprintf(stderr, "wrote %s\n", tr_out.c_str());
    } else if (*ev) {
      const auto model = riot::ml::load_model(ev_model);
      print_metrics("eval", riot::ml::evaluate(model, riot::trace::read_dataset_csv(fs::path(ev_data))));
    } else if (*se) {
      riot::api::Service svc({se_store, se_collect});
      riot::api::HttpServer http(svc);
      const auto port = se_port >= 0 ? static_cast<std::uint16_t>(se_port) : riot::api::http_port_from_env();
      const auto bound = http.bind(se_listen, port);
      std::fprintf(stderr, "serving http://%s:%u/api/v1\n", se_listen.c_str(), bound);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread watcher([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        http.stop();
      });
      http.run();
      g_stop = true;
      watcher.join();
    } else if (*ex) {
      fs::create_directories(fs::path(ex_out) / "scenarios");
      for (const auto& id : riot::scenario::builtin_scenario_ids())
        riot::scenario::save_scenario(riot::scenario::builtin_scenario(id),
                                      fs::path(ex_out) / "scenarios" / ("scenario" + id + ".json"));
      riot::scenario::save_scenario(riot::scenario::ap_validation_profile(),
                                    fs::path(ex_out) / "scenarios" / "ap-validation.json");
      std::ofstream totals(fs::path(ex_out) / "fig3_totals.csv");
      if (!(totals << riot::calibration::totals_csv(riot::calibration::reference_totals())))
        throw riot::IoError("cannot write totals");
      std::printf("wrote %s\n", ex_out.c_str());
    }
  } catch (const riot::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", riot::to_string(e.code()), e.what());
    if (!e.detail().empty()) std::fprintf(stderr, "  %s\n", e.detail().c_str());
    return riot::exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error (validation): %s\n", e.what());
    return riot::exit_code_for(riot::ErrorCode::kValidation);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error (internal): %s\n", e.what());
    return 1;
  }
  return 0;
}
