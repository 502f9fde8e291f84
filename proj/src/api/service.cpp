#include "riot/api/service.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "riot/calibration.hpp"
#include "riot/dataset.hpp"
#include "riot/error.hpp"
#include "riot/harvest.hpp"
#include "riot/ml/model.hpp"
#include "riot/scenario_io.hpp"
#include "riot/trace.hpp"

namespace riot::api {

namespace fs = std::filesystem;

std::uint16_t http_port_from_env() {
  const char* v = std::getenv("RIOT_LAB_HTTP_PORT");
  if (v == nullptr || *v == '\0') return kDefaultHttpPort;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p <= 0 || p > 65535)
    throw ValidationError(std::string("RIOT_LAB_HTTP_PORT is not a valid port: ") + v);
  return static_cast<std::uint16_t>(p);
}

double parse_duration(const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ValidationError("bad duration '" + text + "'");
  }
  const std::string unit = text.substr(pos);
  double k = 0.0;
  if (unit.empty() || unit == "s") k = 1.0;
  else if (unit == "ms") k = 1e-3;
  else if (unit == "m" || unit == "min") k = 60.0;
  else if (unit == "h") k = 3600.0;
  else if (unit == "d") k = 86400.0;
  else throw ValidationError("bad duration unit in '" + text + "' (ms, s, m, h, d)");
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("duration must be > 0: '" + text + "'");
  return v * k;
}

scenario::Scenario resolve_scenario(const std::string& ref) {
  std::string id = ref;
  if (id.rfind("builtin:", 0) == 0) return scenario::builtin_scenario(id.substr(8));
  const auto ids = scenario::builtin_scenario_ids();
  if (id == "ap-validation" || std::find(ids.begin(), ids.end(), id) != ids.end()) return scenario::builtin_scenario(id);
  if (!fs::exists(id)) {
    std::string known;
    for (const auto& b : ids) known += " " + b;
    throw NotFoundError("no built-in scenario or file named '" + ref + "' (built-ins:" + known + " ap-validation)");
  }
  return scenario::load_scenario(id);
}

scenario::Scenario scenario_from_request(const Json& j) {
  if (j.is_string()) return resolve_scenario(j.get<std::string>());
  if (j.is_object()) return scenario::scenario_from_json(scenario::Json::parse(j.dump()));
  throw ValidationError("scenario must be a reference string or a scenario object");
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json error_body(const std::string& code, const std::string& message, const std::string& detail) {
  return {{"error", {{"code", code}, {"message", message}, {"detail", detail}}}};
}

std::string api_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kValidation:
    case ErrorCode::kProtocol: return "validation";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    default: return "internal";
  }
}

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::kValidation:
    case ErrorCode::kProtocol:
    case ErrorCode::kDomain: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    default: return 500;
  }
}

namespace {

double number_field(const Json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::uint64_t uint_field(const Json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ValidationError(std::string("'") + key + "' must be a nonnegative integer");
  return j.at(key).get<std::uint64_t>();
}

void allow_keys(const Json& j, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) throw ValidationError("unknown request field '" + k + "'");
  }
}

double horizon_field(const Json& req) {
  if (!req.contains("horizon_s") || req.at("horizon_s").is_null()) return -1.0;
  const auto& h = req.at("horizon_s");
  if (h.is_string()) return parse_duration(h.get<std::string>());
  if (!h.is_number() || !(h.get<double>() > 0.0)) throw ValidationError("horizon_s must be > 0");
  return h.get<double>();
}

Json timeline_json(const scenario::Timeline& t, std::size_t max_entries) {
  auto j = Json::parse(scenario::to_json(t).dump());
  auto& e = j["entries"];
  const bool truncated = e.size() > max_entries;
  if (truncated) e.erase(e.begin() + static_cast<std::ptrdiff_t>(max_entries), e.end());
  j["entry_count"] = t.entries.size();
  j["truncated"] = truncated;
  return j;
}

node::NodePowerCalibration calibration_from(const Json& j) {
  if (j.is_string()) return node::NodePowerCalibration::load(j.get<std::string>());
  if (!j.is_object()) throw ValidationError("calibration must be a file path or a {state: mW} object");
  node::NodePowerCalibration c = calibration::shipped_calibration();
  for (const auto& [k, v] : j.items()) {
    const auto s = node::parse_node_state(k);
    if (!s) throw ValidationError("unknown node state '" + k + "' in calibration");
    if (!v.is_number()) throw ValidationError("calibration power for " + k + " must be a number");
    c.set(*s, v.get<double>(), "user");
  }
  c.check_invariants();
  return c;
}

Json metrics_json(const ml::Evaluation& e) {
  Json j{{"n", e.metrics.n}, {"mae_ua", e.metrics.mae}, {"rmse_ua", e.metrics.rmse}};
  j["r2"] = e.metrics.r2 ? Json(*e.metrics.r2) : Json(nullptr);
  j["r2_standardized_target"] = e.r2_standardized_target ? Json(*e.r2_standardized_target) : Json(nullptr);
  return j;
}

Json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  return Json::parse(in);
}

void write_text_file(const fs::path& p, const std::string& text) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, p);
}

bool valid_id(const std::string& id) {
  return id.size() == 16 && std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

}  // namespace

Service::Service(ServiceOptions opt) : opt_(std::move(opt)) {}

Service::~Service() {
  for (auto& t : workers_)
    if (t.joinable()) t.join();
}

Json Service::health() const { return {{"status", "ok"}, {"version", kVersion}}; }

Json Service::scenarios() const {
  Json list = Json::array();
  for (const auto& id : scenario::builtin_scenario_ids()) {
    const auto s = scenario::builtin_scenario(id);
    list.push_back({{"id", id},
                    {"name", s.name},
                    {"active_duration_s", scenario::active_duration(s.cycle)},
                    {"scenario", Json::parse(scenario::to_json(s).dump())}});
  }
  const auto ap = scenario::ap_validation_profile();
  Json aps = Json::array({{{"id", "ap-validation"},
                           {"name", ap.name},
                           {"duration_s", ap.horizon_s},
                           {"scenario", Json::parse(scenario::to_json(ap).dump())}}});
  return {{"scenarios", list}, {"ap_profiles", aps}};
}

Json Service::simulate_node(const Json& req) const {
  allow_keys(req, {"scenario", "horizon_s", "calibration", "node_voltage_v", "harvest", "max_timeline_entries"});
  if (!req.contains("scenario")) throw ValidationError("missing 'scenario'");
  auto s = scenario_from_request(req.at("scenario"));
  if (const double h = horizon_field(req); h > 0) s.horizon_s = h;
  const double v = number_field(req, "node_voltage_v", 3.0);
  if (!(v > 0.0)) throw ValidationError("node_voltage_v must be > 0");
  std::optional<node::NodePowerCalibration> calib;
  if (req.contains("calibration") && !req.at("calibration").is_null()) calib = calibration_from(req.at("calibration"));
  const auto max_entries = static_cast<std::size_t>(uint_field(req, "max_timeline_entries", 2000));

  const auto t = scenario::expand_scenario(s, {calib ? &*calib : nullptr, nullptr});
  const auto e = scenario::integrate(t, v);
  Json out{{"scenario", s.name},
           {"duration_s", e.duration_s},
           {"energy_j", e.energy_j},
           {"charge_c", *e.charge_c},
           {"avg_power_mw", e.avg_power_mw},
           {"avg_current_ma", *e.avg_current_ma},
           {"node_voltage_v", v},
           {"cycle_starts", scenario::count_cycle_starts(s)},
           {"timeline", timeline_json(t, max_entries)}};
  if (req.contains("harvest") && !req.at("harvest").is_null()) {
    auto cfg = scenario::harvest_config_from_json(scenario::Json::parse(req.at("harvest").dump()));
    if (!req.at("harvest").contains("load_voltage_v")) cfg.load_voltage_v = v;
    if (calib && !cfg.halted_power_mw) cfg.halted_power_mw = calib->power_mw(node::NodeState::kDeepSleep);
    out["harvest"] = Json::parse(scenario::to_json(scenario::simulate_harvest(t, cfg)).dump());
  }
  return out;
}

Json Service::simulate_ap(const Json& req) const {
  allow_keys(req, {"profile", "supply_voltage_v", "constants", "preview_rate_hz", "max_timeline_entries"});
  if (!req.contains("profile")) throw ValidationError("missing 'profile'");
  const auto s = scenario_from_request(req.at("profile"));
  gateway::GatewayConstants k = gateway::default_constants();
  if (req.contains("constants") && !req.at("constants").is_null()) {
    const auto& c = req.at("constants");
    if (c.is_string()) {
      k = gateway::load_constants(c.get<std::string>());
    } else if (c.is_object()) {
      KeyValueFile kv;
      for (const auto& [key, val] : c.items()) {
        if (!val.is_number()) throw ValidationError("constant '" + key + "' must be a number");
        std::ostringstream vs;
        vs.precision(17);
        vs << val.get<double>();
        kv.set(key, vs.str());
      }
      k = gateway::constants_from(kv);
    } else {
      throw ValidationError("constants must be a file path or an object");
    }
  }
  const double v = number_field(req, "supply_voltage_v", k.ap.supply_voltage_v);
  if (!(v > 0.0)) throw ValidationError("supply_voltage_v must be > 0");
  const double rate = number_field(req, "preview_rate_hz", 10.0);
  if (!(rate > 0.0 && rate <= 1000.0)) throw ValidationError("preview_rate_hz must be in (0, 1000]");
  const auto max_entries = static_cast<std::size_t>(uint_field(req, "max_timeline_entries", 2000));

  Json warnings = Json::array();
  auto collect = [&](const std::vector<scenario::StateSegment>& segs) {
    for (const auto& seg : segs)
      if (const auto* p = std::get_if<gateway::ApOperatingPoint>(&seg.state))
        for (auto& w : gateway::validate(*p)) warnings.push_back(w);
  };
  collect(s.preamble);
  collect(s.cycle);

  const auto t = scenario::expand_scenario(s, {nullptr, &k});
  const auto e = scenario::integrate(t, v);
  trace::SynthOptions so;
  so.sample_rate_hz = rate;
  so.node_voltage_v = v;
  const auto preview = trace::synthesize_trace(t, so);
  Json samples = Json::array();
  for (double ua : preview.samples_ua) samples.push_back(ua / 1000.0);
  return {{"profile", s.name},
          {"duration_s", e.duration_s},
          {"energy_j", e.energy_j},
          {"charge_c", e.charge_c ? Json(*e.charge_c) : Json(nullptr)},
          {"avg_current_ma", e.avg_current_ma ? Json(*e.avg_current_ma) : Json(nullptr)},
          {"avg_power_mw", e.avg_power_mw},
          {"supply_voltage_v", v},
          {"warnings", warnings},
          {"trace_preview", {{"sample_rate_hz", rate}, {"current_ma", samples}}},
          {"timeline", timeline_json(t, max_entries)}};
}

void Service::record_index(const std::string& section, const std::string& id, const Json& meta) {
  const auto path = opt_.store_dir / "index.json";
  Json idx = fs::exists(path) ? read_json_file(path) : Json{{"datasets", Json::object()}, {"models", Json::object()}};
  idx[section][id] = meta;
  write_text_file(path, idx.dump(2) + "\n");
}

Json Service::create_dataset(const Json& req) {
  allow_keys(req, {"rows", "seed", "noise_sigma_ua", "min_window_s", "max_window_s", "node_voltage_v", "generator"});
  trace::GeneratorOptions o;
  o.n_rows = uint_field(req, "rows", o.n_rows);
  o.seed = uint_field(req, "seed", o.seed);
  o.noise_sigma_ua = number_field(req, "noise_sigma_ua", o.noise_sigma_ua);
  o.min_window_s = number_field(req, "min_window_s", o.min_window_s);
  o.max_window_s = number_field(req, "max_window_s", o.max_window_s);
  o.node_voltage_v = number_field(req, "node_voltage_v", o.node_voltage_v);
  const std::string gen = req.value("generator", std::string("windows"));
  if (gen != "windows") throw ValidationError("unknown dataset generator '" + gen + "' (windows)");
  if (o.n_rows > 1'000'000) throw ValidationError("rows must be <= 1000000");
  if (!(o.noise_sigma_ua >= 0.0)) throw ValidationError("noise_sigma_ua must be >= 0");

  const Json spec{{"generator", gen},
                  {"rows", o.n_rows},
                  {"seed", o.seed},
                  {"noise_sigma_ua", o.noise_sigma_ua},
                  {"min_window_s", o.min_window_s},
                  {"max_window_s", o.max_window_s},
                  {"node_voltage_v", o.node_voltage_v}};
  const std::string id = content_hash("dataset:" + spec.dump());
  const auto csv = opt_.store_dir / "datasets" / (id + ".csv");
  Json meta{{"dataset_id", id}, {"n_rows", o.n_rows}, {"params", spec}};
  std::lock_guard lk(store_mu_);
  if (!fs::exists(csv)) {
    const auto rows = trace::generate_dataset(o);
    std::ostringstream os;
    trace::write_dataset_csv(rows, os);
    write_text_file(csv, os.str());
    write_text_file(opt_.store_dir / "datasets" / (id + ".json"), meta.dump(2) + "\n");
    record_index("datasets", id, meta);
  }
  return meta;
}

std::string Service::dataset_csv(const std::string& id) const {
  const auto p = opt_.store_dir / "datasets" / (id + ".csv");
  if (!valid_id(id) || !fs::exists(p)) throw NotFoundError("unknown dataset '" + id + "'");
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Json Service::dataset_info(const std::string& id) const {
  const auto p = opt_.store_dir / "datasets" / (id + ".json");
  if (!valid_id(id) || !fs::exists(p)) throw NotFoundError("unknown dataset '" + id + "'");
  return read_json_file(p);
}

Json Service::train_and_store(const Json& spec, const std::string& id) {
  const auto dataset_id = spec.at("dataset_id").get<std::string>();
  const auto kind = ml::make_kind(spec.at("kind").get<std::string>(), spec.at("hyperparameters"));
  const auto seed = spec.at("seed").get<std::uint64_t>();
  const double test_fraction = spec.at("test_fraction").get<double>();
  std::istringstream in(dataset_csv(dataset_id));
  const auto rows = trace::read_dataset_csv(in, dataset_id);

  std::vector<trace::DatasetRow> train = rows, test;
  if (test_fraction > 0.0) {
    auto split = ml::train_test_split(rows, test_fraction, seed);
    if (!split.test.empty() && split.train.size() >= 2) {
      train = std::move(split.train);
      test = std::move(split.test);
    }
  }
  const auto model = ml::fit(kind, train, seed);
  Json meta{{"model_id", id},
            {"kind", ml::kind_name(kind)},
            {"dataset_id", dataset_id},
            {"seed", seed},
            {"test_fraction", test_fraction},
            {"hyperparameters", ml::hyperparameters(kind)},
            {"n_train", train.size()},
            {"n_test", test.size()},
            {"warnings", model.warnings}};
  meta["metrics"] = {{"train", metrics_json(ml::evaluate(model, train))},
                     {"test", test.empty() ? Json(nullptr) : metrics_json(ml::evaluate(model, test))}};
  if (const auto* lp = std::get_if<ml::LinearParams>(&model.params)) {
    meta["coefficients"] = {{"intercept", lp->intercept}, {"weights_standardized", lp->weights}};
  }
  std::lock_guard lk(store_mu_);
  write_text_file(opt_.store_dir / "models" / (id + ".model.json"), ml::to_json(model).dump() + "\n");
  write_text_file(opt_.store_dir / "models" / (id + ".json"), meta.dump(2) + "\n");
  record_index("models", id, {{"kind", meta["kind"]}, {"dataset_id", dataset_id}, {"seed", seed}});
  return meta;
}

Json Service::create_model(const Json& req) {
  allow_keys(req, {"kind", "dataset_id", "seed", "test_fraction", "hyperparameters", "background"});
  if (!req.contains("kind") || !req.at("kind").is_string()) throw ValidationError("missing string 'kind'");
  if (!req.contains("dataset_id") || !req.at("dataset_id").is_string())
    throw ValidationError("missing string 'dataset_id'");
  const auto kind = ml::make_kind(req.at("kind").get<std::string>(), req.value("hyperparameters", Json(nullptr)));
  const auto dataset_id = req.at("dataset_id").get<std::string>();
  dataset_info(dataset_id);  // NotFound early
  const double tf = number_field(req, "test_fraction", 0.2);
  if (!(tf >= 0.0 && tf < 1.0)) throw ValidationError("test_fraction must be in [0, 1)");
  const Json spec{{"kind", ml::kind_name(kind)},
                  {"hyperparameters", ml::hyperparameters(kind)},
                  {"dataset_id", dataset_id},
                  {"seed", uint_field(req, "seed", 0)},
                  {"test_fraction", tf}};
  const std::string id = content_hash("model:" + spec.dump());
  if (fs::exists(opt_.store_dir / "models" / (id + ".json"))) {
    auto meta = model_info(id);
    if (req.value("background", false)) return {{"job_id", id}, {"model_id", id}, {"status", "done"}};
    return meta;
  }
  if (!req.value("background", false)) return train_and_store(spec, id);

  std::lock_guard lk(jobs_mu_);
  if (!jobs_.contains(id)) {
    jobs_[id] = Job{"queued", id, nullptr, nullptr};
    workers_.emplace_back([this, spec, id] {
      {
        std::lock_guard l(jobs_mu_);
        jobs_[id].status = "running";
      }
      Json result, error;
      try {
        result = train_and_store(spec, id);
      } catch (const Error& e) {
        error = error_body(api_code(e.code()), e.what(), e.detail())["error"];
      } catch (const std::exception& e) {
        error = error_body("internal", e.what())["error"];
      }
      std::lock_guard l(jobs_mu_);
      jobs_[id].status = error.is_null() ? "done" : "failed";
      jobs_[id].result = result;
      jobs_[id].error = error;
    });
  }
  return {{"job_id", id}, {"model_id", id}, {"status", jobs_[id].status}};
}

Json Service::model_info(const std::string& id) const {
  const auto p = opt_.store_dir / "models" / (id + ".json");
  if (!valid_id(id) || !fs::exists(p)) throw NotFoundError("unknown model '" + id + "'");
  return read_json_file(p);
}

Json Service::predict(const std::string& model_id, const Json& req) const {
  allow_keys(req, {"features", "rows"});
  const auto p = opt_.store_dir / "models" / (model_id + ".model.json");
  if (!valid_id(model_id) || !fs::exists(p)) throw NotFoundError("unknown model '" + model_id + "'");
  const auto model = ml::load_model(p);
  auto vec = [](const Json& f) {
    if (!f.is_array()) throw ValidationError("features must be an array of 3 numbers");
    std::vector<double> x;
    for (const auto& v : f) {
      if (!v.is_number()) throw ValidationError("features must be numbers");
      x.push_back(v.get<double>());
    }
    return x;
  };
  if (req.contains("features")) return {{"model_id", model_id}, {"current_ua", ml::predict(model, vec(req.at("features")))}};
  if (req.contains("rows")) {
    Json out = Json::array();
    for (const auto& r : req.at("rows")) out.push_back(ml::predict(model, vec(r)));
    return {{"model_id", model_id}, {"current_ua", out}};
  }
  throw ValidationError("missing 'features' (or 'rows')");
}

Json Service::job(const std::string& id) const {
  std::lock_guard lk(jobs_mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) {
    if (valid_id(id) && fs::exists(opt_.store_dir / "models" / (id + ".json")))
      return {{"job_id", id}, {"status", "done"}, {"model_id", id}, {"result", model_info(id)}};
    throw NotFoundError("unknown job '" + id + "'");
  }
  return {{"job_id", id}, {"status", it->second.status}, {"model_id", it->second.model_id},
          {"result", it->second.result}, {"error", it->second.error}};
}

Json Service::collect_sessions() const {
  Json out = Json::array();
  if (opt_.collect_dir.empty() || !fs::exists(opt_.collect_dir)) return {{"sessions", out}};
  std::vector<fs::path> manifests;
  if (fs::exists(opt_.collect_dir / "manifest.json")) manifests.push_back(opt_.collect_dir / "manifest.json");
  for (const auto& e : fs::directory_iterator(opt_.collect_dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) manifests.push_back(e.path() / "manifest.json");
  std::sort(manifests.begin(), manifests.end());
  for (const auto& m : manifests) {
    try {
      auto j = read_json_file(m);
      std::size_t partial = 0;
      for (const auto& d : j.value("devices", Json::array())) partial += d.value("partial", false) ? 1 : 0;
      out.push_back({{"directory", m.parent_path().string()},
                     {"device_count", j.value("devices", Json::array()).size()},
                     {"partial_count", partial},
                     {"refused_count", j.value("refused", Json::array()).size()},
                     {"devices", j.value("devices", Json::array())}});
    } catch (const std::exception& e) {
      out.push_back({{"directory", m.parent_path().string()}, {"error", e.what()}});
    }
  }
  return {{"sessions", out}};
}

}  // namespace riot::api
