#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "riot/error.hpp"
#include "riot/scenario.hpp"

// Request handlers shared by the CLI and the HTTP server. Every operation
// takes and returns JSON and throws riot::Error on failure.
namespace riot::api {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr std::uint16_t kDefaultHttpPort = 8080;

/// Port from RIOT_LAB_HTTP_PORT, else 8080.
std::uint16_t http_port_from_env();

/// Seconds from "86400", "90s", "500ms", "15m", "24h", "1d".
double parse_duration(const std::string& text);

/// "builtin:5h", a bare built-in id ("5h", "ap-validation"), or a JSON file path.
scenario::Scenario resolve_scenario(const std::string& ref);
/// Same, for a JSON request field: a string reference or an inline scenario object.
scenario::Scenario scenario_from_request(const Json& j);

/// 64-bit FNV-1a over the bytes, as 16 hex digits.
std::string content_hash(std::string_view bytes);

/// {"error": {"code", "message", "detail"}} for an error code.
Json error_body(const std::string& code, const std::string& message, const std::string& detail = {});
/// API-level code for a library error: validation, domain, not_found, conflict, internal.
std::string api_code(ErrorCode c);
int http_status(ErrorCode c);

struct ServiceOptions {
  std::filesystem::path store_dir = "riot_store";
  std::filesystem::path collect_dir;  // where host sessions write manifests; empty: none
};

class Service {
 public:
  explicit Service(ServiceOptions opt);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Json health() const;
  Json scenarios() const;
  Json simulate_node(const Json& req) const;
  Json simulate_ap(const Json& req) const;
  Json create_dataset(const Json& req);
  /// Dataset CSV text; NotFoundError for unknown ids.
  std::string dataset_csv(const std::string& id) const;
  Json dataset_info(const std::string& id) const;
  /// Trains synchronously unless req.background is true, in which case a job is queued.
  Json create_model(const Json& req);
  Json model_info(const std::string& id) const;
  Json predict(const std::string& model_id, const Json& req) const;
  Json job(const std::string& id) const;
  Json collect_sessions() const;

  const std::filesystem::path& store_dir() const { return opt_.store_dir; }

 private:
  struct Job {
    std::string status;  // queued, running, done, failed
    std::string model_id;
    Json result;
    Json error;
  };
  Json train_and_store(const Json& spec, const std::string& model_id);
  void record_index(const std::string& section, const std::string& id, const Json& meta);

  ServiceOptions opt_;
  mutable std::mutex store_mu_;
  mutable std::mutex jobs_mu_;
  std::map<std::string, Job> jobs_;
  std::vector<std::thread> workers_;
};

}  // namespace riot::api
