#include "riot/collect/protocol.hpp"

#include "json.hpp"

namespace riot::collect {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <class T>
T field(const json& j, const char* key, std::string_view type) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string(type) + ": missing or invalid field '" + key + "'");
  }
}

}  // namespace

std::string_view type_name(const Message& m) {
  static constexpr std::string_view kNames[] = {"Hello", "ConfigReport", "SyncRequest", "SyncResponse",
                                                "SampleBatch", "End", "Ack", "Reject"};
  return kNames[m.index()];
}

std::string encode_body(const Message& m) {
  json j = std::visit(
      Overloaded{
          [](const Hello& h) {
            return json{{"device_id", h.device_id},
                        {"sample_rate_hz", h.sample_rate_hz},
                        {"protocol_version", h.protocol_version},
                        {"t0_us", h.t0_us}};
          },
          [](const ConfigReport& c) { return json{{"config_tags", c.config_tags}}; },
          [](const SyncRequest& s) { return json{{"t1_us", s.t1_us}}; },
          [](const SyncResponse& s) { return json{{"t1_us", s.t1_us}, {"t2_us", s.t2_us}, {"t3_us", s.t3_us}}; },
          [](const SampleBatch& b) {
            return json{{"seq_no", b.seq_no}, {"first_sample_index", b.first_sample_index}, {"samples_uA", b.samples_ua}};
          },
          [](const End& e) { return json{{"total_samples", e.total_samples}}; },
          [](const Ack& a) { return json{{"seq_no", a.seq_no}}; },
          [](const Reject& r) { return json{{"reason", r.reason}}; },
      },
      m);
  j["type"] = std::string(type_name(m));
  return j.dump();
}

Message decode_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed message body: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ProtocolError("message body lacks a string 'type' field");
  const auto type = j["type"].get<std::string>();
  if (type == "Hello")
    return Hello{field<std::string>(j, "device_id", type), field<double>(j, "sample_rate_hz", type),
                 field<int>(j, "protocol_version", type), field<std::int64_t>(j, "t0_us", type)};
  if (type == "ConfigReport") return ConfigReport{field<std::map<std::string, std::string>>(j, "config_tags", type)};
  if (type == "SyncRequest") return SyncRequest{field<std::int64_t>(j, "t1_us", type)};
  if (type == "SyncResponse")
    return SyncResponse{field<std::int64_t>(j, "t1_us", type), field<std::int64_t>(j, "t2_us", type),
                        field<std::int64_t>(j, "t3_us", type)};
  if (type == "SampleBatch")
    return SampleBatch{field<std::uint64_t>(j, "seq_no", type), field<std::uint64_t>(j, "first_sample_index", type),
                       field<std::vector<double>>(j, "samples_uA", type)};
  if (type == "End") return End{field<std::uint64_t>(j, "total_samples", type)};
  if (type == "Ack") return Ack{field<std::uint64_t>(j, "seq_no", type)};
  if (type == "Reject") return Reject{field<std::string>(j, "reason", type)};
  throw ProtocolError("unknown message type '" + type + "'");
}

std::string encode(const Message& m) {
  const std::string body = encode_body(m);
  if (body.size() > kMaxFrameBytes) throw FrameError("message body exceeds the 16 MiB frame limit");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>(n >> 16));
  out.push_back(static_cast<char>(n >> 8));
  out.push_back(static_cast<char>(n));
  out += body;
  return out;
}

std::uint32_t read_length_prefix(std::string_view b) {
  if (b.size() < 4) throw FrameError("truncated frame: length prefix incomplete");
  const auto u = [&](int i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])); };
  const std::uint32_t n = u(0) << 24 | u(1) << 16 | u(2) << 8 | u(3);
  if (n > kMaxFrameBytes) throw FrameError("frame length " + std::to_string(n) + " exceeds the 16 MiB limit");
  return n;
}

Message decode(std::string_view frame) {
  const auto n = read_length_prefix(frame);
  if (frame.size() - 4 < n) throw FrameError("truncated frame: expected " + std::to_string(n) + " body bytes");
  if (frame.size() - 4 > n) throw FrameError("trailing bytes after frame body");
  return decode_body(frame.substr(4));
}

}  // namespace riot::collect
