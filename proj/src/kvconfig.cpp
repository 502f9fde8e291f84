#include "riot/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "riot/error.hpp"

namespace riot {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view origin) {
  KeyValueFile out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(std::string(origin) + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    Entry e;
    e.key = std::string(trim(line.substr(0, eq)));
    if (e.key.empty()) {
      throw ValidationError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    std::istringstream rest{std::string(trim(line.substr(eq + 1)))};
    if (!(rest >> e.value)) {
      throw ValidationError(std::string(origin) + ":" + std::to_string(line_no) + ": missing value for " + e.key);
    }
    for (std::string tag; rest >> tag;) e.tags.push_back(tag);
    if (out.find(e.key) != nullptr) {
      throw ValidationError(std::string(origin) + ":" + std::to_string(line_no) + ": duplicate key " + e.key);
    }
    out.entries_.push_back(std::move(e));
  }
  return out;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const KeyValueFile::Entry* KeyValueFile::find(std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::optional<double> KeyValueFile::get_double(std::string_view key) const {
  const Entry* e = find(key);
  if (e == nullptr) return std::nullopt;
  double v = 0.0;
  const auto* first = e->value.data();
  const auto* last = first + e->value.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ValidationError("value of " + e->key + " is not a number: " + e->value);
  }
  return v;
}

void KeyValueFile::set(std::string key, std::string value, std::vector<std::string> tags) {
  for (auto& e : entries_) {
    if (e.key == key) {
      e.value = std::move(value);
      e.tags = std::move(tags);
      return;
    }
  }
  entries_.push_back({std::move(key), std::move(value), std::move(tags)});
}

std::string KeyValueFile::render() const {
  std::ostringstream os;
  for (const auto& h : header_) os << "# " << h << '\n';
  for (const auto& e : entries_) {
    os << e.key << " = " << e.value;
    for (const auto& t : e.tags) os << ' ' << t;
    os << '\n';
  }
  return os.str();
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << render();
}

}  // namespace riot
