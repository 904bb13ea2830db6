#include "candfuse/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace candfuse {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_string(buf.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": empty key");
    cfg.entries_[key] = value;
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto v = raw(key);
  return v ? *v : fallback;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    long out = std::stol(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("config key \"" + key + "\": \"" + *v +
                             "\" is not an integer");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("config key \"" + key + "\": \"" + *v +
                             "\" is not a number");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw std::runtime_error("config key \"" + key + "\": \"" + *v +
                           "\" is not a boolean");
}

void KeyValueConfig::merge_from(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace candfuse
