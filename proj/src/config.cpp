#include "litformer/config.hpp"

#include <fstream>
#include <sstream>

#include "litformer/errors.hpp"

namespace lit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
  KvConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

std::string KvConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

void KvConfig::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config file " + path);
  os << to_text();
}

void KvConfig::set_int(const std::string& key, std::int64_t v) { values_[key] = std::to_string(v); }

void KvConfig::set_double(const std::string& key, double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  values_[key] = os.str();
}

void KvConfig::set_bool(const std::string& key, bool v) { values_[key] = v ? "true" : "false"; }

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + it->second);
}

std::vector<std::int64_t> KvConfig::get_int_list(const std::string& key,
                                                 const std::vector<std::int64_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::int64_t> out;
  std::istringstream is(it->second);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' has a non-integer element: " + item);
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

}  // namespace lit
