#include "leaves/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "leaves/tensor.hpp"

namespace leaves {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t +
                       "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key) > 0)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw UsageError(origin_ + ": key '" + key + "' is not a number: '" + s + "'");
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key) const {
  const double v = get_double(key);
  if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw UsageError(origin_ + ": key '" + key + "' is not a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
  const std::string s = get_string(key);
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-')
    throw UsageError(origin_ + ": key '" + key + "' is not an unsigned integer: '" + s + "'");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError(origin_ + ": key '" + key + "' is not a boolean: '" + s + "'");
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw UsageError(origin_ + ": unknown key '" + key + "'");
  }
}

}  // namespace leaves
