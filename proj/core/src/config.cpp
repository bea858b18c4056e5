#include "solarlab/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "solarlab/errors.hpp"

namespace solarlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool valid_key_part(const std::string& s) {
  if (s.empty()) return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
      return false;
  return true;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream text;
  text << is.rdbuf();
  return from_string(text.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!valid_key_part(section))
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": bad section name '" + section + "'");
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!valid_key_part(key))
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": bad key '" + key + "'");
    if (section.empty())
      throw ParseError(origin + ":" + std::to_string(line_no) + ": key '" +
                       key + "' appears before any [section] header");
    std::string full = section + "." + key;
    // a repeated key in one file is an editing mistake, not an override
    if (cfg.values_.count(full))
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": duplicate key '" + full + "'");
    cfg.values_[full] = value;
  }
  return cfg;
}

void Config::set(const std::string& keyval) {
  size_t eq = keyval.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value, got '" +
                      keyval + "'");
  set(trim(keyval.substr(0, eq)), trim(keyval.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  std::string k = trim(key);
  size_t dot = k.find('.');
  if (dot == std::string::npos)
    throw ConfigError("config key must look like section.key, got '" + key +
                      "'");
  if (!valid_key_part(k.substr(0, dot)) || !valid_key_part(k.substr(dot + 1)))
    throw ConfigError("bad config key '" + key + "'");
  values_[k] = value;
}

bool Config::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string Config::get_string(const std::string& key,
                               const std::string& dflt) const {
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double Config::get_double(const std::string& key, double dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" +
                      it->second + "'");
  }
}

int Config::get_int(const std::string& key, int dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    long v = std::stol(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("junk");
    if (v < INT32_MIN || v > INT32_MAX) throw std::out_of_range("range");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: '" +
                      it->second + "'");
  }
}

uint64_t Config::get_u64(const std::string& key, uint64_t dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("junk");
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "' is not an unsigned integer: '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace solarlab
