#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace solarlab {

// Flat key=value text with [section] headers and '#' comments. Keys are
// addressed as "section.key"; values stay strings until a typed getter
// asks for them. Unknown keys are the caller's problem to reject, the
// parser just carries them.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin);

  // "section.key=value" override, same addressing as the file format
  void set(const std::string& keyval);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  // every key present, sorted; for strict-validation sweeps
  std::vector<std::string> keys() const;

  // sorted "key=value" lines; the determinism-relevant canonical form
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

// FNV-1a over the bytes, rendered as 16 hex digits
std::string fnv1a_hex(const std::string& bytes);

}  // namespace solarlab
