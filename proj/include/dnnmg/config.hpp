#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace dnnmg {

// raised for malformed configuration; the cli maps it to exit code 2
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// flat "key = value" configuration; a [section] line prefixes following keys
// as "section.key", '#' starts a comment
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& dflt) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void write(const std::string& path) const;
  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace dnnmg
