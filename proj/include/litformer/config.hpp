#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lit {

// Flat key/value configuration with dotted-key nesting, e.g.
//   model.base_channels = 16
//   train.lr_max = 2e-4
// '#' starts a comment. Serialization emits keys sorted, so round trips are
// deterministic.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_text(const std::string& text);
  static KvConfig load(const std::string& path);
  std::string to_text() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& v) { values_[key] = v; }
  void set_int(const std::string& key, std::int64_t v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace lit
