#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace incast {

/**
 * Flat key=value configuration with [section] headers; keys are addressed
 * as "section.key". Every numeric knob of the forecasting pipeline lives
 * here so a run is reproducible from one file plus a seed.
 */
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace incast
