#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace leaves {

/// key=value run configuration. Lines starting with '#' are comments; blank
/// lines are skipped. Duplicate or unknown keys are errors so typos fail
/// loudly instead of silently using a default.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // true/false/1/0

  /// Errors on any key outside the accepted set.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace leaves
