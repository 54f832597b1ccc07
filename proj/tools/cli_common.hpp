#pragma once

#include <chrono>
#include <cstddef>
#include <initializer_list>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace nodefilter::cli {

using nlohmann::json;

// Single-line key=value record.
class Record {
 public:
  template <typename T>
  Record& add(std::string_view key, const T& value) {
    std::ostringstream s;
    s.precision(17);
    s << value;
    fields_.emplace_back(std::string(key), s.str());
    return *this;
  }
  std::string str() const;

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

// Runs body and maps library exceptions onto the exit-code contract.
int guarded(std::ostream& err, const std::function<int()>& body);

// Parses a JSON config file; throws ConfigError naming the path.
json load_json(const std::filesystem::path& path);

// Throws ConfigError for keys of obj outside allowed.
void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where);

void write_text(const std::filesystem::path& path, const std::string& text);
void ensure_directory(const std::filesystem::path& dir);

// "node_id,label" rows covering 0..n-1 exactly once; optional header.
std::vector<std::string> read_label_column(const std::filesystem::path& path, std::size_t n_nodes);

double elapsed_ms(std::chrono::steady_clock::time_point since);

}  // namespace nodefilter::cli
