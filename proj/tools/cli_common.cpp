#include "cli_common.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "nodefilter/error.hpp"
#include "nodefilter/linalg.hpp"

namespace nodefilter::cli {

std::string Record::str() const {
  std::string s;
  for (const auto& [k, v] : fields_) {
    if (!s.empty()) s += ' ';
    s += k + '=' + v;
  }
  return s;
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const MismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigMismatch;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::domain_error& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::out_of_range& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  }
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw FormatError("cannot create output directory '" + dir.string() + "'");
}

std::vector<std::string> read_label_column(const std::filesystem::path& path, std::size_t n_nodes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open label file '" + path.string() + "'");
  std::vector<std::string> labels(n_nodes);
  std::vector<bool> seen(n_nodes, false);
  std::string line;
  std::size_t line_no = 0;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw FormatError("expected 'node_id,label'", line_no);
    }
    const std::string id_text = line.substr(0, comma);
    std::size_t pos = 0;
    long long id = -1;
    try {
      id = std::stoll(id_text, &pos);
    } catch (const std::exception&) {
      if (count == 0 && line_no == 1) continue;  // header
      throw FormatError("invalid node id '" + id_text + "'", line_no);
    }
    if (pos != id_text.size() || id < 0 || static_cast<std::size_t>(id) >= n_nodes) {
      throw FormatError("node id '" + id_text + "' outside [0, " + std::to_string(n_nodes) + ")", line_no);
    }
    if (seen[static_cast<std::size_t>(id)]) throw FormatError("duplicate node id " + id_text, line_no);
    seen[static_cast<std::size_t>(id)] = true;
    labels[static_cast<std::size_t>(id)] = line.substr(comma + 1);
    ++count;
  }
  if (count != n_nodes) {
    throw FormatError("label file '" + path.string() + "' covers " + std::to_string(count) + " of " +
                      std::to_string(n_nodes) + " nodes");
  }
  return labels;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace nodefilter::cli
