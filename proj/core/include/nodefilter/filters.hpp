#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace nodefilter {

// Scalar spectral response h(lambda) on lambda in [0, 2].
class FilterSpec {
 public:
  // One of predefined_filter_names(), or "all-pass" / "zero".
  static FilterSpec named(std::string_view name);
  static FilterSpec callable(std::string name, std::function<double(double)> response);

  const std::string& name() const noexcept { return name_; }
  double operator()(double lambda) const { return response_(lambda); }

 private:
  FilterSpec(std::string name, std::function<double(double)> response)
      : name_(std::move(name)), response_(std::move(response)) {}

  std::string name_;
  std::function<double(double)> response_;
};

// The twelve predefined responses:
//   low-pass-s        exp(-s l^2)
//   high-pass-s       1 - exp(-s l^2)
//   band-pass-s       exp(-s (l-1)^2)
//   rejection-pass-s  1 - exp(-s (l-1)^2)
// for sharpness s in {5, 10, 20}.
std::span<const std::string_view> predefined_filter_names();

// Throws ConfigError for an unknown name.
double predefined_filter(std::string_view name, double lambda);

}  // namespace nodefilter
