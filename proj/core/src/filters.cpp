#include "nodefilter/filters.hpp"

#include <array>
#include <cmath>

#include "nodefilter/error.hpp"

namespace nodefilter {

namespace {

constexpr std::array<std::string_view, 12> kNames = {
    "low-pass-5",       "low-pass-10",       "low-pass-20",       "high-pass-5",
    "high-pass-10",     "high-pass-20",      "band-pass-5",       "band-pass-10",
    "band-pass-20",     "rejection-pass-5",  "rejection-pass-10", "rejection-pass-20",
};

struct Shape {
  bool centered;   // peak at lambda = 1 instead of 0
  bool complement; // 1 - gaussian
  double sharpness;
};

bool lookup(std::string_view name, Shape& shape) {
  const auto split = name.rfind('-');
  if (split == std::string_view::npos) return false;
  const auto kind = name.substr(0, split);
  const auto s = name.substr(split + 1);
  double sharpness = 0.0;
  if (s == "5") sharpness = 5.0;
  else if (s == "10") sharpness = 10.0;
  else if (s == "20") sharpness = 20.0;
  else return false;
  if (kind == "low-pass") shape = {false, false, sharpness};
  else if (kind == "high-pass") shape = {false, true, sharpness};
  else if (kind == "band-pass") shape = {true, false, sharpness};
  else if (kind == "rejection-pass") shape = {true, true, sharpness};
  else return false;
  return true;
}

double evaluate(const Shape& shape, double lambda) {
  const double x = shape.centered ? lambda - 1.0 : lambda;
  const double g = std::exp(-shape.sharpness * x * x);
  return shape.complement ? 1.0 - g : g;
}

}  // namespace

std::span<const std::string_view> predefined_filter_names() { return kNames; }

double predefined_filter(std::string_view name, double lambda) {
  Shape shape{};
  if (!lookup(name, shape)) throw ConfigError("unknown filter '" + std::string(name) + "'");
  return evaluate(shape, lambda);
}

FilterSpec FilterSpec::named(std::string_view name) {
  if (name == "all-pass") return FilterSpec("all-pass", [](double) { return 1.0; });
  if (name == "zero") return FilterSpec("zero", [](double) { return 0.0; });
  Shape shape{};
  if (!lookup(name, shape)) throw ConfigError("unknown filter '" + std::string(name) + "'");
  return FilterSpec(std::string(name), [shape](double lambda) { return evaluate(shape, lambda); });
}

FilterSpec FilterSpec::callable(std::string name, std::function<double(double)> response) {
  return FilterSpec(std::move(name), std::move(response));
}

}  // namespace nodefilter
