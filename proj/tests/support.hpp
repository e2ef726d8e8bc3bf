#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testing_support {

// Composite Simpson rule with an even number of panels. Deliberately
// unrelated to the library's adaptive quadrature.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

inline double normal_pdf(double z, double mean, double variance) {
  const double u = z - mean;
  return std::exp(-0.5 * u * u / variance) / std::sqrt(2.0 * M_PI * variance);
}

inline double normal_cdf(double z, double mean, double variance) {
  return 0.5 * std::erfc(-(z - mean) / std::sqrt(2.0 * variance));
}

// Fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hybridpool_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
