#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "relprobe/common.hpp"
#include "relprobe/probe.hpp"

namespace testing_helpers {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("relprobe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline relprobe::Matrix random_matrix(std::mt19937_64& g, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  relprobe::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(g);
  return m;
}

inline relprobe::Vector random_vector(std::mt19937_64& g, int n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  relprobe::Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(g);
  return v;
}

template <typename Fn>
relprobe::ErrorCode error_code_of(Fn fn) {
  try {
    fn();
  } catch (const relprobe::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected relprobe::Error");
}

}  // namespace testing_helpers
