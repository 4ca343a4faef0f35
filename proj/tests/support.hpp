#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "boostlab/data.hpp"

namespace testing {

using boostlab::Dataset;
using boostlab::FeatureColumn;
using boostlab::FeatureKind;

inline FeatureColumn numeric(std::string name, std::vector<double> values) {
  FeatureColumn c;
  c.name = std::move(name);
  c.values = std::move(values);
  return c;
}

inline FeatureColumn categorical(std::string name, std::vector<double> codes,
                                 std::vector<std::string> levels) {
  FeatureColumn c;
  c.name = std::move(name);
  c.kind = FeatureKind::kCategorical;
  c.values = std::move(codes);
  c.levels = std::move(levels);
  return c;
}

inline Dataset make_dataset(std::vector<FeatureColumn> features, std::vector<double> y,
                            std::vector<double> exposure = {}) {
  Dataset ds;
  ds.features = std::move(features);
  ds.target = std::move(y);
  ds.exposure = exposure.empty() ? std::vector<double>(ds.target.size(), 1.0) : std::move(exposure);
  return ds;
}

/// Uniform(0,1) covariates x0..x{p-1}.
inline std::vector<FeatureColumn> uniform_features(std::size_t n, std::size_t p,
                                                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FeatureColumn> cols;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    cols.push_back(numeric("x" + std::to_string(j), std::move(v)));
  }
  return cols;
}

/// Poisson counts with log-rate -1 + x0 - 0.5 x1 and exposures in (0.1, 1].
inline Dataset poisson_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto cols = uniform_features(n, 3, rng);
  std::uniform_real_distribution<double> ue(0.1, 1.0);
  std::vector<double> y(n);
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = ue(rng);
    const double mu = e[i] * std::exp(-1.0 + cols[0].values[i] - 0.5 * cols[1].values[i]);
    y[i] = static_cast<double>(std::poisson_distribution<int>(mu)(rng));
  }
  return make_dataset(std::move(cols), std::move(y), std::move(e));
}

/// y ~ N(2 x0, exp(x1)^2).
inline Dataset hetero_gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto cols = uniform_features(n, 2, rng);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 2.0 * cols[0].values[i] + std::exp(cols[1].values[i]) * z(rng);
  }
  return make_dataset(std::move(cols), std::move(y));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("boostlab_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Writes a dataset with numeric features as CSV (columns x..., exposure "e", target "y").
inline void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  out.precision(17);
  for (const auto& f : ds.features) out << f.name << ',';
  out << "e,y\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& f : ds.features) {
      if (f.categorical()) {
        out << f.levels[static_cast<std::size_t>(f.values[i])] << ',';
      } else {
        out << f.values[i] << ',';
      }
    }
    out << ds.exposure[i] << ',' << ds.target[i] << '\n';
  }
}

}  // namespace testing
