#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

#include "transport/data.hpp"
#include "transport/simulate.hpp"

namespace testing_support {

using namespace transport;

inline CovariateSchema binary_w() { return CovariateSchema({Covariate{"w", CovariateKind::binary, {}}}); }

inline StudyRecord trial(double w, const std::string& arm, int z, double y) { return StudyRecord{true, {w}, arm, z, y}; }
inline StudyRecord target(double w) { return StudyRecord{false, {w}, std::nullopt, std::nullopt, std::nullopt}; }

// Toy DGP laid out with exact cell frequencies: 10000 trial and 2000 target records,
// so saturated fits reproduce the generating probabilities exactly.
inline StudyDataset exact_toy() {
  const DgpSpec spec = DgpSpec::toy();
  std::vector<StudyRecord> records;
  const double n1 = 10000.0, n0 = 2000.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double w = spec.cells[c][0];
    for (std::size_t a = 0; a < 2; ++a) {
      const double n_arm = n1 * spec.p_trial[c] * spec.assign[a][c];
      const double n_z1 = n_arm * spec.adherence[a][c];
      const double n_z0 = n_arm - n_z1;
      const auto push = [&](int z, double total, double q) {
        const long ones = std::lround(total * q), all = std::lround(total);
        for (long k = 0; k < all; ++k) records.push_back(trial(w, spec.arms[a], z, k < ones ? 1.0 : 0.0));
      };
      push(1, n_z1, spec.outcome_adherent[a][c]);
      push(0, n_z0, spec.outcome_nonadherent[a][c]);
    }
    for (long k = 0; k < std::lround(n0 * spec.p_target[c]); ++k) records.push_back(target(w));
  }
  return StudyDataset(binary_w(), std::move(records));
}

inline StudyDataset toy_sample(std::size_t n1, std::size_t n0, std::uint64_t seed) {
  return generate_data(DgpSpec::toy(n1, n0, seed));
}

// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("transport_sa_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace testing_support
