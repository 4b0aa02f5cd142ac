#pragma once

#include <array>
#include <vector>

#include "robustdyn/measures.hpp"

namespace robustdyn {

enum class BandwidthRule { Scott, Cv5 };

struct KdeEstimate {
  std::vector<std::array<double, 2>> sample;
  std::array<double, 2> bandwidth;  // per coordinate
  Coupling evaluated;
};

// Gaussian product-kernel density of a 2-d sample evaluated on the target
// grid pair and renormalized to a Coupling. Scott: h_j = sd_j * n^(-1/6).
// Cv5: 9 candidates on a geometric grid spanning a factor of 2 around the
// Scott value, scored by 5-fold held-out log-likelihood. A coordinate with
// zero variance falls back to the target grid step.
KdeEstimate kde_fit(const std::vector<std::array<double, 2>>& sample, const Grid& gx,
                    const Grid& gy, BandwidthRule rule);

}  // namespace robustdyn
