#include "robustdyn/kde.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace robustdyn {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double sample_sd(const std::vector<std::array<double, 2>>& s, int coord) {
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (const auto& p : s) mean += p[coord];
  mean /= n;
  double ss = 0.0;
  for (const auto& p : s) ss += (p[coord] - mean) * (p[coord] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  // repeated points leave rounding residue; treat those as degenerate
  return sd > 1e-10 * (1.0 + std::abs(mean)) ? sd : 0.0;
}

double gauss(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// held-out log-likelihood of 5-fold CV at per-coordinate bandwidths (hx, hy)
double cv5_loglik(const std::vector<std::array<double, 2>>& s, double hx, double hy) {
  const std::size_t n = s.size();
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int fold = static_cast<int>(i % 5);
    double dens = 0.0;
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<int>(j % 5) == fold) continue;
      dens += gauss((s[i][0] - s[j][0]) / hx) * gauss((s[i][1] - s[j][1]) / hy);
      ++m;
    }
    dens /= static_cast<double>(m) * hx * hy;
    ll += std::log(std::max(dens, std::numeric_limits<double>::min()));
  }
  return ll;
}

}  // namespace

KdeEstimate kde_fit(const std::vector<std::array<double, 2>>& sample, const Grid& gx,
                    const Grid& gy, BandwidthRule rule) {
  if (sample.size() < 5) throw std::invalid_argument("kde_fit: need at least 5 points");
  const double n = static_cast<double>(sample.size());
  const double scott = std::pow(n, -1.0 / 6.0);  // d = 2

  double sdx = sample_sd(sample, 0);
  double sdy = sample_sd(sample, 1);
  double hx = sdx > 0.0 ? scott * sdx : (gx.step > 0.0 ? gx.step : gx[1] - gx[0]);
  double hy = sdy > 0.0 ? scott * sdy : (gy.step > 0.0 ? gy.step : gy[1] - gy[0]);

  if (rule == BandwidthRule::Cv5 && sdx > 0.0 && sdy > 0.0) {
    double best = -std::numeric_limits<double>::infinity();
    double best_factor = 1.0;
    for (int c = 0; c < 9; ++c) {
      const double factor = std::pow(2.0, -1.0 + 0.25 * c);
      const double ll = cv5_loglik(sample, factor * hx, factor * hy);
      if (ll > best) {
        best = ll;
        best_factor = factor;
      }
    }
    hx *= best_factor;
    hy *= best_factor;
  }

  const std::size_t nx = gx.size(), ny = gy.size();
  std::vector<double> dens(nx * ny, 0.0);
  std::vector<double> kx(nx), ky(ny);
  for (const auto& p : sample) {
    for (std::size_t i = 0; i < nx; ++i) kx[i] = gauss((gx[i] - p[0]) / hx);
    for (std::size_t j = 0; j < ny; ++j) ky[j] = gauss((gy[j] - p[1]) / hy);
    for (std::size_t i = 0; i < nx; ++i) {
      const double kxi = kx[i];
      if (kxi == 0.0) continue;
      for (std::size_t j = 0; j < ny; ++j) dens[i * ny + j] += kxi * ky[j];
    }
  }
  double total = 0.0;
  for (double d : dens) total += d;
  if (!(total > 0.0)) throw std::runtime_error("kde_fit: density vanished on the target grid");
  for (double& d : dens) d /= total;

  KdeEstimate est;
  est.sample = sample;
  est.bandwidth = {hx, hy};
  est.evaluated = Coupling({gx, gy}, std::move(dens));
  return est;
}

}  // namespace robustdyn
