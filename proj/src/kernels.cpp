#include "robustdyn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(ROBUSTDYN_HAVE_AVX2_TU)
#include "kernels_dispatch.hpp"
#endif

namespace robustdyn::kernels {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double dot_scalar(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(std::span<const double> a) noexcept {
  double acc = 0.0;
  for (double x : a) acc += x;
  return acc;
}

double max_scalar(std::span<const double> a) noexcept {
  double m = kNegInf;
  for (double x : a) m = std::max(m, x);
  return m;
}

void vexp_scalar(std::span<double> out, std::span<const double> in) noexcept {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
}

double logsumexp_scalar(std::span<const double> v) noexcept {
  const double m = max_scalar(v);
  if (!std::isfinite(m)) return m;  // all -inf (or empty)
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

double weighted_logsumexp_scalar(std::span<const double> v,
                                 std::span<const double> w) noexcept {
  double m = kNegInf;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return kNegInf;
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (w[i] > 0.0) acc += w[i] * std::exp(v[i] - m);
  return m + std::log(acc);
}

double tilt_logsumexp_scalar(std::span<const double> cost, std::span<const double> phi,
                             std::span<const double> w, double inv_lambda) noexcept {
  double m = kNegInf;
  for (std::size_t j = 0; j < cost.size(); ++j) {
    if (w[j] <= 0.0) continue;
    const double t = (phi[j] - cost[j]) * inv_lambda;
    m = std::max(m, t);
  }
  if (!std::isfinite(m)) return kNegInf;
  double acc = 0.0;
  for (std::size_t j = 0; j < cost.size(); ++j) {
    if (w[j] <= 0.0) continue;
    acc += w[j] * std::exp((phi[j] - cost[j]) * inv_lambda - m);
  }
  return m + std::log(acc);
}

double kl_sum_scalar(std::span<const double> f, std::span<const double> f0) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] > 0.0) {
      if (f0[i] <= 0.0) return std::numeric_limits<double>::infinity();
      acc += f[i] * std::log(f[i] / f0[i]);
    }
  }
  return acc;
}

struct Ops {
  double (*dot)(std::span<const double>, std::span<const double>) noexcept;
  double (*sum)(std::span<const double>) noexcept;
  double (*max_value)(std::span<const double>) noexcept;
  void (*vexp)(std::span<double>, std::span<const double>) noexcept;
  double (*logsumexp)(std::span<const double>) noexcept;
  double (*weighted_logsumexp)(std::span<const double>, std::span<const double>) noexcept;
  double (*tilt_logsumexp)(std::span<const double>, std::span<const double>,
                           std::span<const double>, double) noexcept;
  double (*kl_sum)(std::span<const double>, std::span<const double>) noexcept;
};

constexpr Ops kScalarOps = {
    dot_scalar,  sum_scalar,  max_scalar,         vexp_scalar,
    logsumexp_scalar, weighted_logsumexp_scalar, tilt_logsumexp_scalar, kl_sum_scalar,
};

}  // namespace

namespace {

#if defined(ROBUSTDYN_HAVE_AVX2_TU)
bool avx2_supported() noexcept {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#else
bool avx2_supported() noexcept { return false; }
#endif

Ops make_avx2_ops() noexcept {
#if defined(ROBUSTDYN_HAVE_AVX2_TU)
  const detail::Avx2Ops* a = detail::avx2_ops();
  return Ops{a->dot, a->sum, a->max_value, a->vexp, a->logsumexp,
             a->weighted_logsumexp, a->tilt_logsumexp, a->kl_sum};
#else
  return kScalarOps;
#endif
}

struct Dispatch {
  Ops ops;
  Isa isa;
  Dispatch() {
    if (avx2_supported()) {
      ops = make_avx2_ops();
      isa = Isa::Avx2;
    } else {
      ops = kScalarOps;
      isa = Isa::Scalar;
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Isa active_isa() noexcept { return dispatch().isa; }

bool set_isa(Isa isa) noexcept {
  if (isa == Isa::Avx2) {
    if (!avx2_supported()) return false;
    dispatch().ops = make_avx2_ops();
  } else {
    dispatch().ops = kScalarOps;
  }
  dispatch().isa = isa;
  return true;
}

const char* isa_name(Isa isa) noexcept {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return dispatch().ops.dot(a, b);
}
double sum(std::span<const double> a) noexcept { return dispatch().ops.sum(a); }
double max_value(std::span<const double> a) noexcept { return dispatch().ops.max_value(a); }
void vexp(std::span<double> out, std::span<const double> in) noexcept {
  dispatch().ops.vexp(out, in);
}
double logsumexp(std::span<const double> v) noexcept { return dispatch().ops.logsumexp(v); }
double weighted_logsumexp(std::span<const double> v, std::span<const double> w) noexcept {
  return dispatch().ops.weighted_logsumexp(v, w);
}
double tilt_logsumexp(std::span<const double> cost, std::span<const double> phi,
                      std::span<const double> w, double inv_lambda) noexcept {
  return dispatch().ops.tilt_logsumexp(cost, phi, w, inv_lambda);
}
double kl_sum(std::span<const double> f, std::span<const double> f0) noexcept {
  return dispatch().ops.kl_sum(f, f0);
}

}  // namespace robustdyn::kernels
