// AVX2 + FMA variants of the reference kernels. Built only on x86-64; the
// dispatcher in kernels.cpp selects them after a cpuid check. exp/log follow
// the Cephes rational approximations, accurate to a couple of ulps, so the
// variants agree with the scalar kernels to rounding error.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

#include <immintrin.h>

#include "kernels_dispatch.hpp"

namespace robustdyn::kernels::detail {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double hsum(__m256d v) noexcept {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double hmax(__m256d v) noexcept {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// exp(x), Cephes-style: x = n ln2 + r, exp(r) via a (3,3) rational in r^2,
// then scale by 2^n in two steps so subnormal results round correctly.
inline __m256d exp_pd(__m256d x) noexcept {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d lo_cut = _mm256_set1_pd(-745.133219101941108420);
  const __m256d hi_cut = _mm256_set1_pd(709.782712893383996843);

  const __m256d under = _mm256_cmp_pd(x, lo_cut, _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, hi_cut, _CMP_GT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo_cut), hi_cut);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, xc);
  r = _mm256_fnmadd_pd(n, c2, r);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d px = _mm256_fmadd_pd(p0, rr, p1);
  px = _mm256_fmadd_pd(px, rr, p2);
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(q0, rr, q1);
  qx = _mm256_fmadd_pd(qx, rr, q2);
  qx = _mm256_fmadd_pd(qx, rr, q3);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(two, e, one);

  // 2^n = 2^n1 * 2^n2 with n1 = n/2 rounded toward zero, n2 = n - n1
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i n64 = _mm256_cvtepi32_epi64(ni);
  alignas(32) int64_t nn[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(nn), n64);
  alignas(32) int64_t h1[4], h2[4];
  for (int k = 0; k < 4; ++k) {
    const int64_t a = nn[k] / 2;
    h1[k] = (a + 1023) << 52;
    h2[k] = (nn[k] - a + 1023) << 52;
  }
  const __m256d s1 = _mm256_castsi256_pd(_mm256_load_si256(reinterpret_cast<const __m256i*>(h1)));
  const __m256d s2 = _mm256_castsi256_pd(_mm256_load_si256(reinterpret_cast<const __m256i*>(h2)));
  e = _mm256_mul_pd(_mm256_mul_pd(e, s1), s2);

  e = _mm256_blendv_pd(e, _mm256_setzero_pd(), under);
  e = _mm256_blendv_pd(e, _mm256_set1_pd(std::numeric_limits<double>::infinity()), over);
  return e;
}

// log(x) for normal positive x; callers guard the exceptional lanes.
inline __m256d log_pd(__m256d x) noexcept {
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);
  const __m256d one = _mm256_set1_pd(1.0);

  const __m256i ix = _mm256_castpd_si256(x);
  const __m256i expo_bits = _mm256_srli_epi64(ix, 52);
  // unbiased exponent + 1 so the mantissa lands in [0.5, 1)
  const __m256i bias = _mm256_set1_epi64x(1022);
  __m256d e;
  {
    alignas(32) int64_t eb[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(eb),
                       _mm256_sub_epi64(_mm256_and_si256(expo_bits, _mm256_set1_epi64x(0x7FF)), bias));
    e = _mm256_set_pd(static_cast<double>(eb[3]), static_cast<double>(eb[2]),
                      static_cast<double>(eb[1]), static_cast<double>(eb[0]));
  }
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i half_bits = _mm256_set1_epi64x(0x3FE0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(ix, mant_mask), half_bits));

  const __m256d below = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
  m = _mm256_add_pd(m, _mm256_and_pd(below, m));  // m *= 2 where below
  e = _mm256_sub_pd(e, _mm256_and_pd(below, one));
  const __m256d xm = _mm256_sub_pd(m, one);

  const __m256d P0 = _mm256_set1_pd(1.01875663804580931796e-4);
  const __m256d P1 = _mm256_set1_pd(4.97494994976747001425e-1);
  const __m256d P2 = _mm256_set1_pd(4.70579119878881725854e0);
  const __m256d P3 = _mm256_set1_pd(1.44989225341610930846e1);
  const __m256d P4 = _mm256_set1_pd(1.79368678507819816313e1);
  const __m256d P5 = _mm256_set1_pd(7.70838733755885391666e0);
  const __m256d Q0 = _mm256_set1_pd(1.12873587189167450590e1);
  const __m256d Q1 = _mm256_set1_pd(4.52279145837532221105e1);
  const __m256d Q2 = _mm256_set1_pd(8.29875266912776603211e1);
  const __m256d Q3 = _mm256_set1_pd(7.11544750618563894466e1);
  const __m256d Q4 = _mm256_set1_pd(2.31251620126765340583e1);

  __m256d p = _mm256_fmadd_pd(P0, xm, P1);
  p = _mm256_fmadd_pd(p, xm, P2);
  p = _mm256_fmadd_pd(p, xm, P3);
  p = _mm256_fmadd_pd(p, xm, P4);
  p = _mm256_fmadd_pd(p, xm, P5);
  __m256d q = _mm256_add_pd(xm, Q0);
  q = _mm256_fmadd_pd(q, xm, Q1);
  q = _mm256_fmadd_pd(q, xm, Q2);
  q = _mm256_fmadd_pd(q, xm, Q3);
  q = _mm256_fmadd_pd(q, xm, Q4);

  const __m256d z = _mm256_mul_pd(xm, xm);
  __m256d y = _mm256_mul_pd(_mm256_mul_pd(xm, z), _mm256_div_pd(p, q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(half, z, y);
  __m256d res = _mm256_add_pd(xm, y);
  res = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), res);
  return res;
}

double dot_avx2(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_avx2(std::span<const double> a) noexcept {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a.data() + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a.data() + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a.data() + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

double max_avx2(std::span<const double> a) noexcept {
  const std::size_t n = a.size();
  __m256d m = _mm256_set1_pd(kNegInf);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(a.data() + i));
  double r = hmax(m);
  for (; i < n; ++i) r = r < a[i] ? a[i] : r;
  return r;
}

void vexp_avx2(std::span<double> out, std::span<const double> in) noexcept {
  const std::size_t n = in.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out.data() + i, exp_pd(_mm256_loadu_pd(in.data() + i)));
  for (; i < n; ++i) out[i] = std::exp(in[i]);
}

double logsumexp_avx2(std::span<const double> v) noexcept {
  const double m = max_avx2(v);
  if (!std::isfinite(m)) return m;
  const __m256d mm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n = v.size();
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, exp_pd(_mm256_sub_pd(_mm256_loadu_pd(v.data() + i), mm)));
  double s = hsum(acc);
  for (; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double weighted_logsumexp_avx2(std::span<const double> v,
                               std::span<const double> w) noexcept {
  const std::size_t n = v.size();
  const __m256d zero = _mm256_setzero_pd();
  const __m256d neg_inf = _mm256_set1_pd(kNegInf);
  __m256d mv = neg_inf;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w.data() + i);
    const __m256d pos = _mm256_cmp_pd(wv, zero, _CMP_GT_OQ);
    mv = _mm256_max_pd(mv, _mm256_blendv_pd(neg_inf, _mm256_loadu_pd(v.data() + i), pos));
  }
  double m = hmax(mv);
  for (; i < n; ++i)
    if (w[i] > 0.0 && v[i] > m) m = v[i];
  if (!std::isfinite(m)) return kNegInf;

  const __m256d mm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w.data() + i);
    const __m256d pos = _mm256_cmp_pd(wv, zero, _CMP_GT_OQ);
    const __m256d t = _mm256_blendv_pd(neg_inf, _mm256_loadu_pd(v.data() + i), pos);
    acc = _mm256_fmadd_pd(wv, exp_pd(_mm256_sub_pd(t, mm)), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i)
    if (w[i] > 0.0) s += w[i] * std::exp(v[i] - m);
  return m + std::log(s);
}

double tilt_logsumexp_avx2(std::span<const double> cost, std::span<const double> phi,
                           std::span<const double> w, double inv_lambda) noexcept {
  const std::size_t n = cost.size();
  const __m256d zero = _mm256_setzero_pd();
  const __m256d neg_inf = _mm256_set1_pd(kNegInf);
  const __m256d il = _mm256_set1_pd(inv_lambda);
  __m256d mv = neg_inf;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w.data() + i);
    const __m256d pos = _mm256_cmp_pd(wv, zero, _CMP_GT_OQ);
    const __m256d t = _mm256_mul_pd(
        _mm256_sub_pd(_mm256_loadu_pd(phi.data() + i), _mm256_loadu_pd(cost.data() + i)), il);
    mv = _mm256_max_pd(mv, _mm256_blendv_pd(neg_inf, t, pos));
  }
  double m = hmax(mv);
  for (; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    const double t = (phi[i] - cost[i]) * inv_lambda;
    if (t > m) m = t;
  }
  if (!std::isfinite(m)) return kNegInf;

  const __m256d mm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w.data() + i);
    const __m256d pos = _mm256_cmp_pd(wv, zero, _CMP_GT_OQ);
    __m256d t = _mm256_mul_pd(
        _mm256_sub_pd(_mm256_loadu_pd(phi.data() + i), _mm256_loadu_pd(cost.data() + i)), il);
    t = _mm256_blendv_pd(neg_inf, t, pos);
    acc = _mm256_fmadd_pd(wv, exp_pd(_mm256_sub_pd(t, mm)), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    s += w[i] * std::exp((phi[i] - cost[i]) * inv_lambda - m);
  }
  return m + std::log(s);
}

double kl_sum_avx2(std::span<const double> f, std::span<const double> f0) noexcept {
  const std::size_t n = f.size();
  const __m256d zero = _mm256_setzero_pd();
  // blocks with a ratio outside the normal range fall back to the exact path
  const __m256d rmin = _mm256_set1_pd(0x1p-1021);
  const __m256d rmax = _mm256_set1_pd(0x1p1021);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d fv = _mm256_loadu_pd(f.data() + i);
    const __m256d f0v = _mm256_loadu_pd(f0.data() + i);
    const __m256d active = _mm256_cmp_pd(fv, zero, _CMP_GT_OQ);
    if (_mm256_movemask_pd(active) == 0) continue;
    const __m256d bad_ref = _mm256_and_pd(active, _mm256_cmp_pd(f0v, zero, _CMP_LE_OQ));
    if (_mm256_movemask_pd(bad_ref) != 0) return std::numeric_limits<double>::infinity();
    const __m256d r = _mm256_div_pd(fv, f0v);
    const __m256d out_of_range =
        _mm256_and_pd(active, _mm256_or_pd(_mm256_cmp_pd(r, rmin, _CMP_LT_OQ),
                                           _mm256_cmp_pd(r, rmax, _CMP_GT_OQ)));
    if (_mm256_movemask_pd(out_of_range) != 0) {
      double partial = 0.0;
      for (std::size_t k = i; k < i + 4; ++k)
        if (f[k] > 0.0) partial += f[k] * std::log(f[k] / f0[k]);
      acc = _mm256_add_pd(acc, _mm256_set_pd(0.0, 0.0, 0.0, partial));
      continue;
    }
    const __m256d contrib = _mm256_and_pd(active, _mm256_mul_pd(fv, log_pd(r)));
    acc = _mm256_add_pd(acc, contrib);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    if (f[i] > 0.0) {
      if (f0[i] <= 0.0) return std::numeric_limits<double>::infinity();
      s += f[i] * std::log(f[i] / f0[i]);
    }
  }
  return s;
}

}  // namespace

const Avx2Ops* avx2_ops() noexcept {
  static const Avx2Ops ops = {
      dot_avx2,       sum_avx2,
      max_avx2,       vexp_avx2,
      logsumexp_avx2, weighted_logsumexp_avx2,
      tilt_logsumexp_avx2, kl_sum_avx2,
  };
  return &ops;
}

}  // namespace robustdyn::kernels::detail
