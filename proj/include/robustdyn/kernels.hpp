#pragma once

#include <cstddef>
#include <span>

// Scalar reference kernels for the arithmetic inner loops, plus SIMD variants
// selected at runtime. All log-domain reductions are max-shift stabilized so
// they stay finite for any finite input; -inf entries are legal and contribute
// zero mass.

namespace robustdyn::kernels {

enum class Isa { Scalar, Avx2 };

// ISA active for subsequent kernel calls. Dispatch runs once at startup and
// picks the widest supported ISA; set_isa exists so equivalence tests can pin
// one implementation. Not safe to call concurrently with kernel use.
Isa active_isa() noexcept;
bool set_isa(Isa isa) noexcept;
const char* isa_name(Isa isa) noexcept;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double sum(std::span<const double> a) noexcept;
double max_value(std::span<const double> a) noexcept;  // -inf on empty input

// out[i] = exp(in[i])
void vexp(std::span<double> out, std::span<const double> in) noexcept;

// log sum_i exp(v[i]); -inf if all entries are -inf
double logsumexp(std::span<const double> v) noexcept;

// log sum_i w[i] exp(v[i]) with w[i] >= 0; zero-weight entries are skipped
double weighted_logsumexp(std::span<const double> v, std::span<const double> w) noexcept;

// Fused Sinkhorn row reduction: log sum_j w[j] exp((phi[j] - cost[j]) * inv_lambda).
double tilt_logsumexp(std::span<const double> cost, std::span<const double> phi,
                      std::span<const double> w, double inv_lambda) noexcept;

// sum_i f[i] log(f[i]/f0[i]) with 0 log 0 := 0; +inf when f>0 meets f0=0.
double kl_sum(std::span<const double> f, std::span<const double> f0) noexcept;

}  // namespace robustdyn::kernels
