#pragma once

#include <span>

namespace robustdyn::kernels::detail {

struct Avx2Ops {
  double (*dot)(std::span<const double>, std::span<const double>) noexcept = nullptr;
  double (*sum)(std::span<const double>) noexcept = nullptr;
  double (*max_value)(std::span<const double>) noexcept = nullptr;
  void (*vexp)(std::span<double>, std::span<const double>) noexcept = nullptr;
  double (*logsumexp)(std::span<const double>) noexcept = nullptr;
  double (*weighted_logsumexp)(std::span<const double>, std::span<const double>) noexcept = nullptr;
  double (*tilt_logsumexp)(std::span<const double>, std::span<const double>,
                           std::span<const double>, double) noexcept = nullptr;
  double (*kl_sum)(std::span<const double>, std::span<const double>) noexcept = nullptr;
};

const Avx2Ops* avx2_ops() noexcept;

}  // namespace robustdyn::kernels::detail
