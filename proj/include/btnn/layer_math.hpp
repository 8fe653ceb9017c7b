#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "btnn/common.hpp"

namespace btnn {

/// Per-channel batch norm: y = (x - mean)/sqrt(var + eps) * gamma + beta.
struct BnParams {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }

  void validate() const {
    if (gamma.empty() || beta.size() != gamma.size() || mean.size() != gamma.size() ||
        var.size() != gamma.size())
      throw invalid_input("BnParams: channel arrays must be non-empty and equal length");
    if (!(eps > 0.0) || !std::isfinite(eps))
      throw invalid_input("BnParams: eps must be positive and finite");
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      if (!std::isfinite(gamma[i]) || !std::isfinite(beta[i]) || !std::isfinite(mean[i]) ||
          !std::isfinite(var[i]) || var[i] < 0.0)
        throw invalid_input("BnParams: bad values at channel " + std::to_string(i));
    }
  }

  double apply(std::size_t ch, double x) const {
    return (x - mean[ch]) / std::sqrt(var[ch] + eps) * gamma[ch] + beta[ch];
  }
};

/// Decision rule equivalent to sign(bn(x)): fire() true means the +1 bit.
enum class ThresholdKind : std::uint8_t { Geq, Leq, ConstPlus, ConstMinus };

struct Threshold {
  double tau = 0.0;
  ThresholdKind kind = ThresholdKind::Geq;

  bool fire(double x) const {
    switch (kind) {
      case ThresholdKind::Geq: return x >= tau;
      case ThresholdKind::Leq: return x <= tau;
      case ThresholdKind::ConstPlus: return true;
      case ThresholdKind::ConstMinus: return false;
    }
    return false;
  }

  bool operator==(const Threshold&) const = default;
};

/// Folds bn followed by sign into one comparison. With s = sqrt(var + eps):
/// gamma > 0:  sign(bn(x)) >= 0  <=>  x >= mean - beta*s/gamma
/// gamma < 0:  comparison flips at the same tau
/// gamma = 0:  bn(x) = beta, a constant
inline Threshold fold_bn_sign(double gamma, double beta, double mean, double var,
                              double eps) {
  const double s = std::sqrt(var + eps);
  if (gamma > 0.0) return {mean - beta * s / gamma, ThresholdKind::Geq};
  if (gamma < 0.0) return {mean - beta * s / gamma, ThresholdKind::Leq};
  return {0.0, beta >= 0.0 ? ThresholdKind::ConstPlus : ThresholdKind::ConstMinus};
}

inline Threshold fold_bn_sign(const BnParams& bn, std::size_t ch) {
  return fold_bn_sign(bn.gamma[ch], bn.beta[ch], bn.mean[ch], bn.var[ch], bn.eps);
}

inline std::vector<Threshold> fold_bn_sign(const BnParams& bn) {
  bn.validate();
  std::vector<Threshold> out(bn.channels());
  for (std::size_t ch = 0; ch < bn.channels(); ++ch) out[ch] = fold_bn_sign(bn, ch);
  return out;
}

}  // namespace btnn
