#pragma once

#include <cmath>
#include <string_view>

namespace rom {

enum class Activation { kRelu, kIdentity };

std::string_view to_string(Activation a);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace rom
