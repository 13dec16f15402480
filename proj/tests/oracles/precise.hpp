#pragma once

// 50-digit reference values for softmax, entropy and cross-entropy.

#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Big = boost::multiprecision::cpp_bin_float_50;

inline std::vector<Big> precise_softmax(const std::vector<double>& logits) {
  Big m = logits[0];
  for (double v : logits)
    if (Big(v) > m) m = v;
  std::vector<Big> p;
  Big s = 0;
  for (double v : logits) {
    p.push_back(boost::multiprecision::exp(Big(v) - m));
    s += p.back();
  }
  for (auto& v : p) v /= s;
  return p;
}

inline Big precise_entropy(const std::vector<Big>& p) {
  Big h = 0;
  for (const auto& v : p)
    if (v > 0) h -= v * boost::multiprecision::log(v);
  return h;
}

inline Big precise_ce(const std::vector<Big>& p, int label) {
  Big v = p[label];
  if (v < Big(1e-12)) v = Big(1e-12);
  return -boost::multiprecision::log(v);
}

}  // namespace oracle
