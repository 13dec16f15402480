#pragma once

// Loop-based reference forward pass that reads the flat parameter array
// directly, so it shares no code with the library's Eigen implementation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "eatta/model.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

struct NaivePass {
  Rows features;
  Rows logits;
  Rows probs;
};

inline Rows to_rows(const eatta::Matrix& x) {
  Rows r(static_cast<std::size_t>(x.rows()), std::vector<double>(static_cast<std::size_t>(x.cols())));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) r[i][j] = x(i, j);
  return r;
}

inline std::vector<double> naive_softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += (p[k] = std::exp(z[k] - m));
  for (double& v : p) v /= s;
  return p;
}

inline double naive_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline double naive_ce(const std::vector<double>& p, int label) { return -std::log(std::max(p[label], 1e-12)); }

inline int naive_argmax(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = static_cast<int>(k);
  return best;
}

/// Offset of the classifier weight block in the flat array.
inline std::size_t classifier_offset(const eatta::ArchSpec& a) {
  std::size_t off = 0;
  int in = a.input_dim;
  for (int out : a.hidden) {
    off += static_cast<std::size_t>(in) * out + 3 * static_cast<std::size_t>(out);
    in = out;
  }
  return off;
}

inline Rows naive_classify(const eatta::Model& m, const Rows& features) {
  const auto& a = m.arch();
  const auto p = m.params();
  const int in = a.hidden.empty() ? a.input_dim : a.hidden.back();
  const std::size_t w = classifier_offset(a);
  const std::size_t b = w + static_cast<std::size_t>(in) * a.num_classes;
  Rows out;
  for (const auto& f : features) {
    std::vector<double> z(static_cast<std::size_t>(a.num_classes));
    for (int c = 0; c < a.num_classes; ++c) {
      double s = p[b + c];
      for (int j = 0; j < in; ++j) s += p[w + static_cast<std::size_t>(c) * in + j] * f[j];
      z[c] = s;
    }
    out.push_back(std::move(z));
  }
  return out;
}

inline NaivePass naive_forward(const eatta::Model& m, const eatta::Matrix& x, bool batch_stats) {
  const auto& a = m.arch();
  const auto p = m.params();
  Rows act = to_rows(x);
  const std::size_t n = act.size();
  std::size_t off = 0;
  int in = a.input_dim;
  for (std::size_t l = 0; l < a.hidden.size(); ++l) {
    const int out = a.hidden[l];
    const std::size_t w = off, b = w + static_cast<std::size_t>(in) * out, sc = b + out, sh = sc + out;
    Rows z(n, std::vector<double>(static_cast<std::size_t>(out)));
    for (std::size_t i = 0; i < n; ++i)
      for (int o = 0; o < out; ++o) {
        double s = p[b + o];
        for (int j = 0; j < in; ++j) s += p[w + static_cast<std::size_t>(o) * in + j] * act[i][j];
        z[i][o] = s;
      }
    for (int o = 0; o < out; ++o) {
      double mean = 0.0, var = 0.0;
      if (batch_stats) {
        for (std::size_t i = 0; i < n; ++i) mean += z[i][o];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) var += (z[i][o] - mean) * (z[i][o] - mean);
        var /= static_cast<double>(n);
      } else {
        mean = m.running_mean(static_cast<int>(l))[o];
        var = m.running_var(static_cast<int>(l))[o];
      }
      const double inv = 1.0 / std::sqrt(var + m.norm_eps());
      for (std::size_t i = 0; i < n; ++i) {
        const double y = p[sc + o] * (z[i][o] - mean) * inv + p[sh + o];
        z[i][o] = y > 0.0 ? y : 0.0;
      }
    }
    act = std::move(z);
    off = sh + out;
    in = out;
  }
  NaivePass r;
  r.features = act;
  r.logits = naive_classify(m, act);
  for (const auto& z : r.logits) r.probs.push_back(naive_softmax(z));
  return r;
}

/// Mean entropy / cross-entropy over a row subset, times `scale`.
inline double naive_loss(const NaivePass& pass, const std::vector<int>& rows, const std::vector<int>* labels,
                         double scale = 1.0) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& pr = pass.probs[rows[k]];
    s += labels ? naive_ce(pr, (*labels)[k]) : naive_entropy(pr);
  }
  return scale * s / static_cast<double>(rows.size());
}

}  // namespace oracle
