#include "amgan/oracle.hpp"

#include "amgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace amgan {

namespace {

constexpr double kPivotTol = 1e-12;

// Greedy symmetric pivoting on the Gram matrix: pick the column with the
// largest remaining Schur diagonal until the remainder is negligible.
std::vector<std::size_t> select_columns(std::vector<double> g, std::size_t n) {
  double top = 0.0;
  for (std::size_t i = 0; i < n; ++i) top = std::max(top, g[i * n + i]);
  std::vector<std::size_t> chosen;
  if (!(top > 0.0)) return chosen;
  std::vector<bool> used(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    double best_val = kPivotTol * top;
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i] && g[i * n + i] > best_val) {
        best = i;
        best_val = g[i * n + i];
      }
    }
    if (best == n) break;
    used[best] = true;
    chosen.push_back(best);
    const double piv = g[best * n + best];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == best || j == best) continue;
        g[i * n + j] -= g[i * n + best] * g[best * n + j] / piv;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      g[i * n + best] = 0.0;
      g[best * n + i] = 0.0;
    }
  }
  return chosen;
}

// Gauss-Jordan inverse with partial pivoting of a k x k row-major matrix.
std::vector<double> invert(std::vector<double> a, std::size_t k) {
  std::vector<double> inv(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) inv[i * k + i] = 1.0;
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r) {
      if (std::abs(a[r * k + col]) > std::abs(a[piv * k + col])) piv = r;
    }
    if (a[piv * k + col] == 0.0) throw InvalidInput("oracle_least_squares: singular normal matrix");
    if (piv != col) {
      for (std::size_t c = 0; c < k; ++c) {
        std::swap(a[col * k + c], a[piv * k + c]);
        std::swap(inv[col * k + c], inv[piv * k + c]);
      }
    }
    const double d = a[col * k + col];
    for (std::size_t c = 0; c < k; ++c) {
      a[col * k + c] /= d;
      inv[col * k + c] /= d;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      const double f = a[r * k + col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) {
        a[r * k + c] -= f * a[col * k + c];
        inv[r * k + c] -= f * inv[col * k + c];
      }
    }
  }
  return inv;
}

}  // namespace

Samples oracle_least_squares(std::span<const double> p, const MotionMatrix& motion) {
  const std::size_t n = motion.length_samples();
  if (p.size() != n) throw InvalidInput("oracle_least_squares: length mismatch");
  constexpr std::size_t m = kMotionColumns;

  std::vector<double> g(m * m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += motion.column(a)[i] * motion.column(b)[i];
      g[a * m + b] = s;
    }
  }
  const auto cols = select_columns(g, m);
  Samples residual(p.begin(), p.end());
  if (cols.empty()) return residual;

  const std::size_t k = cols.size();
  std::vector<double> gk(k * k);
  std::vector<double> rhs(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) gk[a * k + b] = g[cols[a] * m + cols[b]];
    for (std::size_t i = 0; i < n; ++i) rhs[a] += motion.column(cols[a])[i] * p[i];
  }
  const auto inv = invert(gk, k);
  std::vector<double> coef(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) coef[a] += inv[a * k + b] * rhs[b];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t a = 0; a < k; ++a) fit += motion.column(cols[a])[i] * coef[a];
    residual[i] -= fit;
  }
  return residual;
}

}  // namespace amgan
