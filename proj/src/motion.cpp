#include "amgan/motion.hpp"

#include "amgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace amgan {

MotionMatrix::MotionMatrix(std::array<Samples, kMotionColumns> columns)
    : columns_(std::move(columns)), n_(columns_[0].size()) {
  for (const auto& c : columns_) {
    if (c.size() != n_) throw InvalidInput("motion matrix: columns differ in length");
    for (double v : c) {
      if (!std::isfinite(v)) throw InvalidInput("motion matrix: non-finite entry");
    }
  }
  if (n_ < kMotionColumns) throw InvalidInput("motion matrix: need at least 6 rows");
}

MotionMatrix MotionMatrix::scaled(const std::array<double, kMotionColumns>& scale) const {
  auto cols = columns_;
  for (std::size_t j = 0; j < kMotionColumns; ++j) {
    for (double& v : cols[j]) v *= scale[j];
  }
  return MotionMatrix(std::move(cols));
}

Samples MotionBasis::projector() const {
  Samples p(length * length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t k = 0; k < length; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < rank; ++j) s += at(i, j) * at(k, j);
      p[i * length + k] = s;
    }
  }
  return p;
}

SymmetricEigen jacobi_eigen(std::span<const double> sym, std::size_t n) {
  if (sym.size() != n * n) throw InvalidInput("jacobi_eigen: matrix size mismatch");
  Samples a(sym.begin(), sym.end());
  Samples v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  auto V = [&](std::size_t i, std::size_t j) -> double& { return v[i * n + j]; };

  double total = 0.0;
  for (double x : a) total += x * x;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    }
    if (off <= 1e-32 * total || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p);
          const double akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k);
          const double aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V(k, p);
          const double vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return A(x, x) > A(y, y); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.assign(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = A(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + k] = V(i, order[k]);
  }
  return out;
}

namespace {

// Columns given as a row-major N x c matrix. Returns Gram matrix c x c.
Samples gram(const Samples& x, std::size_t rows, std::size_t cols) {
  Samples g(cols * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = &x[i * cols];
    for (std::size_t a = 0; a < cols; ++a) {
      for (std::size_t b = a; b < cols; ++b) g[a * cols + b] += r[a] * r[b];
    }
  }
  for (std::size_t a = 0; a < cols; ++a) {
    for (std::size_t b = 0; b < a; ++b) g[a * cols + b] = g[b * cols + a];
  }
  return g;
}

// x (rows x cols) times E restricted to the first `keep` eigenvectors, each
// scaled by 1/sqrt(eigenvalue).
Samples whiten(const Samples& x, std::size_t rows, std::size_t cols, const SymmetricEigen& eig,
               std::size_t keep) {
  Samples out(rows * keep, 0.0);
  for (std::size_t k = 0; k < keep; ++k) {
    const double inv = 1.0 / std::sqrt(eig.values[k]);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += x[i * cols + j] * eig.vectors[j * cols + k];
      out[i * keep + k] = s * inv;
    }
  }
  return out;
}

}  // namespace

MotionBasis build_basis(const MotionMatrix& m, double rank_tol) {
  if (!(rank_tol > 0.0)) throw InvalidInput("build_basis: rank tolerance must be positive");
  const std::size_t n = m.length_samples();
  Samples a(n * kMotionColumns);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kMotionColumns; ++j) a[i * kMotionColumns + j] = m.column(j)[i];
  }

  const auto eig = jacobi_eigen(gram(a, n, kMotionColumns), kMotionColumns);
  const double top = eig.values.front();
  if (!(top > 0.0)) throw ZeroMotion("build_basis: motion matrix carries no energy");
  std::size_t rank = 0;
  while (rank < kMotionColumns && eig.values[rank] > rank_tol * top) ++rank;

  Samples phi = whiten(a, n, kMotionColumns, eig, rank);
  const auto refine = jacobi_eigen(gram(phi, n, rank), rank);
  phi = whiten(phi, n, rank, refine, rank);

  MotionBasis basis;
  basis.length = n;
  basis.rank = rank;
  basis.phi = std::move(phi);
  basis.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(rank));
  return basis;
}

Samples remove_motion(std::span<const double> p, const MotionBasis& basis) {
  if (p.size() != basis.length) throw InvalidInput("remove_motion: signal length differs from basis");
  Samples coef(basis.rank, 0.0);
  for (std::size_t i = 0; i < basis.length; ++i) {
    for (std::size_t j = 0; j < basis.rank; ++j) coef[j] += basis.at(i, j) * p[i];
  }
  Samples s(p.begin(), p.end());
  for (std::size_t i = 0; i < basis.length; ++i) {
    double proj = 0.0;
    for (std::size_t j = 0; j < basis.rank; ++j) proj += basis.at(i, j) * coef[j];
    s[i] -= proj;
  }
  return s;
}

ConditionedRecord condition_record(const MultiChannelRecord& rec, const FilterSpec& fspec) {
  const double fs = rec.sample_rate_hz();
  const auto vel = integrate_velocity(rec);
  ConditionedRecord out;
  out.sample_rate_hz = fs;
  out.length = rec.length_samples();
  out.untrusted_edge = fspec.untrusted_edge_samples();
  for (const auto& [tag, v] : rec.ppg_channels()) out.ppg.emplace(tag, bandpass(v, fs, fspec));
  const std::array<const Samples*, kMotionColumns> raw = {&rec.acc_x(), &rec.acc_y(), &rec.acc_z(),
                                                          &vel.v_x,     &vel.v_y,     &vel.v_z};
  for (std::size_t j = 0; j < kMotionColumns; ++j) out.motion[j] = bandpass(*raw[j], fs, fspec);
  return out;
}

MotionMatrix motion_window(const ConditionedRecord& rec, const FrameRange& frame) {
  if (frame.end() > rec.length) throw InvalidInput("motion_window: frame exceeds record");
  std::array<Samples, kMotionColumns> cols;
  for (std::size_t j = 0; j < kMotionColumns; ++j) {
    const auto first = rec.motion[j].begin() + static_cast<std::ptrdiff_t>(frame.begin);
    cols[j].assign(first, first + static_cast<std::ptrdiff_t>(frame.length));
  }
  return MotionMatrix(std::move(cols));
}

Samples remove_motion_or_identity(std::span<const double> p, const MotionMatrix& m, bool* zero_motion) {
  try {
    const auto basis = build_basis(m);
    if (zero_motion) *zero_motion = false;
    return remove_motion(p, basis);
  } catch (const ZeroMotion&) {
    if (zero_motion) *zero_motion = true;
    return Samples(p.begin(), p.end());
  }
}

std::vector<ReferenceFrame> reference_pipeline(const ConditionedRecord& rec, const WindowSpec& wspec,
                                               PpgChannel channel) {
  if (std::abs(rec.sample_rate_hz - wspec.sample_rate_hz) > 1e-9 * wspec.sample_rate_hz) {
    throw InvalidInput("reference_pipeline: record rate differs from window spec rate");
  }
  auto it = rec.ppg.find(channel);
  if (it == rec.ppg.end()) throw InvalidInput("reference_pipeline: missing PPG channel");
  const auto frames = make_windows(rec.length, wspec);
  std::vector<ReferenceFrame> out;
  out.reserve(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    std::span<const double> p(it->second.data() + f.begin, f.length);
    ReferenceFrame rf;
    rf.window_index = k;
    rf.t0 = static_cast<double>(f.begin) / rec.sample_rate_hz;
    rf.s_ref = remove_motion_or_identity(p, motion_window(rec, f), &rf.zero_motion);
    rf.edge = f.begin < rec.untrusted_edge || f.end() + rec.untrusted_edge > rec.length;
    out.push_back(std::move(rf));
  }
  return out;
}

std::vector<ReferenceFrame> reference_pipeline(const MultiChannelRecord& rec, const FilterSpec& fspec,
                                               const WindowSpec& wspec, PpgChannel channel) {
  if (rec.length_samples() < wspec.window_samples()) {
    throw InvalidInput("reference_pipeline: record shorter than one window");
  }
  return reference_pipeline(condition_record(rec, fspec), wspec, channel);
}

}  // namespace amgan
