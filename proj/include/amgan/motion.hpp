#pragma once

#include "amgan/signal.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace amgan {

inline constexpr std::size_t kMotionColumns = 6;

// N x 6 motion matrix with columns (a_x, a_y, a_z, v_x, v_y, v_z).
class MotionMatrix {
 public:
  explicit MotionMatrix(std::array<Samples, kMotionColumns> columns);

  std::size_t length_samples() const { return n_; }
  const Samples& column(std::size_t j) const { return columns_.at(j); }
  const std::array<Samples, kMotionColumns>& columns() const { return columns_; }

  // Returns a copy with column j multiplied by scale[j].
  MotionMatrix scaled(const std::array<double, kMotionColumns>& scale) const;

 private:
  std::array<Samples, kMotionColumns> columns_;
  std::size_t n_;
};

// Orthonormal basis of the motion subspace.
struct MotionBasis {
  std::size_t length = 0;  // N
  std::size_t rank = 0;    // r
  Samples phi;             // N x r, row-major
  Samples eigenvalues;     // Gram eigenvalues of the retained modes, descending

  double at(std::size_t i, std::size_t j) const { return phi[i * rank + j]; }
  // Dense N x N projector phi * phi^T, row-major. Intended for checks.
  Samples projector() const;
};

struct SymmetricEigen {
  Samples values;   // descending
  Samples vectors;  // n x n row-major; column k pairs with values[k]
};

// Cyclic Jacobi rotations for a small dense symmetric matrix (row-major n x n).
SymmetricEigen jacobi_eigen(std::span<const double> sym, std::size_t n);

inline constexpr double kDefaultRankTol = 1e-10;

// Gram-matrix eigen-route: phi = a U D^{-1/2}, keeping modes whose eigenvalue
// exceeds rank_tol * max eigenvalue. A second pass over phi's own Gram matrix
// restores orthonormality lost to conditioning. Throws ZeroMotion when the
// matrix carries no energy.
MotionBasis build_basis(const MotionMatrix& m, double rank_tol = kDefaultRankTol);

// s = p - phi (phi^T p).
Samples remove_motion(std::span<const double> p, const MotionBasis& basis);

// Record after band-pass conditioning: filtered PPG channels plus the six
// filtered motion columns. Velocity is integrated from the raw acceleration
// over the whole record before filtering so that filtered velocity and
// filtered acceleration come from one linear map of the raw motion.
struct ConditionedRecord {
  double sample_rate_hz = 0.0;
  std::size_t length = 0;
  std::size_t untrusted_edge = 0;
  std::map<PpgChannel, Samples> ppg;
  std::array<Samples, kMotionColumns> motion;
};

ConditionedRecord condition_record(const MultiChannelRecord& rec, const FilterSpec& fspec);

MotionMatrix motion_window(const ConditionedRecord& rec, const FrameRange& frame);

struct ReferenceFrame {
  std::size_t window_index = 0;
  double t0 = 0.0;
  Samples s_ref;
  bool zero_motion = false;
  // Window overlaps the filter's untrusted edge at either end of the record.
  bool edge = false;
};

// Per-window reference PPG (s_ref): project the motion subspace out of each
// band-passed window. Frames align with make_windows.
std::vector<ReferenceFrame> reference_pipeline(const MultiChannelRecord& rec, const FilterSpec& fspec,
                                               const WindowSpec& wspec,
                                               PpgChannel channel = PpgChannel::green);

std::vector<ReferenceFrame> reference_pipeline(const ConditionedRecord& rec, const WindowSpec& wspec,
                                               PpgChannel channel = PpgChannel::green);

// Projection of a single window, identity when the window has no motion energy.
Samples remove_motion_or_identity(std::span<const double> p, const MotionMatrix& m,
                                  bool* zero_motion = nullptr);

}  // namespace amgan
