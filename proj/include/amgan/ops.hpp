#pragma once

#include "amgan/tensor.hpp"

#include <cstdint>
#include <vector>

namespace amgan::ad {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// Reductions to a 1-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);
// log(sigmoid(a)), computed without overflow.
Tensor log_sigmoid(const Tensor& a);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [N,m,k] x [N,k,n] -> [N,m,n]
Tensor bmm(const Tensor& a, const Tensor& b);
// Swaps the last two axes of a rank-3 tensor.
Tensor transpose12(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);

// x [B,Cin,L], w [Cout,Cin,K], bias [Cout] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t padding);
// x [B,Cin,L], w [Cin,Cout,K]; output length (L-1)*stride - 2*padding + K.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding);

enum class Mode { Train, Eval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalisation of x [B,C,L]. Train mode normalises with batch
// statistics and updates the running buffers in place (not recorded on the
// tape); eval mode uses the running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, BatchNormOptions opt = {});

// [B,C,L] -> [B,C]
Tensor global_avg_pool(const Tensor& x);
// x [B,in], w [out,in], bias [out] -> [B,out]
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias);

// While alive, piecewise-linear ops fold the sign pattern of their inputs into
// a hash, so two evaluations can be checked for sitting on the same linear
// piece. One per thread; not reentrant.
class KinkSignature {
 public:
  KinkSignature();
  ~KinkSignature();
  KinkSignature(const KinkSignature&) = delete;
  KinkSignature& operator=(const KinkSignature&) = delete;
  std::uint64_t value() const { return hash_; }

 private:
  friend void observe_kinks(const std::vector<double>& x);
  std::uint64_t hash_ = 14695981039346656037ull;
};

void observe_kinks(const std::vector<double>& x);

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding);
std::size_t conv_transpose_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                         std::size_t padding);

}  // namespace amgan::ad
