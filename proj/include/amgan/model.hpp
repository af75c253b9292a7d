#pragma once

#include "amgan/gradcheck.hpp"
#include "amgan/ops.hpp"
#include "amgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace amgan {

using ad::Tensor;

struct GeneratorConfig {
  std::size_t input_length = 256;
  std::array<std::size_t, 4> encoder_channels = {16, 32, 64, 128};
  std::size_t kernel_size = 15;
  std::size_t stride = 2;
  std::size_t attention_heads = 8;
  // 0 selects bottleneck / heads.
  std::size_t attention_dim = 0;
  double leaky_slope = 0.2;
  // Queries from the PPG stream, keys and values from motion.
  bool swap_qkv = false;
  // false concatenates the two bottlenecks instead of attending.
  bool use_attention = true;

  void validate() const;
  std::size_t bottleneck_channels() const { return encoder_channels[3]; }
  std::size_t head_dim() const;
  std::size_t bottleneck_length() const;
  std::size_t padding() const { return kernel_size / 2; }
};

// Convolution without bias followed by batch normalisation.
struct ConvBn {
  Tensor weight;
  Tensor gamma, beta;
  Tensor running_mean, running_var;
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv;
  Tensor wo, bo;
};

struct GeneratorParams {
  GeneratorConfig config;
  std::array<ConvBn, 4> ppg_encoder;
  std::array<ConvBn, 4> motion_encoder;
  AttentionParams attention;
  std::array<ConvBn, 4> decoder;
  Tensor out_weight, out_bias;

  static GeneratorParams init(const GeneratorConfig& cfg, std::uint64_t seed);
  // Every tensor including batch-norm buffers, in a fixed order.
  ad::NamedTensors named() const;
  std::vector<Tensor> trainable() const;
  std::size_t parameter_count() const;
  GeneratorParams clone() const;
};

struct DiscriminatorParams {
  GeneratorConfig config;
  std::array<ConvBn, 4> layers;
  Tensor fc_weight, fc_bias;

  static DiscriminatorParams init(const GeneratorConfig& cfg, std::uint64_t seed);
  ad::NamedTensors named() const;
  std::vector<Tensor> trainable() const;
  DiscriminatorParams clone() const;
};

struct AttentionOutput {
  Tensor fused;    // [B,C,L']
  Tensor weights;  // [B*heads, L', L'], rows sum to one
};

AttentionOutput cross_attention(const AttentionParams& p, const GeneratorConfig& cfg, const Tensor& x_ppg,
                                const Tensor& x_motion);

// p [B,1,L], acc_vel [B,6,L] ordered (ax, ay, az, vx, vy, vz) -> [B,1,L].
Tensor generator_forward(GeneratorParams& g, const Tensor& p, const Tensor& acc_vel, ad::Mode mode);

// s [B,1,L] -> [B] pre-sigmoid scores.
Tensor discriminator_logits(DiscriminatorParams& d, const Tensor& s, ad::Mode mode);
// s [B,1,L] -> [B] probabilities in (0,1).
Tensor discriminator_forward(DiscriminatorParams& d, const Tensor& s, ad::Mode mode);

struct LossTerms {
  Tensor total;
  double adversarial = 0.0;
  double mse = 0.0;
};

// Adversarial term on discriminator logits plus lambda * mean squared error.
// Non-saturating -mean(log D) unless `literal`, which minimises mean(log(1 - D)).
// adversarial = false drops the adversarial term.
LossTerms generator_loss(const Tensor& fake_logits, const Tensor& g_out, const Tensor& s_ref, double lambda,
                         bool literal = false, bool adversarial = true);

// Binary cross-entropy with real target `real_label` and fake target 0.
Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits, double real_label);

// Finite-difference checks through a small generator (random 100-parameter
// sweep) and both loss towers.
std::vector<ad::GradCheckResult> run_model_gradchecks(std::uint64_t seed, const ad::GradCheckOptions& opt = {});

// Every op check followed by the model checks.
std::vector<ad::GradCheckResult> run_gradcheck_suite(std::uint64_t seed, const ad::GradCheckOptions& opt = {});

}  // namespace amgan
