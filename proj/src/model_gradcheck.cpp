#include "amgan/model.hpp"

#include <random>

namespace amgan {

using ad::Mode;

namespace {

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.input_length = 32;
  c.encoder_channels = {3, 4, 4, 8};
  c.kernel_size = 5;
  c.attention_heads = 2;
  return c;
}

}  // namespace

std::vector<ad::GradCheckResult> run_model_gradchecks(std::uint64_t seed, const ad::GradCheckOptions& opt) {
  std::mt19937_64 rng(seed);
  const GeneratorConfig cfg = tiny_config();
  const std::size_t B = 2, L = cfg.input_length;
  std::vector<ad::GradCheckResult> out;

  GeneratorParams g = GeneratorParams::init(cfg, seed + 1);
  DiscriminatorParams d = DiscriminatorParams::init(cfg, seed + 2);
  const Tensor p = random_tensor({B, 1, L}, rng);
  const Tensor m = random_tensor({B, 6, L}, rng);
  const Tensor target = random_tensor({B, 1, L}, rng);
  const Tensor w = random_tensor({B, 1, L}, rng);

  ad::GradCheckOptions sweep = opt;
  sweep.max_entries = 100;
  sweep.seed = seed + 3;
  out.push_back(ad::check_gradients(
      "generator (100-parameter sweep)",
      [&] { return ad::weighted_sum(generator_forward(g, p, m, Mode::Train), w); }, g.trainable(), sweep));

  GeneratorConfig concat_cfg = cfg;
  concat_cfg.use_attention = false;
  GeneratorParams gc = GeneratorParams::init(concat_cfg, seed + 4);
  sweep.seed = seed + 5;
  out.push_back(ad::check_gradients(
      "generator without attention (100-parameter sweep)",
      [&] { return ad::weighted_sum(generator_forward(gc, p, m, Mode::Train), w); }, gc.trainable(), sweep));

  const Tensor real = random_tensor({B, 1, L}, rng);
  Tensor fake = random_tensor({B, 1, L}, rng);
  auto d_inputs = d.trainable();
  d_inputs.push_back(fake);
  out.push_back(ad::check_gradients(
      "discriminator loss",
      [&] {
        return discriminator_loss(discriminator_logits(d, real, Mode::Train), discriminator_logits(d, fake, Mode::Train),
                                  0.9);
      },
      d_inputs, opt));

  // Adversarial plus MSE term, back through the discriminator into the generator.
  auto both = g.trainable();
  for (const auto& t : d.trainable()) both.push_back(t);
  sweep.seed = seed + 6;
  for (bool literal : {false, true}) {
    out.push_back(ad::check_gradients(
        literal ? "generator loss, literal form, both towers" : "generator loss, both towers",
        [&] {
          const Tensor y = generator_forward(g, p, m, Mode::Train);
          return generator_loss(discriminator_logits(d, y, Mode::Train), y, target, 1.0, literal).total;
        },
        both, sweep));
  }
  return out;
}

std::vector<ad::GradCheckResult> run_gradcheck_suite(std::uint64_t seed, const ad::GradCheckOptions& opt) {
  auto out = ad::run_op_gradchecks(seed, opt);
  for (auto& r : run_model_gradchecks(seed, opt)) out.push_back(std::move(r));
  return out;
}

}  // namespace amgan
