#include "amgan/model.hpp"

#include "amgan/errors.hpp"

#include <cmath>
#include <random>

namespace amgan {

using ad::Mode;
using ad::Shape;

void GeneratorConfig::validate() const {
  if (kernel_size == 0 || stride == 0) throw ConfigError("generator: kernel_size and stride must be positive");
  for (std::size_t c : encoder_channels) {
    if (c == 0) throw ConfigError("generator: encoder_channels must be positive");
  }
  std::size_t div = 1;
  for (int i = 0; i < 4; ++i) div *= stride;
  if (input_length == 0 || input_length % div != 0) {
    throw ConfigError("generator: input_length must be divisible by stride^4");
  }
  if (attention_heads == 0 || bottleneck_channels() % attention_heads != 0) {
    throw ConfigError("generator: bottleneck channels not divisible by attention_heads");
  }
  if (attention_dim != 0 && attention_dim * attention_heads != bottleneck_channels()) {
    throw ConfigError("generator: attention_dim * attention_heads must equal the bottleneck channels");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("generator: leaky_slope must be in [0, 1)");
  if (kernel_size % 2 == 0) throw ConfigError("generator: kernel_size must be odd");
}

std::size_t GeneratorConfig::head_dim() const {
  return attention_dim != 0 ? attention_dim : bottleneck_channels() / attention_heads;
}

std::size_t GeneratorConfig::bottleneck_length() const {
  std::size_t l = input_length;
  for (int i = 0; i < 4; ++i) l = ad::conv_output_length(l, kernel_size, stride, padding());
  return l;
}

namespace {

ConvBn make_conv_bn(std::size_t cin, std::size_t cout, std::size_t k, bool transposed, std::mt19937_64& rng) {
  ConvBn l;
  l.weight = transposed ? Tensor::zeros({cin, cout, k}, true) : Tensor::zeros({cout, cin, k}, true);
  ad::init_uniform(l.weight, (transposed ? cout : cin) * k, rng);
  l.gamma = Tensor::full({cout}, 1.0, true);
  l.beta = Tensor::zeros({cout}, true);
  l.running_mean = Tensor::zeros({cout});
  l.running_var = Tensor::full({cout}, 1.0);
  return l;
}

Tensor conv1x1_weight(std::size_t cin, std::size_t cout, std::mt19937_64& rng) {
  Tensor w = Tensor::zeros({cout, cin, 1}, true);
  ad::init_uniform(w, cin, rng);
  return w;
}

void append(ad::NamedTensors& out, const std::string& prefix, const ConvBn& l) {
  out.emplace_back(prefix + ".weight", l.weight);
  out.emplace_back(prefix + ".bn.gamma", l.gamma);
  out.emplace_back(prefix + ".bn.beta", l.beta);
  out.emplace_back(prefix + ".bn.running_mean", l.running_mean);
  out.emplace_back(prefix + ".bn.running_var", l.running_var);
}

void append_trainable(std::vector<Tensor>& out, const ConvBn& l) {
  out.push_back(l.weight);
  out.push_back(l.gamma);
  out.push_back(l.beta);
}

ConvBn clone(const ConvBn& l) {
  ConvBn c;
  c.weight = l.weight.clone();
  c.gamma = l.gamma.clone();
  c.beta = l.beta.clone();
  c.running_mean = l.running_mean.clone();
  c.running_var = l.running_var.clone();
  return c;
}

Tensor encode_stage(ConvBn& l, const Tensor& x, const GeneratorConfig& cfg, Mode mode) {
  Tensor y = ad::conv1d(x, l.weight, Tensor(), cfg.stride, cfg.padding());
  y = ad::batch_norm(y, l.gamma, l.beta, l.running_mean, l.running_var, mode);
  return ad::leaky_relu(y, cfg.leaky_slope);
}

Tensor decode_stage(ConvBn& l, const Tensor& x, const GeneratorConfig& cfg, Mode mode) {
  Tensor y = ad::conv_transpose1d(x, l.weight, Tensor(), cfg.stride, cfg.padding());
  y = ad::batch_norm(y, l.gamma, l.beta, l.running_mean, l.running_var, mode);
  return ad::relu(y);
}

}  // namespace

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  GeneratorParams g;
  g.config = cfg;
  const auto& ch = cfg.encoder_channels;
  const std::size_t k = cfg.kernel_size;
  for (std::size_t i = 0; i < 4; ++i) g.ppg_encoder[i] = make_conv_bn(i == 0 ? 1 : ch[i - 1], ch[i], k, false, rng);
  for (std::size_t i = 0; i < 4; ++i) g.motion_encoder[i] = make_conv_bn(i == 0 ? 6 : ch[i - 1], ch[i], k, false, rng);

  const std::size_t c = cfg.bottleneck_channels();
  auto& a = g.attention;
  a.wq = conv1x1_weight(c, c, rng);
  a.wk = conv1x1_weight(c, c, rng);
  a.wv = conv1x1_weight(c, c, rng);
  a.wo = conv1x1_weight(c, c, rng);
  a.bq = Tensor::zeros({c}, true);
  a.bk = Tensor::zeros({c}, true);
  a.bv = Tensor::zeros({c}, true);
  a.bo = Tensor::zeros({c}, true);

  // Even transposed kernel so each stage exactly doubles the length.
  const std::size_t kt = k + 1;
  g.decoder[0] = make_conv_bn(cfg.use_attention ? c : 2 * c, ch[2], kt, true, rng);
  g.decoder[1] = make_conv_bn(3 * ch[2], ch[1], kt, true, rng);
  g.decoder[2] = make_conv_bn(3 * ch[1], ch[0], kt, true, rng);
  g.decoder[3] = make_conv_bn(3 * ch[0], ch[0], kt, true, rng);
  g.out_weight = conv1x1_weight(ch[0], 1, rng);
  g.out_bias = Tensor::zeros({1}, true);
  return g;
}

ad::NamedTensors GeneratorParams::named() const {
  ad::NamedTensors out;
  for (std::size_t i = 0; i < 4; ++i) append(out, "ppg_encoder." + std::to_string(i), ppg_encoder[i]);
  for (std::size_t i = 0; i < 4; ++i) append(out, "motion_encoder." + std::to_string(i), motion_encoder[i]);
  if (config.use_attention) {
    out.emplace_back("attention.wq", attention.wq);
    out.emplace_back("attention.bq", attention.bq);
    out.emplace_back("attention.wk", attention.wk);
    out.emplace_back("attention.bk", attention.bk);
    out.emplace_back("attention.wv", attention.wv);
    out.emplace_back("attention.bv", attention.bv);
    out.emplace_back("attention.wo", attention.wo);
    out.emplace_back("attention.bo", attention.bo);
  }
  for (std::size_t i = 0; i < 4; ++i) append(out, "decoder." + std::to_string(i), decoder[i]);
  out.emplace_back("out.weight", out_weight);
  out.emplace_back("out.bias", out_bias);
  return out;
}

std::vector<Tensor> GeneratorParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& l : ppg_encoder) append_trainable(out, l);
  for (const auto& l : motion_encoder) append_trainable(out, l);
  if (config.use_attention) {
    for (const Tensor* t : {&attention.wq, &attention.bq, &attention.wk, &attention.bk, &attention.wv, &attention.bv,
                            &attention.wo, &attention.bo}) {
      out.push_back(*t);
    }
  }
  for (const auto& l : decoder) append_trainable(out, l);
  out.push_back(out_weight);
  out.push_back(out_bias);
  return out;
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t.numel();
  return n;
}

GeneratorParams GeneratorParams::clone() const {
  GeneratorParams g;
  g.config = config;
  for (std::size_t i = 0; i < 4; ++i) {
    g.ppg_encoder[i] = amgan::clone(ppg_encoder[i]);
    g.motion_encoder[i] = amgan::clone(motion_encoder[i]);
    g.decoder[i] = amgan::clone(decoder[i]);
  }
  const auto& a = attention;
  g.attention = {a.wq.clone(), a.bq.clone(), a.wk.clone(), a.bk.clone(),
                 a.wv.clone(), a.bv.clone(), a.wo.clone(), a.bo.clone()};
  g.out_weight = out_weight.clone();
  g.out_bias = out_bias.clone();
  return g;
}

DiscriminatorParams DiscriminatorParams::init(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  DiscriminatorParams d;
  d.config = cfg;
  const auto& ch = cfg.encoder_channels;
  for (std::size_t i = 0; i < 4; ++i) d.layers[i] = make_conv_bn(i == 0 ? 1 : ch[i - 1], ch[i], cfg.kernel_size, false, rng);
  d.fc_weight = Tensor::zeros({1, ch[3]}, true);
  ad::init_uniform(d.fc_weight, ch[3], rng);
  d.fc_bias = Tensor::zeros({1}, true);
  return d;
}

ad::NamedTensors DiscriminatorParams::named() const {
  ad::NamedTensors out;
  for (std::size_t i = 0; i < 4; ++i) append(out, "disc." + std::to_string(i), layers[i]);
  out.emplace_back("disc.fc.weight", fc_weight);
  out.emplace_back("disc.fc.bias", fc_bias);
  return out;
}

std::vector<Tensor> DiscriminatorParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) append_trainable(out, l);
  out.push_back(fc_weight);
  out.push_back(fc_bias);
  return out;
}

DiscriminatorParams DiscriminatorParams::clone() const {
  DiscriminatorParams d;
  d.config = config;
  for (std::size_t i = 0; i < 4; ++i) d.layers[i] = amgan::clone(layers[i]);
  d.fc_weight = fc_weight.clone();
  d.fc_bias = fc_bias.clone();
  return d;
}

AttentionOutput cross_attention(const AttentionParams& p, const GeneratorConfig& cfg, const Tensor& x_ppg,
                                const Tensor& x_motion) {
  if (x_ppg.rank() != 3 || x_ppg.shape() != x_motion.shape()) {
    throw ShapeError("cross_attention: bottlenecks differ: " + ad::shape_string(x_ppg.shape()) + " vs " +
                     ad::shape_string(x_motion.shape()));
  }
  const std::size_t B = x_ppg.dim(0), C = x_ppg.dim(1), L = x_ppg.dim(2);
  const std::size_t h = cfg.attention_heads;
  if (h == 0 || C % h != 0) throw ConfigError("cross_attention: channels not divisible by heads");
  const std::size_t dk = C / h;

  const Tensor& kv_src = cfg.swap_qkv ? x_motion : x_ppg;
  const Tensor& q_src = cfg.swap_qkv ? x_ppg : x_motion;
  auto heads = [&](const Tensor& t) { return ad::reshape(t, {B * h, dk, L}); };
  const Tensor q = heads(ad::conv1d(q_src, p.wq, p.bq, 1, 0));
  const Tensor k = heads(ad::conv1d(kv_src, p.wk, p.bk, 1, 0));
  const Tensor v = heads(ad::conv1d(kv_src, p.wv, p.bv, 1, 0));

  // scores[b, i, j] = q_i . k_j / sqrt(dk), softmax over key positions j.
  const Tensor scores = ad::scale(ad::bmm(ad::transpose12(q), k), 1.0 / std::sqrt(static_cast<double>(dk)));
  const Tensor w = ad::softmax(scores, 2);
#ifndef NDEBUG
  const auto wd = w.data();
  for (std::size_t r = 0; r < B * h * L; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < L; ++j) s += wd[r * L + j];
    if (std::abs(s - 1.0) > 1e-6) throw NumericError("cross_attention: attention row does not sum to one");
  }
#endif
  const Tensor ctx = ad::transpose12(ad::bmm(w, ad::transpose12(v)));  // [B*h, dk, L]
  const Tensor mixed = ad::conv1d(ad::reshape(ctx, {B, C, L}), p.wo, p.bo, 1, 0);
  return {ad::sub(x_ppg, mixed), w};
}

Tensor generator_forward(GeneratorParams& g, const Tensor& p, const Tensor& acc_vel, Mode mode) {
  const auto& cfg = g.config;
  if (p.rank() != 3 || p.dim(1) != 1 || p.dim(2) != cfg.input_length) {
    throw ShapeError("generator: expected ppg [B,1," + std::to_string(cfg.input_length) + "], got " +
                     ad::shape_string(p.shape()));
  }
  if (acc_vel.rank() != 3 || acc_vel.dim(0) != p.dim(0) || acc_vel.dim(1) != 6 || acc_vel.dim(2) != cfg.input_length) {
    throw ShapeError("generator: expected motion [B,6," + std::to_string(cfg.input_length) + "], got " +
                     ad::shape_string(acc_vel.shape()));
  }
  std::array<Tensor, 4> ep, em;
  Tensor xp = p, xm = acc_vel;
  for (std::size_t i = 0; i < 4; ++i) {
    xp = ep[i] = encode_stage(g.ppg_encoder[i], xp, cfg, mode);
    xm = em[i] = encode_stage(g.motion_encoder[i], xm, cfg, mode);
  }
  Tensor y = cfg.use_attention ? cross_attention(g.attention, cfg, ep[3], em[3]).fused : ad::concat({ep[3], em[3]}, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) y = ad::concat({y, ep[3 - i], em[3 - i]}, 1);
    y = decode_stage(g.decoder[i], y, cfg, mode);
  }
  return ad::conv1d(y, g.out_weight, g.out_bias, 1, 0);
}

Tensor discriminator_logits(DiscriminatorParams& d, const Tensor& s, Mode mode) {
  const auto& cfg = d.config;
  if (s.rank() != 3 || s.dim(1) != 1) {
    throw ShapeError("discriminator: expected [B,1,L], got " + ad::shape_string(s.shape()));
  }
  Tensor x = s;
  for (auto& l : d.layers) x = encode_stage(l, x, cfg, mode);
  const Tensor z = ad::fully_connected(ad::global_avg_pool(x), d.fc_weight, d.fc_bias);
  return ad::reshape(z, {s.dim(0)});
}

Tensor discriminator_forward(DiscriminatorParams& d, const Tensor& s, Mode mode) {
  return ad::sigmoid(discriminator_logits(d, s, mode));
}

LossTerms generator_loss(const Tensor& fake_logits, const Tensor& g_out, const Tensor& s_ref, double lambda,
                         bool literal, bool adversarial) {
  if (g_out.shape() != s_ref.shape()) {
    throw ShapeError("generator_loss: output " + ad::shape_string(g_out.shape()) + " vs target " +
                     ad::shape_string(s_ref.shape()));
  }
  const Tensor mse = ad::mse(g_out, s_ref);
  LossTerms out;
  out.mse = mse.item();
  Tensor total = ad::scale(mse, lambda);
  if (adversarial) {
    const Tensor adv = literal ? ad::mean(ad::log_sigmoid(ad::scale(fake_logits, -1.0)))
                               : ad::scale(ad::mean(ad::log_sigmoid(fake_logits)), -1.0);
    out.adversarial = adv.item();
    total = ad::add(adv, total);
  }
  out.total = total;
  return out;
}

Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits, double real_label) {
  const Tensor real_pos = ad::scale(ad::mean(ad::log_sigmoid(real_logits)), -real_label);
  const Tensor real_neg = ad::scale(ad::mean(ad::log_sigmoid(ad::scale(real_logits, -1.0))), -(1.0 - real_label));
  const Tensor fake = ad::scale(ad::mean(ad::log_sigmoid(ad::scale(fake_logits, -1.0))), -1.0);
  return ad::add(ad::add(real_pos, real_neg), fake);
}

}  // namespace amgan
