#include "amgan/gradcheck.hpp"

#include "amgan/errors.hpp"
#include "amgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace amgan::ad {

Tensor weighted_sum(const Tensor& t, const Tensor& weights) { return sum(mul(t, weights)); }

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& opt) {
  GradCheckResult res;
  res.name = name;

  tape().clear();
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.mutable_grad();
    t.zero_grad();
  }
  const Tensor loss = loss_fn();
  backward(loss);
  tape().clear();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  // (input index, entry index) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) entries.emplace_back(k, i);
  }
  const std::size_t quota = opt.max_entries > 0 ? std::min(opt.max_entries, entries.size()) : entries.size();
  if (quota < entries.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(entries.begin(), entries.end(), rng);
  }

  NoGradGuard guard;
  auto evaluate = [&](std::uint64_t* sig) {
    if (!opt.skip_kinks) return loss_fn().item();
    KinkSignature ks;
    const double v = loss_fn().item();
    *sig = ks.value();
    return v;
  };
  std::uint64_t base = 0, sig_up = 0, sig_down = 0;
  evaluate(&base);
  for (const auto& [k, i] : entries) {
    if (res.checked == quota) break;
    auto data = inputs[k].mutable_data();
    const double saved = data[i];
    data[i] = saved + opt.eps;
    const double up = evaluate(&sig_up);
    data[i] = saved - opt.eps;
    const double down = evaluate(&sig_down);
    data[i] = saved;
    if (sig_up != base || sig_down != base) {
      ++res.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double a = analytic[k][i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
    res.max_error = std::max(res.max_error, err);
    ++res.checked;
  }
  // A check that skips most of its entries says little; count it as failed.
  res.passed = res.checked > 0 && res.checked >= res.skipped && res.max_error <= opt.rtol;
  return res;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Entries bounded away from zero so piecewise-linear ops stay off their kink.
Tensor off_kink_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

std::vector<GradCheckResult> run_op_gradchecks(std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, std::function<Tensor()> fn, std::vector<Tensor> in) {
    out.push_back(check_gradients(name, fn, std::move(in), opt));
  };

  {
    auto x = random_tensor({2, 3, 17}, rng);
    auto w = random_tensor({4, 3, 5}, rng);
    auto b = random_tensor({4}, rng);
    auto r = random_tensor({2, 4, 9}, rng);
    run("conv1d", [=] { return weighted_sum(conv1d(x, w, b, 2, 2), r); }, {x, w, b});
  }
  {
    auto x = random_tensor({2, 3, 8}, rng);
    auto w = random_tensor({3, 2, 6}, rng);
    auto b = random_tensor({2}, rng);
    auto r = random_tensor({2, 2, 16}, rng);
    run("conv_transpose1d", [=] { return weighted_sum(conv_transpose1d(x, w, b, 2, 2), r); }, {x, w, b});
  }
  {
    auto x = random_tensor({3, 2, 7}, rng);
    auto g = random_tensor({2}, rng, 0.5, 1.5);
    auto be = random_tensor({2}, rng);
    auto rm = Tensor::zeros({2});
    auto rv = Tensor::full({2}, 1.0);
    auto r = random_tensor({3, 2, 7}, rng);
    run("batch_norm_train", [=]() mutable { return weighted_sum(batch_norm(x, g, be, rm, rv, Mode::Train), r); },
        {x, g, be});
    auto rm2 = random_tensor({2}, rng);
    auto rv2 = random_tensor({2}, rng, 0.5, 2.0);
    run("batch_norm_eval", [=]() mutable { return weighted_sum(batch_norm(x, g, be, rm2, rv2, Mode::Eval), r); },
        {x, g, be});
  }
  {
    auto x = off_kink_tensor({4, 6}, rng);
    auto r = random_tensor({4, 6}, rng);
    run("leaky_relu", [=] { return weighted_sum(leaky_relu(x, 0.2), r); }, {x});
    auto y = off_kink_tensor({4, 6}, rng);
    run("relu", [=] { return weighted_sum(relu(y), r); }, {y});
  }
  {
    auto x = random_tensor({3, 5}, rng, -4.0, 4.0);
    auto r = random_tensor({3, 5}, rng);
    run("sigmoid", [=] { return weighted_sum(sigmoid(x), r); }, {x});
    run("log_sigmoid", [=] { return weighted_sum(log_sigmoid(x), r); }, {x});
  }
  {
    auto a = random_tensor({5, 7}, rng);
    auto b = random_tensor({7, 3}, rng);
    auto r = random_tensor({5, 3}, rng);
    run("matmul", [=] { return weighted_sum(matmul(a, b), r); }, {a, b});
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 4, 5}, rng);
    auto r = random_tensor({2, 3, 5}, rng);
    run("bmm", [=] { return weighted_sum(bmm(a, b), r); }, {a, b});
    auto rt = random_tensor({2, 4, 3}, rng);
    run("transpose12", [=] { return weighted_sum(transpose12(a), rt); }, {a});
    auto rr = random_tensor({6, 4}, rng);
    run("reshape", [=] { return weighted_sum(reshape(a, {6, 4}), rr); }, {a});
  }
  {
    auto x = random_tensor({2, 5, 3}, rng, -2.0, 2.0);
    auto r = random_tensor({2, 5, 3}, rng);
    run("softmax_axis1", [=] { return weighted_sum(softmax(x, 1), r); }, {x});
    run("softmax_axis2", [=] { return weighted_sum(softmax(x, 2), r); }, {x});
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 2, 4}, rng);
    auto r = random_tensor({2, 5, 4}, rng);
    run("concat", [=] { return weighted_sum(concat({a, b}, 1), r); }, {a, b});
  }
  {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    auto r = random_tensor({3, 4}, rng);
    run("add", [=] { return weighted_sum(add(a, b), r); }, {a, b});
    run("sub", [=] { return weighted_sum(sub(a, b), r); }, {a, b});
    run("mul", [=] { return weighted_sum(mul(a, b), r); }, {a, b});
    run("scale", [=] { return weighted_sum(scale(add_scalar(a, 0.3), -1.7), r); }, {a});
    run("mean", [=] { return mean(mul(a, r)); }, {a});
    run("mse", [=] { return mse(a, b); }, {a, b});
  }
  {
    auto x = random_tensor({2, 3, 6}, rng);
    auto r = random_tensor({2, 3}, rng);
    run("global_avg_pool", [=] { return weighted_sum(global_avg_pool(x), r); }, {x});
  }
  {
    auto x = random_tensor({3, 5}, rng);
    auto w = random_tensor({2, 5}, rng);
    auto b = random_tensor({2}, rng);
    auto r = random_tensor({3, 2}, rng);
    run("fully_connected", [=] { return weighted_sum(fully_connected(x, w, b), r); }, {x, w, b});
  }
  return out;
}

}  // namespace amgan::ad
