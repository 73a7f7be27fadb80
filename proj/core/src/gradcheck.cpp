#include "mi2a/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mi2a/losses.hpp"
#include "mi2a/ops.hpp"
#include "mi2a/random.hpp"

namespace mi2a {

GradCheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs, const ScalarFn& fn,
                                double h, double floor) {
  GradCheckResult result;
  result.name = name;

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    Var out = fn(g, vars);
    g.backward(out);
    for (const Var& v : vars) {
      analytic.push_back(g.grad(v).empty() ? Tensor::zeros(v.shape()) : g.grad(v));
    }
  }

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& t : xs) vars.push_back(g.variable(t));
    return fn(g, vars).value()[0];
  };

  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const double saved = probe[i][k];
      probe[i][k] = saved + h;
      const double up = evaluate(probe);
      probe[i][k] = saved - h;
      const double down = evaluate(probe);
      probe[i][k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.entries_checked;
    }
  }
  return result;
}

namespace {

// Contracts an arbitrary output against fixed random weights so every output entry
// contributes a distinct amount to the scalar.
Var contract(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = uniform_tensor(y.shape(), 0.5, 1.5, rng);
  return ops::sum(ops::mul(y, y.graph()->constant(std::move(w))));
}

// Values bounded away from zero so ReLU and max-pool stay off their kinks under +-h.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  Tensor t = uniform_tensor(shape, 0.1, 1.0, rng);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) {
    if (sign(rng)) v = -v;
  }
  return t;
}

// Distinct values with gaps much larger than h, so max-pool arg-max is stable.
Tensor distinct_values(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::vector<double> levels(t.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.01 * static_cast<double>(i) - 0.3;
  std::shuffle(levels.begin(), levels.end(), rng);
  std::copy(levels.begin(), levels.end(), t.data().begin());
  return t;
}

}  // namespace

std::vector<GradCheckResult> run_op_gradchecks(const std::string& filter, std::uint64_t seed) {
  Rng rng(seed);
  auto rnd = [&rng](const Shape& s) { return uniform_tensor(s, -1.0, 1.0, rng); };
  std::vector<GradCheckResult> results;
  auto run = [&](const std::string& name, std::vector<Tensor> inputs, const ScalarFn& fn) {
    if (!filter.empty() && filter != "all" && name.find(filter) == std::string::npos) return;
    results.push_back(check_gradients(name, inputs, fn));
  };
  const std::uint64_t cseed = seed + 1;

  run("add", {rnd({2, 3}), rnd({2, 3})}, [=](Graph&, std::span<const Var> v) { return contract(ops::add(v[0], v[1]), cseed); });
  run("sub", {rnd({2, 3}), rnd({2, 3})}, [=](Graph&, std::span<const Var> v) { return contract(ops::sub(v[0], v[1]), cseed); });
  run("mul", {rnd({2, 3}), rnd({2, 3})}, [=](Graph&, std::span<const Var> v) { return contract(ops::mul(v[0], v[1]), cseed); });
  run("scale", {rnd({4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::scale(v[0], -2.5), cseed); });
  run("add_scalar", {rnd({4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::add_scalar(v[0], 0.3), cseed); });
  run("square", {rnd({5})}, [=](Graph&, std::span<const Var> v) { return contract(ops::square(v[0]), cseed); });
  run("relu", {away_from_zero({3, 4}, rng)}, [=](Graph&, std::span<const Var> v) { return contract(ops::relu(v[0]), cseed); });
  run("sigmoid", {rnd({3, 4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::sigmoid(v[0]), cseed); });
  run("tanh", {rnd({3, 4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::tanh(v[0]), cseed); });
  run("sum", {rnd({2, 2})}, [](Graph&, std::span<const Var> v) { return ops::sum(ops::square(v[0])); });
  run("mean", {rnd({2, 3})}, [](Graph&, std::span<const Var> v) { return ops::mean(ops::square(v[0])); });
  run("mse", {rnd({3, 4}), rnd({3, 4})}, [](Graph&, std::span<const Var> v) { return ops::mse(v[0], v[1]); });
  run("reshape", {rnd({2, 6})}, [=](Graph&, std::span<const Var> v) { return contract(ops::reshape(v[0], {3, 4}), cseed); });
  run("concat_last", {rnd({2, 3}), rnd({2, 2})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::concat_last(v[0], v[1]), cseed); });
  run("crop", {rnd({2, 5, 4})}, [=](Graph&, std::span<const Var> v) {
    return contract(ops::crop(v[0], {1, 1, 0}, {1, 3, 4}), cseed);
  });
  run("slice_last", {rnd({2, 5})}, [=](Graph&, std::span<const Var> v) { return contract(ops::slice_last(v[0], 1, 3), cseed); });
  run("select_time", {rnd({2, 3, 2})}, [=](Graph&, std::span<const Var> v) { return contract(ops::select_time(v[0], 1), cseed); });
  run("stack_time", {rnd({2, 3}), rnd({2, 3})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::stack_time({v[0], v[1], v[0]}), cseed); });
  run("repeat_time", {rnd({2, 3})}, [=](Graph&, std::span<const Var> v) { return contract(ops::repeat_time(v[0], 4), cseed); });
  run("dense", {rnd({3, 4}), rnd({4, 2}), rnd({2})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::dense(v[0], v[1], v[2]), cseed); });
  run("matmul", {rnd({3, 4}), rnd({4, 2})}, [=](Graph&, std::span<const Var> v) { return contract(ops::matmul(v[0], v[1]), cseed); });
  run("batched_matmul", {rnd({2, 3, 4}), rnd({2, 4, 2})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::batched_matmul(v[0], v[1]), cseed); });
  run("batched_matmul_nt", {rnd({2, 3, 4}), rnd({2, 5, 4})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::batched_matmul(v[0], v[1], true), cseed); });
  run("softmax", {rnd({2, 3, 4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::softmax(v[0], 2), cseed); });
  run("softmax_axis1", {rnd({2, 3, 4})}, [=](Graph&, std::span<const Var> v) { return contract(ops::softmax(v[0], 1), cseed); });
  run("conv1d", {rnd({2, 7, 3}), rnd({5, 3, 4}), rnd({4})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::conv1d(v[0], v[1], v[2], 2), cseed); });
  run("conv1d_valid", {rnd({2, 7, 2}), rnd({3, 2, 3}), rnd({3})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::conv1d(v[0], v[1], v[2], 1, ops::Padding::Valid), cseed); });
  run("conv2d", {rnd({1, 5, 6, 2}), rnd({3, 3, 2, 3}), rnd({3})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::conv2d(v[0], v[1], v[2], 2), cseed); });
  run("conv1d_transpose", {rnd({2, 4, 3}), rnd({5, 2, 3}), rnd({2})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::conv1d_transpose(v[0], v[1], v[2], 2), cseed); });
  run("conv2d_transpose", {rnd({1, 3, 2, 2}), rnd({3, 3, 2, 2}), rnd({2})},
      [=](Graph&, std::span<const Var> v) { return contract(ops::conv2d_transpose(v[0], v[1], v[2], 2), cseed); });
  run("maxpool1d", {distinct_values({2, 7, 2}, rng)},
      [=](Graph&, std::span<const Var> v) { return contract(ops::maxpool1d(v[0], 2), cseed); });
  run("maxpool2d", {distinct_values({1, 5, 4, 2}, rng)},
      [=](Graph&, std::span<const Var> v) { return contract(ops::maxpool2d(v[0], 2), cseed); });
  run("upsample1d", {rnd({2, 3, 2})}, [=](Graph&, std::span<const Var> v) { return contract(ops::upsample1d(v[0], 2), cseed); });
  run("upsample2d", {rnd({1, 2, 3, 2})}, [=](Graph&, std::span<const Var> v) { return contract(ops::upsample2d(v[0], 2), cseed); });
  run("lstm_step", {rnd({2, 3}), rnd({2, 4}), rnd({2, 4}), rnd({7, 16}), rnd({16})}, [=](Graph&, std::span<const Var> v) {
    auto [h, c] = ops::lstm_step(v[0], v[1], v[2], {v[3], v[4]});
    return ops::add(contract(h, cseed), contract(c, cseed + 1));
  });
  run("evolver_loss", {uniform_tensor({2, 3, 8}, 0.0, 1.0, rng), uniform_tensor({2, 3, 8}, 0.0, 1.0, rng)},
      [](Graph&, std::span<const Var> v) { return losses::evolver_loss(v[0], v[1], 0.7).total; });
  return results;
}

}  // namespace mi2a
