#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mi2a/adam.hpp"
#include "mi2a/errors.hpp"
#include "mi2a/ops.hpp"

using namespace mi2a;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore store;
  store.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  AdamState state = AdamState::for_parameters(store);
  store.zero_grad();
  adam_update(store, state);
  EXPECT_EQ(store.get("w").value, Tensor({3}, {1.0, -2.0, 0.5}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  ParameterStore store;
  store.add("w", Tensor({1}, {0.0}));
  AdamState state = AdamState::for_parameters(store, {.learning_rate = 1e-3});
  store.get("w").grad = Tensor({1}, {2.5});
  adam_update(store, state);
  EXPECT_NEAR(store.get("w").value[0], -1e-3 * 2.5 / (2.5 + 1e-8), 1e-15);
}

TEST(Adam, StepCountIncrementsByOne) {
  ParameterStore store;
  store.add("w", Tensor({1}, {1.0}));
  AdamState state = AdamState::for_parameters(store);
  for (int i = 1; i <= 5; ++i) {
    store.get("w").grad = Tensor({1}, {1.0});
    adam_update(store, state);
    EXPECT_EQ(state.step, static_cast<std::uint64_t>(i));
  }
}

TEST(Adam, DescendsQuadratic) {
  ParameterStore store;
  Parameter& w = store.add("w", Tensor({1}, {1.0}));
  AdamState state = AdamState::for_parameters(store, {.learning_rate = 0.05});
  for (int i = 0; i < 200; ++i) {
    store.zero_grad();
    Graph g;
    g.backward(ops::sum(ops::square(g.parameter(w))));
    adam_update(store, state);
  }
  EXPECT_LT(std::abs(w.value[0]), 0.1);
}

TEST(Adam, RejectsNonFiniteGradientWithoutSideEffects) {
  ParameterStore store;
  store.add("ok", Tensor({1}, {1.0}));
  store.add("bad", Tensor({2}, {1.0, 1.0}));
  AdamState state = AdamState::for_parameters(store);
  store.get("ok").grad = Tensor({1}, {1.0});
  store.get("bad").grad = Tensor({2}, {0.0, std::numeric_limits<double>::infinity()});
  try {
    adam_update(store, state);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_EQ(store.get("ok").value[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}
