#include <cmath>

#include "doctest.h"

#include "capfuse/adam.hpp"
#include "capfuse/gradcheck.hpp"
#include "capfuse/ops.hpp"

#include "oracles.hpp"

using namespace capfuse;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::leaf({2, 3}, {1.0f, 2.0f}), ShapeError);
  CHECK_THROWS_AS(Tensor::leaf({0}, {}), ShapeError);
  const Tensor t = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  CHECK(t.is_leaf());
  CHECK(t.tape_id() == -1);
  CHECK(t.numel() == 4);

  Tape tape;
  const Tensor y = add(tape, t, t);
  CHECK_FALSE(y.is_leaf());
  CHECK(y.tape_id() == 0);
}

TEST_CASE("matmul identity case") {
  Tape tape;
  const Tensor eye = Tensor::leaf({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x = Tensor::leaf({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const Tensor y = matmul(tape, eye, x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("matmul shape error names op and shapes") {
  Tape tape;
  const Tensor a = Tensor::leaf({2, 3}, std::vector<float>(6, 1.0f));
  const Tensor b = Tensor::leaf({2, 3}, std::vector<float>(6, 1.0f));
  try {
    matmul(tape, a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2, 3)") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry and normalization") {
  Tape tape;
  const Tensor x = Tensor::leaf({3}, {0, 0, 0});
  const Tensor y = softmax(tape, x, 0);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3.0));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> v(12);
    for (float& f : v) f = static_cast<float>(rng.uniform(-4.0, 4.0));
    Tape t2;
    const Tensor m = Tensor::leaf({3, 4}, v);
    const Tensor s = softmax(t2, m, 1);
    for (int r = 0; r < 3; ++r) {
      double row = 0.0;
      for (int c = 0; c < 4; ++c) {
        const float p = s.at(static_cast<std::size_t>(r) * 4 + c);
        CHECK(p >= 0.0f);
        row += p;
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("tanh backward at zero") {
  Tape tape;
  Tensor x = Tensor::leaf({1}, {0.0f}, true);
  const Tensor y = sum_all(tape, tanh(tape, x));
  tape.backward(y);
  CHECK(x.grad_at(0) == doctest::Approx(1.0));
}

TEST_CASE("backward on w*w") {
  Tape tape;
  Tensor w = Tensor::leaf({2}, {1.0f, 2.0f}, true);
  const Tensor loss = sum_all(tape, mul(tape, w, w));
  tape.backward(loss);
  CHECK(w.grad_at(0) == doctest::Approx(2.0));
  CHECK(w.grad_at(1) == doctest::Approx(4.0));
}

TEST_CASE("backward leaves unused leaf at zero") {
  Tape tape;
  Tensor w = Tensor::leaf({3}, {1.0f, 1.0f, 1.0f}, true);
  Tensor c = Tensor::leaf({1}, {5.0f}, true);
  const Tensor loss = sum_all(tape, c);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(w.grad_at(static_cast<std::size_t>(i)) == 0.0f);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Tensor w = Tensor::leaf({2}, {1.0f, 2.0f}, true);
  const Tensor y = mul(tape, w, w);
  CHECK_THROWS_AS(tape.backward(y), NumericError);
}

TEST_CASE("double backward accumulates exactly twice") {
  Tape tape;
  Tensor w = Tensor::leaf({3}, {0.5f, -1.0f, 2.0f}, true);
  const Tensor loss = mean_all(tape, mul(tape, tanh(tape, w), w));
  tape.backward(loss);
  std::vector<float> once(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(w.grad_at(i) == doctest::Approx(2.0f * once[i]).epsilon(1e-6));
  }
}

TEST_CASE("random 5-op graph matches finite differences") {
  const GradCheckCase c{
      "random_5op",
      {{3, 4}, {4, 2}, {2}},
      nullptr,
      [](Tape& t, std::span<Tensor> l) {
        Tensor h = tanh(t, matmul(t, l[0], l[1]));      // (3,2)
        Tensor z = add(t, h, l[2]);                      // broadcast add
        Tensor s = softmax(t, z, 1);
        return mean_all(t, s);
      }};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CHECK(grad_check(c, seed) < 1e-3);
  }
}

TEST_CASE("deterministic forward given identical bytes") {
  const auto run = [] {
    Rng rng(99);
    std::vector<float> v(20);
    for (float& f : v) f = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tape tape;
    Tensor x = Tensor::leaf({4, 5}, v, true);
    Tensor y = softmax(tape, mul(tape, x, tanh(tape, x)), 1);
    Tensor z = matmul(tape, y, mean(tape, x, 0));  // (4,5) x (5) -> (4)
    const Tensor loss = mean_all(tape, z);
    tape.backward(loss);
    std::vector<float> out(y.values().begin(), y.values().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);  // bitwise
}

TEST_CASE("adam zero gradient leaves params unchanged") {
  ParamStore params;
  Tensor& w = params.add("w", Tensor::leaf({3}, {1.0f, 2.0f, 3.0f}, true));
  w.grad_acc();  // zeros
  AdamState st;
  st.lr = 0.1;
  adam_step(params, st);
  CHECK(st.t == 1);
  CHECK(w.at(0) == 1.0f);
  CHECK(w.at(1) == 2.0f);
  CHECK(w.at(2) == 3.0f);
}

TEST_CASE("adam first step closed form") {
  ParamStore params;
  Tensor& w = params.add("w", Tensor::leaf({1}, {0.7f}, true));
  w.grad_acc()[0] = 0.3f;
  AdamState st;
  st.lr = 0.01;
  adam_step(params, st);
  const double expected = 0.7 - 0.01 * 0.3 / (std::abs(0.3) + 1e-8);
  CHECK(w.at(0) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("adam two steps match 64-bit oracle") {
  ParamStore params;
  Tensor& w = params.add("w", Tensor::leaf({4}, {0.1f, -0.5f, 1.2f, 3.0f}, true));
  AdamState st;
  st.lr = 0.05;

  oracles::Vec ow = {0.1f, -0.5f, 1.2f, 3.0f};
  const oracles::Vec og = {0.9, -0.2, 0.01, 1.5};
  oracles::AdamOracleState ost;

  for (int step = 0; step < 2; ++step) {
    auto g = w.grad_acc();
    for (std::size_t i = 0; i < og.size(); ++i) g[i] = static_cast<float>(og[i]);
    adam_step(params, st);
    w.zero_grad();
    oracles::adam_step(ow, og, ost, 0.05);
  }
  for (std::size_t i = 0; i < ow.size(); ++i) {
    CHECK(std::abs(w.at(i) - ow[i]) < 1e-6);
  }
}

TEST_CASE("adam flags non-finite gradients with the parameter path") {
  ParamStore params;
  Tensor& w = params.add("layer.W", Tensor::leaf({2}, {1.0f, 1.0f}, true));
  w.grad_acc()[1] = std::numeric_limits<float>::infinity();
  AdamState st;
  try {
    adam_step(params, st);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.W") != std::string::npos);
  }
}

TEST_CASE("global gradient clipping") {
  ParamStore params;
  Tensor& w = params.add("w", Tensor::leaf({2}, {0.0f, 0.0f}, true));
  auto g = w.grad_acc();
  g[0] = 30.0f;
  g[1] = 40.0f;
  const double norm = clip_global_grad_norm(params, 5.0);
  CHECK(norm == doctest::Approx(50.0));
  CHECK(w.grad_at(0) == doctest::Approx(3.0));
  CHECK(w.grad_at(1) == doctest::Approx(4.0));
}

TEST_CASE("tape records in topological order") {
  Tape tape;
  Tensor x = Tensor::leaf({3}, {0.1f, 0.2f, 0.3f}, true);
  Tensor a = tanh(tape, x);
  Tensor b = mul(tape, a, x);
  Tensor c = sum_all(tape, b);
  CHECK(tape.num_ops() == 3);
  CHECK(a.tape_id() == 0);
  CHECK(b.tape_id() == 1);
  CHECK(c.tape_id() == 2);
  CHECK(std::string(tape.op_name(0)) == "tanh");
  CHECK(std::string(tape.op_name(2)) == "sum_all");
  CHECK(x.tape_id() == -1);  // leaves never join the tape
}

TEST_CASE("grad_check flags non-finite losses") {
  const GradCheckCase c{
      "log_of_negative",
      {{3}},
      [](int, std::span<float> v) {
        for (float& x : v) x = -1.0f - std::abs(x);  // log() domain violation
      },
      [](Tape& t, std::span<Tensor> l) { return mean_all(t, log(t, l[0])); }};
  CHECK_THROWS_AS(grad_check(c, 1), NumericError);
}

TEST_CASE("gradcheck suite ops pass at 1e-3") {
  // Fast sanity slice: run every case once. The acceptance suite runs the
  // required 10 seeds per case.
  const auto reports = gradcheck_suite(/*seeds_per_case=*/1);
  for (const auto& r : reports) {
    INFO(r.name, " seed ", r.seed, " err ", r.max_rel_err);
    CHECK(r.pass);
  }
}
