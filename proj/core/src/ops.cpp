#include "capfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace capfuse {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                   " and " + shape_to_string(b.shape()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail + ", got shape " +
                   shape_to_string(a.shape()));
}

bool is_vec(const Tensor& t) { return t.rank() == 1; }
bool is_mat(const Tensor& t) { return t.rank() == 2; }
bool is_scalar1(const Tensor& t) { return t.rank() == 1 && t.dim(0) == 1; }

// Generic unary elementwise op. `f` maps value -> value, `df` maps
// (input value, output value) -> local derivative.
template <typename F, typename DF>
Tensor unary_op(Tape& tape, const char* name, const Tensor& a, F f, DF df) {
  std::vector<float> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(f(av[i]));
  Tensor y = Tensor::interior(a.shape(), std::move(out), a.needs_grad());
  tape.record(name, {a}, y, [a, y, df]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const auto g = y.grad();
    const auto av = a.values();
    const auto yv = y.values();
    for (std::size_t i = 0; i < ag.size(); ++i) {
      ag[i] += g[i] * static_cast<float>(df(av[i], yv[i]));
    }
  });
  return y;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  // Normalize the three accepted forms onto a (R,K)x(K,C) kernel.
  int R = 0, K = 0, C = 0;
  Shape out_shape;
  if (is_mat(a) && is_mat(b)) {
    if (a.dim(1) != b.dim(0)) shape_fail("matmul", a, b);
    R = a.dim(0), K = a.dim(1), C = b.dim(1);
    out_shape = {R, C};
  } else if (is_vec(a) && is_mat(b)) {
    if (a.dim(0) != b.dim(0)) shape_fail("matmul", a, b);
    R = 1, K = a.dim(0), C = b.dim(1);
    out_shape = {C};
  } else if (is_mat(a) && is_vec(b)) {
    if (a.dim(1) != b.dim(0)) shape_fail("matmul", a, b);
    R = a.dim(0), K = a.dim(1), C = 1;
    out_shape = {R};
  } else {
    shape_fail("matmul", a, b);
  }

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<float> out(static_cast<std::size_t>(R) * C);
  {
    std::vector<double> acc(static_cast<std::size_t>(C));
    for (int r = 0; r < R; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = 0; k < K; ++k) {
        const double arow = av[static_cast<std::size_t>(r) * K + k];
        const float* brow = bv.data() + static_cast<std::size_t>(k) * C;
        for (int c = 0; c < C; ++c) acc[c] += arow * brow[c];
      }
      for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(r) * C + c] = static_cast<float>(acc[c]);
    }
  }

  Tensor y = Tensor::interior(std::move(out_shape), std::move(out), a.needs_grad() || b.needs_grad());
  tape.record("matmul", {a, b}, y, [a, b, y, R, K, C]() mutable {
    const auto g = y.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.needs_grad()) {
      // dA[r,k] = sum_c g[r,c] * B[k,c]
      auto ag = a.grad_acc();
      for (int r = 0; r < R; ++r) {
        for (int k = 0; k < K; ++k) {
          double acc = 0.0;
          const float* grow = g.data() + static_cast<std::size_t>(r) * C;
          const float* brow = bv.data() + static_cast<std::size_t>(k) * C;
          for (int c = 0; c < C; ++c) acc += static_cast<double>(grow[c]) * brow[c];
          ag[static_cast<std::size_t>(r) * K + k] += static_cast<float>(acc);
        }
      }
    }
    if (b.needs_grad()) {
      // dB[k,c] = sum_r A[r,k] * g[r,c]
      auto bg = b.grad_acc();
      std::vector<double> acc(static_cast<std::size_t>(K) * C, 0.0);
      for (int r = 0; r < R; ++r) {
        const float* grow = g.data() + static_cast<std::size_t>(r) * C;
        for (int k = 0; k < K; ++k) {
          const double arow = av[static_cast<std::size_t>(r) * K + k];
          double* accrow = acc.data() + static_cast<std::size_t>(k) * C;
          for (int c = 0; c < C; ++c) accrow[c] += arow * grow[c];
        }
      }
      for (std::size_t i = 0; i < acc.size(); ++i) bg[i] += static_cast<float>(acc[i]);
    }
  });
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool row_bcast = is_mat(a) && is_vec(b) && a.dim(1) == b.dim(0);
  if (!same && !row_bcast) shape_fail("add", a, b);

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<float> out(a.numel());
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    const int R = a.dim(0), C = a.dim(1);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c)
        out[static_cast<std::size_t>(r) * C + c] = av[static_cast<std::size_t>(r) * C + c] + bv[c];
  }

  Tensor y = Tensor::interior(a.shape(), std::move(out), a.needs_grad() || b.needs_grad());
  tape.record("add", {a, b}, y, [a, b, y, same]() mutable {
    const auto g = y.grad();
    if (a.needs_grad()) {
      auto ag = a.grad_acc();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i];
    }
    if (b.needs_grad()) {
      auto bg = b.grad_acc();
      if (same) {
        for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i];
      } else {
        const int R = a.dim(0), C = a.dim(1);
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int r = 0; r < R; ++r) acc += g[static_cast<std::size_t>(r) * C + c];
          bg[c] += static_cast<float>(acc);
        }
      }
    }
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  enum class Mode { Same, RowBcast, ScalarRight, ScalarLeft };
  Mode mode;
  if (a.shape() == b.shape()) {
    mode = Mode::Same;
  } else if (is_scalar1(b)) {
    mode = Mode::ScalarRight;
  } else if (is_scalar1(a)) {
    mode = Mode::ScalarLeft;
  } else if (is_mat(a) && is_vec(b) && a.dim(1) == b.dim(0)) {
    mode = Mode::RowBcast;
  } else {
    shape_fail("mul", a, b);
  }

  const Tensor& big = (mode == Mode::ScalarLeft) ? b : a;
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<float> out(big.numel());
  switch (mode) {
    case Mode::Same:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
    case Mode::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[0];
      break;
    case Mode::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] * bv[i];
      break;
    case Mode::RowBcast: {
      const int R = a.dim(0), C = a.dim(1);
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
          out[static_cast<std::size_t>(r) * C + c] =
              av[static_cast<std::size_t>(r) * C + c] * bv[c];
      break;
    }
  }

  Tensor y = Tensor::interior(big.shape(), std::move(out), a.needs_grad() || b.needs_grad());
  tape.record("mul", {a, b}, y, [a, b, y, mode]() mutable {
    const auto g = y.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.needs_grad()) {
      auto ag = a.grad_acc();
      switch (mode) {
        case Mode::Same:
          for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * bv[i];
          break;
        case Mode::ScalarRight:
          for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * bv[0];
          break;
        case Mode::ScalarLeft: {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * bv[i];
          ag[0] += static_cast<float>(acc);
          break;
        }
        case Mode::RowBcast: {
          const int R = a.dim(0), C = a.dim(1);
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
              ag[static_cast<std::size_t>(r) * C + c] +=
                  g[static_cast<std::size_t>(r) * C + c] * bv[c];
          break;
        }
      }
    }
    if (b.needs_grad()) {
      auto bg = b.grad_acc();
      switch (mode) {
        case Mode::Same:
          for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * av[i];
          break;
        case Mode::ScalarLeft:
          for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * av[0];
          break;
        case Mode::ScalarRight: {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * av[i];
          bg[0] += static_cast<float>(acc);
          break;
        }
        case Mode::RowBcast: {
          const int R = a.dim(0), C = a.dim(1);
          for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int r = 0; r < R; ++r)
              acc += static_cast<double>(g[static_cast<std::size_t>(r) * C + c]) *
                     av[static_cast<std::size_t>(r) * C + c];
            bg[c] += static_cast<float>(acc);
          }
          break;
        }
      }
    }
  });
  return y;
}

Tensor scalar_mul(Tape& tape, const Tensor& a, float s) {
  return unary_op(
      tape, "scalar_mul", a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape& tape, const Tensor& a) {
  for (const float x : a.values()) tape.note_kink_margin(std::abs(static_cast<double>(x)));
  return unary_op(
      tape, "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor elu(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, "elu", a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor log(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp(Tape& tape, const Tensor& a, float lo, float hi) {
  for (const float x : a.values()) {
    tape.note_kink_margin(std::min(std::abs(static_cast<double>(x) - lo),
                                   std::abs(static_cast<double>(x) - hi)));
  }
  return unary_op(
      tape, "clamp", a,
      [lo, hi](double x) { return std::min(static_cast<double>(hi), std::max(static_cast<double>(lo), x)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

namespace {

// Shared slice-walker for axis ops on rank-1/rank-2 tensors: calls fn(base,
// stride, count) for every 1-D slice along `axis`.
template <typename Fn>
void for_each_axis_slice(const Tensor& t, int axis, const char* op, Fn fn) {
  if (is_vec(t)) {
    if (axis != 0) shape_fail(op, t, "axis " + std::to_string(axis) + " invalid for rank-1");
    fn(0, 1, t.dim(0));
  } else if (is_mat(t)) {
    const int R = t.dim(0), C = t.dim(1);
    if (axis == 0) {
      for (int c = 0; c < C; ++c) fn(c, C, R);
    } else if (axis == 1) {
      for (int r = 0; r < R; ++r) fn(static_cast<std::size_t>(r) * C, 1, C);
    } else {
      shape_fail(op, t, "axis " + std::to_string(axis) + " invalid for rank-2");
    }
  } else {
    shape_fail(op, t, "expected rank 1 or 2");
  }
}

}  // namespace

Tensor softmax(Tape& tape, const Tensor& a, int axis) {
  const auto av = a.values();
  std::vector<float> out(a.numel());
  for_each_axis_slice(a, axis, "softmax", [&](std::size_t base, std::size_t stride, int count) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) mx = std::max(mx, static_cast<double>(av[base + i * stride]));
    double z = 0.0;
    for (int i = 0; i < count; ++i) z += std::exp(static_cast<double>(av[base + i * stride]) - mx);
    for (int i = 0; i < count; ++i) {
      out[base + i * stride] =
          static_cast<float>(std::exp(static_cast<double>(av[base + i * stride]) - mx) / z);
    }
  });
  Tensor y = Tensor::interior(a.shape(), std::move(out), a.needs_grad());
  tape.record("softmax", {a}, y, [a, y, axis]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const auto g = y.grad();
    const auto yv = y.values();
    for_each_axis_slice(a, axis, "softmax", [&](std::size_t base, std::size_t stride, int count) {
      double dot = 0.0;
      for (int i = 0; i < count; ++i)
        dot += static_cast<double>(g[base + i * stride]) * yv[base + i * stride];
      for (int i = 0; i < count; ++i) {
        const std::size_t k = base + i * stride;
        ag[k] += static_cast<float>(yv[k] * (static_cast<double>(g[k]) - dot));
      }
    });
  });
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& a, int axis) {
  const auto av = a.values();
  std::vector<float> out(a.numel());
  for_each_axis_slice(a, axis, "log_softmax", [&](std::size_t base, std::size_t stride, int count) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) mx = std::max(mx, static_cast<double>(av[base + i * stride]));
    double z = 0.0;
    for (int i = 0; i < count; ++i) z += std::exp(static_cast<double>(av[base + i * stride]) - mx);
    const double lz = std::log(z) + mx;
    for (int i = 0; i < count; ++i) {
      out[base + i * stride] = static_cast<float>(static_cast<double>(av[base + i * stride]) - lz);
    }
  });
  Tensor y = Tensor::interior(a.shape(), std::move(out), a.needs_grad());
  tape.record("log_softmax", {a}, y, [a, y, axis]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const auto g = y.grad();
    const auto yv = y.values();
    for_each_axis_slice(a, axis, "log_softmax", [&](std::size_t base, std::size_t stride, int count) {
      double gsum = 0.0;
      for (int i = 0; i < count; ++i) gsum += g[base + i * stride];
      for (int i = 0; i < count; ++i) {
        const std::size_t k = base + i * stride;
        ag[k] += static_cast<float>(g[k] - std::exp(static_cast<double>(yv[k])) * gsum);
      }
    });
  });
  return y;
}

namespace {

Tensor reduce_axis(Tape& tape, const Tensor& a, int axis, bool take_mean, const char* name) {
  const auto av = a.values();
  Shape out_shape;
  std::vector<float> out;
  if (is_vec(a)) {
    if (axis != 0) shape_fail(name, a, "axis " + std::to_string(axis) + " invalid for rank-1");
    double acc = 0.0;
    for (const float x : av) acc += x;
    if (take_mean) acc /= a.dim(0);
    out_shape = {1};
    out = {static_cast<float>(acc)};
  } else if (is_mat(a)) {
    const int R = a.dim(0), C = a.dim(1);
    if (axis == 0) {
      out_shape = {C};
      out.resize(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int r = 0; r < R; ++r) acc += av[static_cast<std::size_t>(r) * C + c];
        out[c] = static_cast<float>(take_mean ? acc / R : acc);
      }
    } else if (axis == 1) {
      out_shape = {R};
      out.resize(static_cast<std::size_t>(R));
      for (int r = 0; r < R; ++r) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += av[static_cast<std::size_t>(r) * C + c];
        out[r] = static_cast<float>(take_mean ? acc / C : acc);
      }
    } else {
      shape_fail(name, a, "axis " + std::to_string(axis) + " invalid for rank-2");
    }
  } else {
    shape_fail(name, a, "expected rank 1 or 2");
  }

  const int extent = is_vec(a) ? a.dim(0) : a.dim(axis);
  const float w = take_mean ? 1.0f / static_cast<float>(extent) : 1.0f;
  Tensor y = Tensor::interior(std::move(out_shape), std::move(out), a.needs_grad());
  tape.record(name, {a}, y, [a, y, axis, w]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const auto g = y.grad();
    if (is_vec(a)) {
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[0] * w;
    } else {
      const int R = a.dim(0), C = a.dim(1);
      if (axis == 0) {
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c) ag[static_cast<std::size_t>(r) * C + c] += g[c] * w;
      } else {
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < C; ++c) ag[static_cast<std::size_t>(r) * C + c] += g[r] * w;
      }
    }
  });
  return y;
}

}  // namespace

Tensor sum(Tape& tape, const Tensor& a, int axis) { return reduce_axis(tape, a, axis, false, "sum"); }
Tensor mean(Tape& tape, const Tensor& a, int axis) { return reduce_axis(tape, a, axis, true, "mean"); }

Tensor sum_all(Tape& tape, const Tensor& a) {
  const auto av = a.values();
  double acc = 0.0;
  for (const float x : av) acc += x;
  Tensor y = Tensor::interior({1}, {static_cast<float>(acc)}, a.needs_grad());
  tape.record("sum_all", {a}, y, [a, y]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const float g = y.grad()[0];
    for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
  });
  return y;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
  const float inv = 1.0f / static_cast<float>(a.numel());
  return scalar_mul(tape, sum_all(tape, a), inv);
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  for (const Tensor& p : parts) {
    if (p.rank() != rank) shape_fail("concat", parts[0], p);
  }

  Shape out_shape;
  std::vector<float> out;
  if (rank == 1) {
    if (axis != 0) shape_fail("concat", parts[0], "axis " + std::to_string(axis) + " invalid for rank-1");
    std::size_t total = 0;
    for (const Tensor& p : parts) total += p.numel();
    out.reserve(total);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    out_shape = {static_cast<int>(total)};
  } else if (rank == 2 && axis == 0) {
    const int C = parts[0].dim(1);
    int R = 0;
    for (const Tensor& p : parts) {
      if (p.dim(1) != C) shape_fail("concat", parts[0], p);
      R += p.dim(0);
    }
    out.reserve(static_cast<std::size_t>(R) * C);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    out_shape = {R, C};
  } else if (rank == 2 && axis == 1) {
    const int R = parts[0].dim(0);
    int C = 0;
    for (const Tensor& p : parts) {
      if (p.dim(0) != R) shape_fail("concat", parts[0], p);
      C += p.dim(1);
    }
    out.resize(static_cast<std::size_t>(R) * C);
    int col0 = 0;
    for (const Tensor& p : parts) {
      const int pc = p.dim(1);
      const auto pv = p.values();
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < pc; ++c)
          out[static_cast<std::size_t>(r) * C + col0 + c] = pv[static_cast<std::size_t>(r) * pc + c];
      col0 += pc;
    }
    out_shape = {R, C};
  } else {
    shape_fail("concat", parts[0], "unsupported rank/axis");
  }

  bool needs = false;
  for (const Tensor& p : parts) needs = needs || p.needs_grad();
  Tensor y = Tensor::interior(std::move(out_shape), std::move(out), needs);
  std::vector<Tensor> held(parts.begin(), parts.end());
  tape.record("concat", held, y, [held, y, rank, axis]() mutable {
    const auto g = y.grad();
    if (rank == 1 || (rank == 2 && axis == 0)) {
      std::size_t off = 0;
      for (Tensor& p : held) {
        if (p.needs_grad()) {
          auto pg = p.grad_acc();
          for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[off + i];
        }
        off += p.numel();
      }
    } else {
      const int R = y.dim(0), C = y.dim(1);
      int col0 = 0;
      for (Tensor& p : held) {
        const int pc = p.dim(1);
        if (p.needs_grad()) {
          auto pg = p.grad_acc();
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < pc; ++c)
              pg[static_cast<std::size_t>(r) * pc + c] += g[static_cast<std::size_t>(r) * C + col0 + c];
        }
        col0 += pc;
      }
    }
  });
  return y;
}

Tensor slice(Tape& tape, const Tensor& a, int axis, int start, int len) {
  if (len <= 0) throw ShapeError("slice: non-positive length " + std::to_string(len));
  const auto av = a.values();
  Shape out_shape;
  std::vector<float> out;
  if (is_vec(a)) {
    if (axis != 0 || start < 0 || start + len > a.dim(0)) {
      shape_fail("slice", a, "range [" + std::to_string(start) + ", " +
                                 std::to_string(start + len) + ") on axis " + std::to_string(axis));
    }
    out.assign(av.begin() + start, av.begin() + start + len);
    out_shape = {len};
  } else if (is_mat(a)) {
    const int R = a.dim(0), C = a.dim(1);
    if (axis == 0) {
      if (start < 0 || start + len > R) shape_fail("slice", a, "row range out of bounds");
      out.assign(av.begin() + static_cast<std::size_t>(start) * C,
                 av.begin() + static_cast<std::size_t>(start + len) * C);
      out_shape = {len, C};
    } else if (axis == 1) {
      if (start < 0 || start + len > C) shape_fail("slice", a, "column range out of bounds");
      out.resize(static_cast<std::size_t>(R) * len);
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < len; ++c)
          out[static_cast<std::size_t>(r) * len + c] = av[static_cast<std::size_t>(r) * C + start + c];
      out_shape = {R, len};
    } else {
      shape_fail("slice", a, "axis " + std::to_string(axis) + " invalid for rank-2");
    }
  } else {
    shape_fail("slice", a, "expected rank 1 or 2");
  }

  Tensor y = Tensor::interior(std::move(out_shape), std::move(out), a.needs_grad());
  tape.record("slice", {a}, y, [a, y, axis, start, len]() mutable {
    if (!a.needs_grad()) return;
    auto ag = a.grad_acc();
    const auto g = y.grad();
    if (is_vec(a)) {
      for (int i = 0; i < len; ++i) ag[start + i] += g[i];
    } else {
      const int C = a.dim(1);
      if (axis == 0) {
        for (std::size_t i = 0; i < g.size(); ++i) ag[static_cast<std::size_t>(start) * C + i] += g[i];
      } else {
        const int R = a.dim(0);
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < len; ++c)
            ag[static_cast<std::size_t>(r) * C + start + c] += g[static_cast<std::size_t>(r) * len + c];
      }
    }
  });
  return y;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const int C = rows[0].dim(0);
  bool needs = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.dim(0) != C) shape_fail("stack_rows", rows[0], r);
    needs = needs || r.needs_grad();
  }
  std::vector<float> out;
  out.reserve(rows.size() * static_cast<std::size_t>(C));
  for (const Tensor& r : rows) out.insert(out.end(), r.values().begin(), r.values().end());
  Tensor y = Tensor::interior({static_cast<int>(rows.size()), C}, std::move(out), needs);
  std::vector<Tensor> held(rows.begin(), rows.end());
  tape.record("stack_rows", held, y, [held, y, C]() mutable {
    const auto g = y.grad();
    for (std::size_t i = 0; i < held.size(); ++i) {
      if (!held[i].needs_grad()) continue;
      auto rg = held[i].grad_acc();
      for (int c = 0; c < C; ++c) rg[c] += g[i * static_cast<std::size_t>(C) + c];
    }
  });
  return y;
}

namespace {

void check_table(const Tensor& table) {
  if (table.rank() != 2) {
    throw ShapeError("embedding: table must be rank-2, got " + shape_to_string(table.shape()));
  }
}

void check_id(const Tensor& table, int id) {
  if (id < 0 || id >= table.dim(0)) {
    throw DataError("embedding: id " + std::to_string(id) + " out of range [0, " +
                    std::to_string(table.dim(0)) + ")");
  }
}

}  // namespace

Tensor embedding_row(Tape& tape, const Tensor& table, int id) {
  check_table(table);
  check_id(table, id);
  const int d = table.dim(1);
  const auto tv = table.values();
  std::vector<float> out(tv.begin() + static_cast<std::size_t>(id) * d,
                         tv.begin() + static_cast<std::size_t>(id + 1) * d);
  Tensor y = Tensor::interior({d}, std::move(out), table.needs_grad());
  tape.record("embedding_row", {table}, y, [table, y, id, d]() mutable {
    if (!table.needs_grad()) return;
    auto tg = table.grad_acc();
    const auto g = y.grad();
    for (int c = 0; c < d; ++c) tg[static_cast<std::size_t>(id) * d + c] += g[c];
  });
  return y;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  check_table(table);
  const int d = table.dim(1);
  std::vector<float> out;
  out.reserve(ids.size() * static_cast<std::size_t>(d));
  const auto tv = table.values();
  for (const int id : ids) {
    check_id(table, id);
    out.insert(out.end(), tv.begin() + static_cast<std::size_t>(id) * d,
               tv.begin() + static_cast<std::size_t>(id + 1) * d);
  }
  Tensor y = Tensor::interior({static_cast<int>(ids.size()), d}, std::move(out), table.needs_grad());
  std::vector<int> held_ids(ids.begin(), ids.end());
  tape.record("embedding", {table}, y, [table, y, held_ids = std::move(held_ids), d]() mutable {
    if (!table.needs_grad()) return;
    auto tg = table.grad_acc();
    const auto g = y.grad();
    for (std::size_t i = 0; i < held_ids.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(held_ids[i]) * d;
      for (int c = 0; c < d; ++c) tg[row + c] += g[i * static_cast<std::size_t>(d) + c];
    }
  });
  return y;
}

Tensor gather_cols(Tape& tape, const Tensor& m, std::span<const int> ids) {
  if (m.rank() != 2 || static_cast<std::size_t>(m.dim(0)) != ids.size()) {
    throw ShapeError("gather_cols: need (R,C) matrix with R == ids count, got " +
                     shape_to_string(m.shape()) + " and " + std::to_string(ids.size()) + " ids");
  }
  const int R = m.dim(0), C = m.dim(1);
  std::vector<float> out(static_cast<std::size_t>(R));
  const auto mv = m.values();
  for (int r = 0; r < R; ++r) {
    if (ids[r] < 0 || ids[r] >= C) {
      throw DataError("gather_cols: id " + std::to_string(ids[r]) + " out of range [0, " +
                      std::to_string(C) + ")");
    }
    out[r] = mv[static_cast<std::size_t>(r) * C + ids[r]];
  }
  Tensor y = Tensor::interior({R}, std::move(out), m.needs_grad());
  std::vector<int> held_ids(ids.begin(), ids.end());
  tape.record("gather_cols", {m}, y, [m, y, held_ids = std::move(held_ids), C]() mutable {
    if (!m.needs_grad()) return;
    auto mg = m.grad_acc();
    const auto g = y.grad();
    for (std::size_t r = 0; r < held_ids.size(); ++r) {
      mg[r * static_cast<std::size_t>(C) + held_ids[r]] += g[r];
    }
  });
  return y;
}

}  // namespace capfuse
