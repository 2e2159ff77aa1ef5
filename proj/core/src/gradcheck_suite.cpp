#include <cmath>

#include "capfuse/decoders.hpp"
#include "capfuse/gradcheck.hpp"
#include "capfuse/semantic.hpp"

namespace capfuse {

namespace {

// Pushes values away from zero so relu kinks cannot sit inside the
// finite-difference stencil.
void away_from_zero(std::span<float> v, float margin = 0.05f) {
  for (float& x : v) {
    if (x >= 0.0f && x < margin) x += margin;
    if (x < 0.0f && x > -margin) x -= margin;
  }
}

Tensor random_readout(std::size_t n, std::uint64_t tag) {
  Rng rng(Rng::mix(0xC0FFEEULL, tag));
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor::leaf({static_cast<int>(n)}, std::move(v));
}

// Scalar readout that weights every output entry differently, so symmetric
// gradient errors cannot cancel.
Tensor readout(Tape& tape, const Tensor& t, std::uint64_t tag) {
  Tensor flat = t.rank() == 1 ? t : concat(tape, std::vector<Tensor>{mean(tape, t, 0), mean(tape, t, 1)}, 0);
  return mean_all(tape, mul(tape, flat, random_readout(flat.numel(), tag)));
}

std::vector<GradCheckCase> op_cases() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"matmul_mat_mat",
                   {{3, 4}, {4, 5}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, matmul(t, l[0], l[1]), 1);
                   }});
  cases.push_back({"matmul_vec_mat",
                   {{4}, {4, 5}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, matmul(t, l[0], l[1]), 2);
                   }});
  cases.push_back({"matmul_mat_vec",
                   {{3, 4}, {4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, matmul(t, l[0], l[1]), 3);
                   }});
  cases.push_back({"add_same",
                   {{3, 4}, {3, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, add(t, l[0], l[1]), 4); }});
  cases.push_back({"add_row_broadcast",
                   {{3, 4}, {4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, add(t, l[0], l[1]), 5); }});
  cases.push_back({"mul_same",
                   {{3, 4}, {3, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, mul(t, l[0], l[1]), 6); }});
  cases.push_back({"mul_row_broadcast",
                   {{3, 4}, {4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, mul(t, l[0], l[1]), 7); }});
  cases.push_back({"mul_scalar_tensor",
                   {{3, 4}, {1}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, mul(t, l[0], l[1]), 8); }});
  cases.push_back({"scalar_mul",
                   {{3, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, scalar_mul(t, l[0], 1.7f), 9);
                   }});
  cases.push_back({"tanh",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, tanh(t, l[0]), 10); }});
  cases.push_back({"sigmoid",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, sigmoid(t, l[0]), 11); }});
  cases.push_back({"relu",
                   {{4, 3}},
                   [](int, std::span<float> v) { away_from_zero(v); },
                   [](Tape& t, std::span<Tensor> l) { return readout(t, relu(t, l[0]), 12); }});
  cases.push_back({"elu",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, elu(t, l[0]), 13); }});
  cases.push_back({"log",
                   {{4, 3}},
                   [](int, std::span<float> v) {
                     for (float& x : v) x = 0.2f + std::abs(x);
                   },
                   [](Tape& t, std::span<Tensor> l) { return readout(t, log(t, l[0]), 14); }});
  cases.push_back({"clamp",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, clamp(t, l[0], -0.6f, 0.6f), 15);
                   }});
  cases.push_back({"softmax_axis0",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, softmax(t, l[0], 0), 16); }});
  cases.push_back({"softmax_axis1",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, softmax(t, l[0], 1), 17); }});
  cases.push_back({"log_softmax_vec",
                   {{7}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, log_softmax(t, l[0], 0), 18);
                   }});
  cases.push_back({"log_softmax_axis1",
                   {{3, 5}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, log_softmax(t, l[0], 1), 19);
                   }});
  cases.push_back({"sum_axis0",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, sum(t, l[0], 0), 20); }});
  cases.push_back({"sum_axis1",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, sum(t, l[0], 1), 21); }});
  cases.push_back({"mean_axis0",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, mean(t, l[0], 0), 22); }});
  cases.push_back({"mean_axis1",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return readout(t, mean(t, l[0], 1), 23); }});
  cases.push_back({"sum_all",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return sum_all(t, l[0]); }});
  cases.push_back({"mean_all",
                   {{4, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) { return mean_all(t, l[0]); }});
  cases.push_back({"concat_vec",
                   {{3}, {4}, {2}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     std::vector<Tensor> parts(l.begin(), l.end());
                     return readout(t, concat(t, parts, 0), 24);
                   }});
  cases.push_back({"concat_axis1",
                   {{3, 2}, {3, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     std::vector<Tensor> parts(l.begin(), l.end());
                     return readout(t, concat(t, parts, 1), 25);
                   }});
  cases.push_back({"slice_vec",
                   {{8}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, slice(t, l[0], 0, 2, 4), 26);
                   }});
  cases.push_back({"slice_rows",
                   {{5, 3}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, slice(t, l[0], 0, 1, 3), 27);
                   }});
  cases.push_back({"slice_cols",
                   {{3, 5}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, slice(t, l[0], 1, 1, 3), 28);
                   }});
  cases.push_back({"stack_rows",
                   {{4}, {4}, {4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     std::vector<Tensor> rows(l.begin(), l.end());
                     return readout(t, stack_rows(t, rows), 29);
                   }});
  cases.push_back({"embedding_row",
                   {{5, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     return readout(t, embedding_row(t, l[0], 2), 30);
                   }});
  cases.push_back({"embedding_rows",
                   {{5, 4}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     const std::vector<int> ids = {1, 3, 1};
                     return readout(t, embedding(t, l[0], ids), 31);
                   }});
  cases.push_back({"gather_cols",
                   {{3, 5}},
                   nullptr,
                   [](Tape& t, std::span<Tensor> l) {
                     const std::vector<int> ids = {4, 0, 2};
                     return readout(t, gather_cols(t, l[0], ids), 32);
                   }});
  return cases;
}

// linear layer + softmax + NLL
GradCheckCase linear_nll_case() {
  return {"linear_softmax_nll",
          {{5}, {5, 7}, {7}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            Tensor logits = add(t, matmul(t, l[0], l[1]), l[2]);
            Tensor lsm = log_softmax(t, logits, 0);
            return scalar_mul(t, slice(t, lsm, 0, 3, 1), -1.0f);
          }};
}

GradCheckCase bce_case() {
  return {"semantic_bce",
          {{6}, {6, 5}, {5}, {5, 4}, {4}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            SemanticParams p;
            p.w1 = l[1];
            p.b1 = l[2];
            p.w2 = l[3];
            p.b2 = l[4];
            Tensor probs = semantic_forward(t, l[0], p);
            const Tensor targets = Tensor::leaf({4}, {1.0f, 0.0f, 1.0f, 0.0f});
            return bce_loss(t, probs, targets);
          }};
}

// Dimensions shared by the fusion/decoder cases.
constexpr int kD = 6;     // model dim
constexpr int kA = 5;     // attention dim
constexpr int kN = 3;     // frames
constexpr int kVocab = 9;

FusionParams fusion_from(std::span<Tensor> l, std::size_t base) {
  FusionParams f;
  f.modality_names = {"m0", "m1"};
  f.embed_relu = false;  // raw V tensors enter directly in these cases
  f.attn_v = {l[base], l[base + 1]};
  f.attn_h = l[base + 2];
  f.attn_out = l[base + 3];
  return f;
}

GradCheckCase feature_attention_case() {
  // Leaves: V0, V1 (N,d); h (d); Wv0, Wv1 (d,a); Wh (d,a); Wa (a,2)
  return {"feature_attention",
          {{kN, kD}, {kN, kD}, {kD}, {kD, kA}, {kD, kA}, {kD, kA}, {kA, 2}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            const FusionParams f = fusion_from(l, 3);
            const std::vector<Tensor> v = {l[0], l[1]};
            const FusedStep fs = feature_attention(t, l[2], v, f);
            return readout(t, fs.fused, 40);
          }};
}

GradCheckCase gru_case() {
  return {"gru_cell",
          {{4}, {3}, {4, 3}, {3, 3}, {3}, {4, 3}, {3, 3}, {3}, {4, 3}, {3, 3}, {3}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            GruCellParams p;
            p.wz = l[2], p.uz = l[3], p.bz = l[4];
            p.wr = l[5], p.ur = l[6], p.br = l[7];
            p.wc = l[8], p.uc = l[9], p.bc = l[10];
            return readout(t, gru_cell(t, l[0], l[1], p), 41);
          }};
}

GradCheckCase lstm_case() {
  return {"lstm_cell",
          {{4}, {3}, {3}, {4, 3}, {3, 3}, {3}, {4, 3}, {3, 3}, {3}, {4, 3}, {3, 3}, {3}, {4, 3},
           {3, 3}, {3}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            LstmCellParams p;
            p.wi = l[3], p.ui = l[4], p.bi = l[5];
            p.wf = l[6], p.uf = l[7], p.bf = l[8];
            p.wo = l[9], p.uo = l[10], p.bo = l[11];
            p.wg = l[12], p.ug = l[13], p.bg = l[14];
            auto [h, c] = lstm_cell(t, l[0], l[1], l[2], p);
            return add(t, readout(t, h, 42), readout(t, c, 43));
          }};
}

GradCheckCase frame_attention_case() {
  return {"frame_attention",
          {{kD}, {kN, kD}, {kD, kA}, {kD, kA}, {kA}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            FrameAttnParams p;
            p.wq = l[2], p.wk = l[3], p.wf = l[4];
            const FrameAttnOut out = frame_attention(t, l[0], l[1], p);
            return readout(t, out.context, 44);
          }};
}

GradCheckCase xlinear_case() {
  return {"xlinear_block",
          {{kD}, {kN, kD}, {kD, kD}, {kD, kD}, {kD, kA}, {kA}, {kD, kD}, {kD, kD}},
          nullptr,
          [](Tape& t, std::span<Tensor> l) {
            XLinearParams p;
            p.wq = l[2], p.wk = l[3], p.wb = l[4], p.vb = l[5], p.wc = l[6], p.wv = l[7];
            return readout(t, xlinear_block(t, l[0], l[1], p), 45);
          }};
}

GradCheckCase topdown_case() {
  // Leaves: V0, V1; h1, h2; fusion (Wv0, Wv1, Wh, Wa); embed table;
  // gru1 (9), gru2 (9); frame attn (Wq, Wk, wf); out (W, b).
  std::vector<Shape> shapes = {{kN, kD}, {kN, kD}, {kD}, {kD},
                               {kD, kA}, {kD, kA}, {kD, kA}, {kA, 2},
                               {kVocab, kD}};
  const auto gru_shapes = [&](int input_dim) {
    for (int g = 0; g < 3; ++g) {
      shapes.push_back({input_dim, kD});
      shapes.push_back({kD, kD});
      shapes.push_back({kD});
    }
  };
  gru_shapes(3 * kD);
  gru_shapes(2 * kD);
  shapes.push_back({kD, kA});
  shapes.push_back({kD, kA});
  shapes.push_back({kA});
  shapes.push_back({kD, kVocab});
  shapes.push_back({kVocab});

  return {"topdown_step", std::move(shapes), nullptr, [](Tape& t, std::span<Tensor> l) {
            const FusionParams f = fusion_from(l, 4);
            TopDownParams p;
            std::size_t i = 9;
            const auto take_gru = [&]() {
              GruCellParams g;
              g.wz = l[i++], g.uz = l[i++], g.bz = l[i++];
              g.wr = l[i++], g.ur = l[i++], g.br = l[i++];
              g.wc = l[i++], g.uc = l[i++], g.bc = l[i++];
              return g;
            };
            p.gru1 = take_gru();
            p.gru2 = take_gru();
            p.attn.wq = l[i++], p.attn.wk = l[i++], p.attn.wf = l[i++];
            p.out_w = l[i++], p.out_b = l[i++];

            TopDownState state{l[2], l[3]};
            const std::vector<Tensor> v = {l[0], l[1]};
            const StepResult r = topdown_step(t, state, /*prev_word_id=*/2, v, l[8], f, p);
            Tensor lsm = log_softmax(t, r.logits, 0);
            return scalar_mul(t, slice(t, lsm, 0, 4, 1), -1.0f);
          }};
}

GradCheckCase xlan_case() {
  // Leaves: V0, V1; h, c; fusion (4); embed table; lstm (12); xblock (6);
  // out (W, b).
  std::vector<Shape> shapes = {{kN, kD}, {kN, kD}, {kD}, {kD},
                               {kD, kA}, {kD, kA}, {kD, kA}, {kA, 2},
                               {kVocab, kD}};
  for (int g = 0; g < 4; ++g) {
    shapes.push_back({3 * kD, kD});
    shapes.push_back({kD, kD});
    shapes.push_back({kD});
  }
  shapes.push_back({kD, kD});  // xblock Wq
  shapes.push_back({kD, kD});  // Wk
  shapes.push_back({kD, kA});  // Wb
  shapes.push_back({kA});      // vb
  shapes.push_back({kD, kD});  // Wc
  shapes.push_back({kD, kD});  // Wv
  shapes.push_back({kD, kVocab});
  shapes.push_back({kVocab});

  return {"xlan_step", std::move(shapes), nullptr, [](Tape& t, std::span<Tensor> l) {
            const FusionParams f = fusion_from(l, 4);
            XlanParams p;
            std::size_t i = 9;
            p.lstm.wi = l[i++], p.lstm.ui = l[i++], p.lstm.bi = l[i++];
            p.lstm.wf = l[i++], p.lstm.uf = l[i++], p.lstm.bf = l[i++];
            p.lstm.wo = l[i++], p.lstm.uo = l[i++], p.lstm.bo = l[i++];
            p.lstm.wg = l[i++], p.lstm.ug = l[i++], p.lstm.bg = l[i++];
            p.block.wq = l[i++], p.block.wk = l[i++], p.block.wb = l[i++];
            p.block.vb = l[i++], p.block.wc = l[i++], p.block.wv = l[i++];
            p.out_w = l[i++], p.out_b = l[i++];

            XlanState state{l[2], l[3], Tensor::zeros({kD})};
            const std::vector<Tensor> v = {l[0], l[1]};
            const StepResult r = xlan_step(t, state, /*prev_word_id=*/3, v, l[8], f, p);
            Tensor lsm = log_softmax(t, r.logits, 0);
            return scalar_mul(t, slice(t, lsm, 0, 1, 1), -1.0f);
          }};
}

}  // namespace

std::vector<GradCheckReport> gradcheck_suite(int seeds_per_case, double tolerance) {
  std::vector<GradCheckCase> cases = op_cases();
  cases.push_back(linear_nll_case());
  cases.push_back(bce_case());
  cases.push_back(feature_attention_case());
  cases.push_back(gru_case());
  cases.push_back(lstm_case());
  cases.push_back(frame_attention_case());
  cases.push_back(xlinear_case());
  cases.push_back(topdown_case());
  cases.push_back(xlan_case());

  std::vector<GradCheckReport> reports;
  for (const GradCheckCase& c : cases) {
    for (int s = 0; s < seeds_per_case; ++s) {
      GradCheckReport r;
      r.name = c.name;
      r.seed = 1000 + static_cast<std::uint64_t>(s);
      r.max_rel_err = grad_check(c, r.seed);
      r.pass = r.max_rel_err < tolerance;
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

}  // namespace capfuse
