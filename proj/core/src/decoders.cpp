#include "capfuse/decoders.hpp"

namespace capfuse {

namespace {

void check_vec_dim(const char* op, const Tensor& t, int dim) {
  if (t.rank() != 1 || t.dim(0) != dim) {
    throw ShapeError(std::string(op) + ": expected vector of dim " + std::to_string(dim) +
                     ", got " + shape_to_string(t.shape()));
  }
}

// Xavier-initialized score-projection vector (fan-out 1).
Tensor score_vector(int attn_dim, Rng& rng) {
  Tensor m = xavier_uniform(attn_dim, 1, rng);
  std::vector<float> v(m.values().begin(), m.values().end());
  return Tensor::leaf({attn_dim}, std::move(v), true);
}

}  // namespace

GruCellParams GruCellParams::init(ParamStore& store, const std::string& prefix, int input_dim,
                                  int hidden_dim, Rng& rng) {
  GruCellParams p;
  p.wz = store.add(prefix + ".Wz", xavier_uniform(input_dim, hidden_dim, rng));
  p.uz = store.add(prefix + ".Uz", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bz = store.add(prefix + ".bz", zeros_param(hidden_dim));
  p.wr = store.add(prefix + ".Wr", xavier_uniform(input_dim, hidden_dim, rng));
  p.ur = store.add(prefix + ".Ur", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.br = store.add(prefix + ".br", zeros_param(hidden_dim));
  p.wc = store.add(prefix + ".Wc", xavier_uniform(input_dim, hidden_dim, rng));
  p.uc = store.add(prefix + ".Uc", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bc = store.add(prefix + ".bc", zeros_param(hidden_dim));
  return p;
}

GruCellParams GruCellParams::bind(ParamStore& store, const std::string& prefix) {
  GruCellParams p;
  p.wz = store.at(prefix + ".Wz");
  p.uz = store.at(prefix + ".Uz");
  p.bz = store.at(prefix + ".bz");
  p.wr = store.at(prefix + ".Wr");
  p.ur = store.at(prefix + ".Ur");
  p.br = store.at(prefix + ".br");
  p.wc = store.at(prefix + ".Wc");
  p.uc = store.at(prefix + ".Uc");
  p.bc = store.at(prefix + ".bc");
  return p;
}

LstmCellParams LstmCellParams::init(ParamStore& store, const std::string& prefix, int input_dim,
                                    int hidden_dim, Rng& rng) {
  LstmCellParams p;
  p.wi = store.add(prefix + ".Wi", xavier_uniform(input_dim, hidden_dim, rng));
  p.ui = store.add(prefix + ".Ui", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bi = store.add(prefix + ".bi", zeros_param(hidden_dim));
  p.wf = store.add(prefix + ".Wf", xavier_uniform(input_dim, hidden_dim, rng));
  p.uf = store.add(prefix + ".Uf", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bf = store.add(prefix + ".bf", zeros_param(hidden_dim));
  p.wo = store.add(prefix + ".Wo", xavier_uniform(input_dim, hidden_dim, rng));
  p.uo = store.add(prefix + ".Uo", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bo = store.add(prefix + ".bo", zeros_param(hidden_dim));
  p.wg = store.add(prefix + ".Wg", xavier_uniform(input_dim, hidden_dim, rng));
  p.ug = store.add(prefix + ".Ug", xavier_uniform(hidden_dim, hidden_dim, rng));
  p.bg = store.add(prefix + ".bg", zeros_param(hidden_dim));
  return p;
}

LstmCellParams LstmCellParams::bind(ParamStore& store, const std::string& prefix) {
  LstmCellParams p;
  p.wi = store.at(prefix + ".Wi");
  p.ui = store.at(prefix + ".Ui");
  p.bi = store.at(prefix + ".bi");
  p.wf = store.at(prefix + ".Wf");
  p.uf = store.at(prefix + ".Uf");
  p.bf = store.at(prefix + ".bf");
  p.wo = store.at(prefix + ".Wo");
  p.uo = store.at(prefix + ".Uo");
  p.bo = store.at(prefix + ".bo");
  p.wg = store.at(prefix + ".Wg");
  p.ug = store.at(prefix + ".Ug");
  p.bg = store.at(prefix + ".bg");
  return p;
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruCellParams& p) {
  check_vec_dim("gru_cell", x, p.wz.dim(0));
  check_vec_dim("gru_cell", h, p.uz.dim(0));
  Tensor z = sigmoid(tape, add(tape, add(tape, matmul(tape, x, p.wz), matmul(tape, h, p.uz)), p.bz));
  Tensor r = sigmoid(tape, add(tape, add(tape, matmul(tape, x, p.wr), matmul(tape, h, p.ur)), p.br));
  Tensor gated = mul(tape, r, h);
  Tensor cand =
      tanh(tape, add(tape, add(tape, matmul(tape, x, p.wc), matmul(tape, gated, p.uc)), p.bc));
  const Tensor ones = Tensor::full(z.shape(), 1.0f);
  Tensor keep = mul(tape, z, h);
  Tensor update = mul(tape, add(tape, ones, scalar_mul(tape, z, -1.0f)), cand);
  return add(tape, keep, update);
}

std::pair<Tensor, Tensor> lstm_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmCellParams& p) {
  check_vec_dim("lstm_cell", x, p.wi.dim(0));
  check_vec_dim("lstm_cell", h, p.ui.dim(0));
  check_vec_dim("lstm_cell", c, p.ui.dim(0));
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return add(tape, add(tape, matmul(tape, x, w), matmul(tape, h, u)), b);
  };
  Tensor i = sigmoid(tape, gate(p.wi, p.ui, p.bi));
  Tensor f = sigmoid(tape, gate(p.wf, p.uf, p.bf));
  Tensor o = sigmoid(tape, gate(p.wo, p.uo, p.bo));
  Tensor g = tanh(tape, gate(p.wg, p.ug, p.bg));
  Tensor c_next = add(tape, mul(tape, f, c), mul(tape, i, g));
  Tensor h_next = mul(tape, o, tanh(tape, c_next));
  return {std::move(h_next), std::move(c_next)};
}

FrameAttnParams FrameAttnParams::init(ParamStore& store, const std::string& prefix, int q_dim,
                                      int d, int attn_dim, Rng& rng) {
  FrameAttnParams p;
  p.wq = store.add(prefix + ".Wq", xavier_uniform(q_dim, attn_dim, rng));
  p.wk = store.add(prefix + ".Wk", xavier_uniform(d, attn_dim, rng));
  p.wf = store.add(prefix + ".wf", score_vector(attn_dim, rng));
  return p;
}

FrameAttnParams FrameAttnParams::bind(ParamStore& store, const std::string& prefix) {
  FrameAttnParams p;
  p.wq = store.at(prefix + ".Wq");
  p.wk = store.at(prefix + ".Wk");
  p.wf = store.at(prefix + ".wf");
  return p;
}

FrameAttnOut frame_attention(Tape& tape, const Tensor& query, const Tensor& frames,
                             const FrameAttnParams& p) {
  if (frames.rank() != 2 || frames.dim(0) < 1) {
    throw ShapeError("frame_attention: frames must be a non-empty (N, d) matrix, got " +
                     shape_to_string(frames.shape()));
  }
  Tensor keys = matmul(tape, frames, p.wk);                     // (N, a)
  Tensor q_proj = matmul(tape, query, p.wq);                    // (a)
  Tensor pre = tanh(tape, add(tape, keys, q_proj));             // (N, a)
  Tensor scores = matmul(tape, pre, p.wf);                      // (N)
  FrameAttnOut out;
  out.weights = softmax(tape, scores, 0);
  out.context = matmul(tape, out.weights, frames);              // (d)
  return out;
}

XLinearParams XLinearParams::init(ParamStore& store, const std::string& prefix, int q_dim, int d,
                                  int attn_dim, Rng& rng) {
  XLinearParams p;
  p.wq = store.add(prefix + ".Wq", xavier_uniform(q_dim, d, rng));
  p.wk = store.add(prefix + ".Wk", xavier_uniform(d, d, rng));
  p.wb = store.add(prefix + ".Wb", xavier_uniform(d, attn_dim, rng));
  p.vb = store.add(prefix + ".vb", score_vector(attn_dim, rng));
  p.wc = store.add(prefix + ".Wc", xavier_uniform(d, d, rng));
  p.wv = store.add(prefix + ".Wv", xavier_uniform(d, d, rng));
  return p;
}

XLinearParams XLinearParams::bind(ParamStore& store, const std::string& prefix) {
  XLinearParams p;
  p.wq = store.at(prefix + ".Wq");
  p.wk = store.at(prefix + ".Wk");
  p.wb = store.at(prefix + ".Wb");
  p.vb = store.at(prefix + ".vb");
  p.wc = store.at(prefix + ".Wc");
  p.wv = store.at(prefix + ".Wv");
  return p;
}

Tensor xlinear_block(Tape& tape, const Tensor& query, const Tensor& frames, const XLinearParams& p) {
  if (frames.rank() != 2 || frames.dim(0) < 1) {
    throw ShapeError("xlinear_block: frames must be a non-empty (N, d) matrix, got " +
                     shape_to_string(frames.shape()));
  }
  // Bilinear interaction: elu-embedded keys gated row-wise by the elu-embedded
  // query.
  Tensor keys = elu(tape, matmul(tape, frames, p.wk));          // (N, d)
  Tensor q_emb = elu(tape, matmul(tape, query, p.wq));          // (d)
  Tensor bilinear = mul(tape, keys, q_emb);                     // (N, d) row-broadcast

  Tensor spatial = matmul(tape, relu(tape, matmul(tape, bilinear, p.wb)), p.vb);  // (N)
  Tensor beta = softmax(tape, spatial, 0);
  Tensor gate = sigmoid(tape, matmul(tape, mean(tape, bilinear, /*axis=*/0), p.wc));  // (d)
  Tensor mixed = matmul(tape, beta, matmul(tape, frames, p.wv));                  // (d)
  return mul(tape, gate, mixed);
}

TopDownParams TopDownParams::init(ParamStore& store, const std::string& prefix, int model_dim,
                                  int attn_dim, int vocab_size, Rng& rng) {
  TopDownParams p;
  // gru1 input: [h2; mean fused; word embedding], all model_dim wide.
  p.gru1 = GruCellParams::init(store, prefix + ".gru1", 3 * model_dim, model_dim, rng);
  // gru2 input: [attended context; h1].
  p.gru2 = GruCellParams::init(store, prefix + ".gru2", 2 * model_dim, model_dim, rng);
  p.attn = FrameAttnParams::init(store, prefix + ".attn", model_dim, model_dim, attn_dim, rng);
  p.out_w = store.add(prefix + ".out.W", xavier_uniform(model_dim, vocab_size, rng));
  p.out_b = store.add(prefix + ".out.b", zeros_param(vocab_size));
  return p;
}

TopDownParams TopDownParams::bind(ParamStore& store, const std::string& prefix) {
  TopDownParams p;
  p.gru1 = GruCellParams::bind(store, prefix + ".gru1");
  p.gru2 = GruCellParams::bind(store, prefix + ".gru2");
  p.attn = FrameAttnParams::bind(store, prefix + ".attn");
  p.out_w = store.at(prefix + ".out.W");
  p.out_b = store.at(prefix + ".out.b");
  return p;
}

StepResult topdown_step(Tape& tape, TopDownState& state, int prev_word_id,
                        const std::vector<Tensor>& v, const Tensor& embed_table,
                        const FusionParams& fusion, const TopDownParams& p) {
  const FusedStep fused = feature_attention(tape, state.h1, v, fusion);
  Tensor word = embedding_row(tape, embed_table, prev_word_id);
  Tensor fused_mean = mean(tape, fused.fused, /*axis=*/0);

  const std::vector<Tensor> x1_parts = {state.h2, fused_mean, word};
  Tensor h1_next = gru_cell(tape, concat(tape, x1_parts, 0), state.h1, p.gru1);

  const FrameAttnOut attended = frame_attention(tape, h1_next, fused.fused, p.attn);

  const std::vector<Tensor> x2_parts = {attended.context, h1_next};
  Tensor h2_next = gru_cell(tape, concat(tape, x2_parts, 0), state.h2, p.gru2);

  StepResult result;
  result.logits = add(tape, matmul(tape, h2_next, p.out_w), p.out_b);
  result.fusion_weights = fused.weights;
  state.h1 = std::move(h1_next);
  state.h2 = std::move(h2_next);
  return result;
}

XlanParams XlanParams::init(ParamStore& store, const std::string& prefix, int model_dim,
                            int attn_dim, int vocab_size, Rng& rng) {
  XlanParams p;
  // lstm input: [x-linear context; word embedding; mean fused].
  p.lstm = LstmCellParams::init(store, prefix + ".lstm", 3 * model_dim, model_dim, rng);
  p.block = XLinearParams::init(store, prefix + ".xblock", model_dim, model_dim, attn_dim, rng);
  p.out_w = store.add(prefix + ".out.W", xavier_uniform(model_dim, vocab_size, rng));
  p.out_b = store.add(prefix + ".out.b", zeros_param(vocab_size));
  return p;
}

XlanParams XlanParams::bind(ParamStore& store, const std::string& prefix) {
  XlanParams p;
  p.lstm = LstmCellParams::bind(store, prefix + ".lstm");
  p.block = XLinearParams::bind(store, prefix + ".xblock");
  p.out_w = store.at(prefix + ".out.W");
  p.out_b = store.at(prefix + ".out.b");
  return p;
}

StepResult xlan_step(Tape& tape, XlanState& state, int prev_word_id, const std::vector<Tensor>& v,
                     const Tensor& embed_table, const FusionParams& fusion, const XlanParams& p) {
  const FusedStep fused = feature_attention(tape, state.h, v, fusion);
  Tensor context = xlinear_block(tape, state.h, fused.fused, p.block);
  Tensor word = embedding_row(tape, embed_table, prev_word_id);
  Tensor fused_mean = mean(tape, fused.fused, /*axis=*/0);

  const std::vector<Tensor> x_parts = {context, word, fused_mean};
  auto [h_next, c_next] = lstm_cell(tape, concat(tape, x_parts, 0), state.h, state.c, p.lstm);

  StepResult result;
  result.logits = add(tape, matmul(tape, h_next, p.out_w), p.out_b);
  result.fusion_weights = fused.weights;
  state.h = std::move(h_next);
  state.c = std::move(c_next);
  state.m = std::move(context);
  return result;
}

}  // namespace capfuse
