#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capfuse/fusion.hpp"
#include "capfuse/ops.hpp"
#include "capfuse/params.hpp"

namespace capfuse {

// Row-vector convention throughout: x (K) times W (K,H) plus recurrent
// h (H) times U (H,H) plus bias (H).

struct GruCellParams {
  Tensor wz, uz, bz;  // update gate
  Tensor wr, ur, br;  // reset gate
  Tensor wc, uc, bc;  // candidate

  static GruCellParams init(ParamStore& store, const std::string& prefix, int input_dim,
                            int hidden_dim, Rng& rng);
  static GruCellParams bind(ParamStore& store, const std::string& prefix);
};

struct LstmCellParams {
  Tensor wi, ui, bi;
  Tensor wf, uf, bf;
  Tensor wo, uo, bo;
  Tensor wg, ug, bg;

  static LstmCellParams init(ParamStore& store, const std::string& prefix, int input_dim,
                             int hidden_dim, Rng& rng);
  static LstmCellParams bind(ParamStore& store, const std::string& prefix);
};

/// GRU with the convention h' = z*h + (1-z)*candidate.
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruCellParams& p);

/// Standard LSTM: c' = f*c + i*g, h' = o*tanh(c').
std::pair<Tensor, Tensor> lstm_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmCellParams& p);

/// Additive (tanh) attention over frames.
struct FrameAttnParams {
  Tensor wq;  // (q_dim, a)
  Tensor wk;  // (d, a)
  Tensor wf;  // (a)

  static FrameAttnParams init(ParamStore& store, const std::string& prefix, int q_dim, int d,
                              int attn_dim, Rng& rng);
  static FrameAttnParams bind(ParamStore& store, const std::string& prefix);
};

struct FrameAttnOut {
  Tensor weights;  // (N)
  Tensor context;  // (d)
};

FrameAttnOut frame_attention(Tape& tape, const Tensor& query, const Tensor& frames,
                             const FrameAttnParams& p);

/// Bilinear-interaction attention block: elementwise product of embedded query
/// and keys, spatial softmax over frames, sigmoid channel gate on the pooled
/// interaction.
struct XLinearParams {
  Tensor wq;  // (q_dim, d_b)
  Tensor wk;  // (d, d_b)
  Tensor wb;  // (d_b, a)
  Tensor vb;  // (a)
  Tensor wc;  // (d_b, d)
  Tensor wv;  // (d, d)

  static XLinearParams init(ParamStore& store, const std::string& prefix, int q_dim, int d,
                            int attn_dim, Rng& rng);
  static XLinearParams bind(ParamStore& store, const std::string& prefix);
};

Tensor xlinear_block(Tape& tape, const Tensor& query, const Tensor& frames, const XLinearParams& p);

/// Top-down decoder: attention GRU over [h2; mean fused; word embedding],
/// frame attention driven by the fresh h1, then the language GRU.
struct TopDownParams {
  GruCellParams gru1, gru2;
  FrameAttnParams attn;
  Tensor out_w, out_b;  // (H, vocab), (vocab)

  static TopDownParams init(ParamStore& store, const std::string& prefix, int model_dim,
                            int attn_dim, int vocab_size, Rng& rng);
  static TopDownParams bind(ParamStore& store, const std::string& prefix);
};

struct TopDownState {
  Tensor h1, h2;
};

struct StepResult {
  Tensor logits;           // (vocab)
  Tensor fusion_weights;   // (n) modality attention for inspection
};

StepResult topdown_step(Tape& tape, TopDownState& state, int prev_word_id,
                        const std::vector<Tensor>& v, const Tensor& embed_table,
                        const FusionParams& fusion, const TopDownParams& p);

/// X-LAN style decoder: fusion queried by the language LSTM hidden state, an
/// x-linear context, then one LSTM step over [context; word embedding; mean
/// fused].
struct XlanParams {
  LstmCellParams lstm;
  XLinearParams block;
  Tensor out_w, out_b;

  static XlanParams init(ParamStore& store, const std::string& prefix, int model_dim, int attn_dim,
                         int vocab_size, Rng& rng);
  static XlanParams bind(ParamStore& store, const std::string& prefix);
};

struct XlanState {
  Tensor h, c, m;  // hidden, cell, previous attended context
};

StepResult xlan_step(Tape& tape, XlanState& state, int prev_word_id, const std::vector<Tensor>& v,
                     const Tensor& embed_table, const FusionParams& fusion, const XlanParams& p);

}  // namespace capfuse
