// SPDX-License-Identifier: Apache-2.0
//
// Semantically conditioned LSTM decoder.
//
//   x    = dropout(E[y_{t-1}])
//   r    = sigmoid([x, h] W_r + b_r)          reading gate, one entry per DA slot
//   d'   = r * d                               DA decay
//   i, f, o, g = split([x, h] W + b)           sigmoid, sigmoid, sigmoid, tanh
//   c'   = f * c + i * g + tanh(d' W_d)
//   h'   = o * tanh(c')
//   logits = dropout(h') W_o + b_o
//
// All rows of a batch advance together; padded positions carry zero weight in
// the loss.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "metanlg/autodiff/parameters.hpp"
#include "metanlg/autodiff/tape.hpp"
#include "metanlg/generator/vocabulary.hpp"
#include "metanlg/random.hpp"

namespace metanlg::gen {

using ad::ParamVars;
using ad::Tape;
using ad::Var;

struct GeneratorConfig {
  std::size_t hidden = 100;
  std::size_t embed = 50;
  double dropout = 0.25;
  double init_scale = 0.08;
  double read_gate_bias = 3.0;  // initial reading-gate bias; keeps the DA vector alive early in training
};

/// Segment indices into the parameter layout.
enum Seg : std::size_t { kEmbedding, kGatesW, kGatesB, kReadW, kReadB, kDaW, kOutW, kOutB, kSegCount };

inline std::shared_ptr<const Layout> generator_layout(std::size_t vocab, std::size_t da_dim, std::size_t hidden,
                                                      std::size_t embed) {
  if (vocab == 0 || da_dim == 0 || hidden == 0 || embed == 0) throw ShapeError("generator: all sizes must be positive");
  auto l = std::make_shared<Layout>();
  l->add("embedding", vocab, embed);
  l->add("gates_w", embed + hidden, 4 * hidden);
  l->add("gates_b", 1, 4 * hidden);
  l->add("read_w", embed + hidden, da_dim);
  l->add("read_b", 1, da_dim);
  l->add("da_w", da_dim, hidden);
  l->add("out_w", hidden, vocab);
  l->add("out_b", 1, vocab);
  return l;
}

/// Supplies a dropout mask for (step, site, rows, cols); site 0 is the
/// embedding, site 1 the hidden-to-logits path. An empty source means no
/// dropout.
using MaskSource = std::function<NumericArray(std::size_t step, int site, std::size_t rows, std::size_t cols)>;

/// Inverted dropout: kept entries are scaled by 1/(1-rate).
inline MaskSource bernoulli_masks(double rate, Rng& rng) {
  if (rate <= 0.0) return {};
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  return [rate, &rng](std::size_t, int, std::size_t rows, std::size_t cols) {
    NumericArray m = NumericArray::matrix(rows, cols);
    const double keep = 1.0 / (1.0 - rate);
    for (double& v : m.values()) v = rng.uniform() < rate ? 0.0 : keep;
    return m;
  };
}

struct DecoderState {
  Var h;
  Var c;
  Var da;
};

/// One training/evaluation sequence: DA row plus BOS ... EOS ids.
struct EncodedExample {
  NumericArray da;
  std::vector<std::size_t> ids;
};

class Generator {
 public:
  Generator(std::size_t vocab, std::size_t da_dim, GeneratorConfig cfg = {})
      : cfg_(cfg), vocab_(vocab), da_dim_(da_dim), layout_(generator_layout(vocab, da_dim, cfg.hidden, cfg.embed)) {}

  const GeneratorConfig& config() const noexcept { return cfg_; }
  std::size_t vocab_size() const noexcept { return vocab_; }
  std::size_t da_dim() const noexcept { return da_dim_; }
  std::size_t hidden() const noexcept { return cfg_.hidden; }
  const std::shared_ptr<const Layout>& layout() const noexcept { return layout_; }

  /// Uniform(-init_scale, init_scale) over every entry, in buffer order.
  ParameterVector init(std::uint64_t seed) const {
    ParameterVector p(layout_);
    Rng rng(seed);
    for (double& v : p.values()) v = rng.uniform(-cfg_.init_scale, cfg_.init_scale);
    for (double& v : p.segment(kReadB)) v = cfg_.read_gate_bias;
    return p;
  }

  DecoderState initial_state(Tape& tape, const NumericArray& da) const {
    if (da.cols() != da_dim_) throw ShapeError("generator: DA width " + std::to_string(da.cols()) + ", expected " +
                                               std::to_string(da_dim_));
    const std::size_t b = da.rows();
    return {tape.constant(NumericArray::matrix(b, cfg_.hidden)), tape.constant(NumericArray::matrix(b, cfg_.hidden)),
            tape.constant(da)};
  }

  /// Advances every row of `state` by one token. Returns next state and
  /// B x |V| logits.
  std::pair<DecoderState, Var> step(const ParamVars& p, const DecoderState& state, std::vector<std::size_t> ids,
                                    const Var* embed_mask = nullptr, const Var* out_mask = nullptr) const {
    check_params(p);
    const std::size_t H = cfg_.hidden;
    if (ids.size() != state.h.rows()) throw ShapeError("generator step: token count does not match batch rows");
    for (std::size_t id : ids)
      if (id >= vocab_) throw ShapeError("generator step: token id " + std::to_string(id) + " out of range");

    Var x = ad::embedding(p[kEmbedding], std::move(ids));
    if (embed_mask) x = ad::dropout(x, *embed_mask);
    Var xh = ad::concat_cols({x, state.h});

    Var r = ad::sigmoid(ad::add_row(ad::matmul(xh, p[kReadW]), p[kReadB]));
    Var da = r * state.da;

    Var z = ad::add_row(ad::matmul(xh, p[kGatesW]), p[kGatesB]);
    Var i = ad::sigmoid(ad::slice_cols(z, 0, H));
    Var f = ad::sigmoid(ad::slice_cols(z, H, 2 * H));
    Var o = ad::sigmoid(ad::slice_cols(z, 2 * H, 3 * H));
    Var g = ad::tanh(ad::slice_cols(z, 3 * H, 4 * H));

    Var c = f * state.c + i * g + ad::tanh(ad::matmul(da, p[kDaW]));
    Var h = o * ad::tanh(c);

    Var hout = out_mask ? ad::dropout(h, *out_mask) : h;
    Var logits = ad::add_row(ad::matmul(hout, p[kOutW]), p[kOutB]);
    return {DecoderState{h, c, da}, logits};
  }

  /// Sum over rows of teacher-forced negative log-likelihood. Sequences may
  /// differ in length; positions past a row's EOS are masked out.
  Var batch_nll(const ParamVars& p, std::span<const EncodedExample* const> batch, const MaskSource& masks = {}) const {
    if (batch.empty()) throw Error("batch_nll: empty batch");
    Tape& tape = p.tape();
    const std::size_t B = batch.size();
    std::size_t longest = 0;
    NumericArray da = NumericArray::matrix(B, da_dim_);
    for (std::size_t b = 0; b < B; ++b) {
      const EncodedExample& ex = *batch[b];
      if (ex.ids.size() < 2) throw Error("batch_nll: sequence needs at least one token after BOS");
      if (ex.da.size() != da_dim_) throw ShapeError("batch_nll: DA width mismatch");
      for (std::size_t id : ex.ids)
        if (id >= vocab_) throw ShapeError("batch_nll: token id " + std::to_string(id) + " out of range");
      std::copy(ex.da.values().begin(), ex.da.values().end(), da.values().begin() + b * da_dim_);
      longest = std::max(longest, ex.ids.size());
    }

    DecoderState state = initial_state(tape, da);
    Var total;
    for (std::size_t t = 0; t + 1 < longest; ++t) {
      std::vector<std::size_t> in(B, kPad);
      NumericArray target = NumericArray::matrix(B, vocab_);
      for (std::size_t b = 0; b < B; ++b) {
        const auto& ids = batch[b]->ids;
        if (t + 1 < ids.size()) {
          in[b] = ids[t];
          target(b, ids[t + 1]) = 1.0;
        }
      }
      Var em, om;
      if (masks) {
        em = tape.constant(masks(t, 0, B, cfg_.embed));
        om = tape.constant(masks(t, 1, B, cfg_.hidden));
      }
      auto [next, logits] = step(p, state, std::move(in), masks ? &em : nullptr, masks ? &om : nullptr);
      state = next;
      Var picked = ad::sum(ad::log_softmax(logits) * tape.constant(std::move(target)));
      total = total.valid() ? total + picked : picked;
    }
    return -total;
  }

  Var mean_nll(const ParamVars& p, std::span<const EncodedExample* const> batch, const MaskSource& masks = {}) const {
    return ad::scale(batch_nll(p, batch, masks), 1.0 / static_cast<double>(batch.size()));
  }

  /// Single sequence; `ids` must start with BOS.
  Var sequence_nll(const ParamVars& p, const NumericArray& da, const std::vector<std::size_t>& ids,
                   const MaskSource& masks = {}) const {
    EncodedExample ex{da, ids};
    const EncodedExample* one[] = {&ex};
    return batch_nll(p, one, masks);
  }

  void check_params(const ParamVars& p) const {
    if (p.vars.size() != kSegCount || !(*p.layout == *layout_)) {
      throw ShapeError("generator: parameter layout does not match the model dimensions");
    }
  }

 private:
  GeneratorConfig cfg_;
  std::size_t vocab_;
  std::size_t da_dim_;
  std::shared_ptr<const Layout> layout_;
};

/// Mean NLL without gradients, in chunks of `batch` rows.
inline double evaluate_nll(const Generator& model, const ParameterVector& params,
                           std::span<const EncodedExample> data, std::size_t batch = 64) {
  if (data.empty()) throw Error("evaluate_nll: empty data");
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    Tape tape;
    tape.set_grad_enabled(false);
    ParamVars p = ad::bind_constant(tape, params);
    std::vector<const EncodedExample*> chunk;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) chunk.push_back(&data[i]);
    total += model.batch_nll(p, chunk).value().item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace metanlg::gen
