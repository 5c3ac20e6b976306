#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "him/ops.hpp"
#include "him/rng.hpp"

namespace him::nn {

// Ordered parameter registry. Names are dotted paths; registration order is
// construction order, which fixes the checkpoint layout and the order used by
// the finite-difference sweep.
class ParamSet {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  Var find(const std::string& name) const;
  int64_t total_params() const;
  void zero_grads() const;

 private:
  std::vector<std::pair<std::string, Var>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// Kaiming-normal fan-in init (weights); biases start at zero.
Tensor kaiming_conv(Rng& rng, int co, int ci, int kh, int kw);
Tensor kaiming_linear(Rng& rng, int co, int ci);
Tensor normal_init(Rng& rng, std::vector<int> shape, double stddev);

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 0;
  Var operator()(const Var& x) const { return ops::conv2d(x, w, b, stride, pad); }
};
// pad < 0 means k/2 ("same" shape at stride 1)
Conv2d conv2d(ParamSet& ps, const std::string& name, Rng& rng, int ci, int co,
              int k, int stride = 1, int pad = -1, bool bias = true);

struct Linear {
  Var w, b;
  Var operator()(const Var& x) const { return ops::linear(x, w, b); }
};
Linear linear(ParamSet& ps, const std::string& name, Rng& rng, int ci, int co,
              bool bias = true);

struct GroupNorm {
  Var gamma, beta;
  int groups = 1;
  Var operator()(const Var& x) const {
    return ops::group_norm(x, gamma, beta, groups);
  }
};
GroupNorm group_norm(ParamSet& ps, const std::string& name, int channels,
                     int groups);

struct LayerNorm {
  Var gamma, beta;
  Var operator()(const Var& x) const {
    return ops::layer_norm_rows(x, gamma, beta);
  }
};
LayerNorm layer_norm(ParamSet& ps, const std::string& name, int channels);

// conv + group norm + gelu, the standard conv block here
struct ConvBlock {
  Conv2d conv;
  GroupNorm gn;
  Var operator()(const Var& x) const { return ops::gelu(gn(conv(x))); }
};
ConvBlock conv_block(ParamSet& ps, const std::string& name, Rng& rng, int ci,
                     int co, int k, int stride, int groups);

// Three linear layers with GELU between them; all dynamic-kernel heads use this.
struct Mlp {
  Linear l1, l2, l3;
  Var operator()(const Var& x) const;
};
Mlp mlp(ParamSet& ps, const std::string& name, Rng& rng, int ci, int hidden,
        int co);

// Multi-head attention over token rows: q (Nq,C), k (Nk,C), v (Nk,C) -> (Nq,C)
struct Attention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  Var operator()(const Var& q, const Var& k, const Var& v) const;
};
Attention attention(ParamSet& ps, const std::string& name, Rng& rng, int dim,
                    int heads);

// Pre-norm encoder layer; the position embedding is added to q and k at every
// layer, not to the values.
struct EncoderLayer {
  LayerNorm ln1, ln2;
  Attention attn;
  Linear ff1, ff2;
  Var operator()(const Var& x, const Tensor& pos) const;
};
EncoderLayer encoder_layer(ParamSet& ps, const std::string& name, Rng& rng,
                           int dim, int heads, int ffn);

// Pre-norm decoder layer: self attention over queries (learned query embedding
// added to q/k), cross attention into the memory tokens, feed-forward.
struct DecoderLayer {
  LayerNorm ln1, ln2, ln3;
  Attention self_attn, cross_attn;
  Linear ff1, ff2;
  Var operator()(const Var& x, const Var& query_pos, const Var& memory,
                 const Tensor& mem_pos) const;
};
DecoderLayer decoder_layer(ParamSet& ps, const std::string& name, Rng& rng,
                           int dim, int heads, int ffn);

// Fixed 2D sinusoidal position embedding for an h x w token grid -> (h*w, dim).
// Half the channels encode y, half encode x. dim must be divisible by 4.
Tensor sine_position_embedding(int dim, int h, int w);

}  // namespace him::nn
