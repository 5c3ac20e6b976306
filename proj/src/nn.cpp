#include "him/nn.hpp"

#include <cmath>

namespace him::nn {

Var ParamSet::add(const std::string& name, Tensor init) {
  if (index_.count(name))
    throw ConfigError("duplicate parameter name: " + name);
  Var v(std::move(init), /*requires_grad=*/true);
  index_[name] = items_.size();
  items_.emplace_back(name, v);
  return v;
}

Var ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return items_[it->second].second;
}

int64_t ParamSet::total_params() const {
  int64_t n = 0;
  for (const auto& [name, v] : items_) n += v.val().numel();
  return n;
}

void ParamSet::zero_grads() const {
  for (const auto& [name, v] : items_) v.zero_grad();
}

Tensor normal_init(Rng& rng, std::vector<int> shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Tensor kaiming_conv(Rng& rng, int co, int ci, int kh, int kw) {
  const double std = std::sqrt(2.0 / (static_cast<double>(ci) * kh * kw));
  return normal_init(rng, {co, ci, kh, kw}, std);
}

Tensor kaiming_linear(Rng& rng, int co, int ci) {
  const double std = std::sqrt(2.0 / static_cast<double>(ci));
  return normal_init(rng, {co, ci}, std);
}

Conv2d conv2d(ParamSet& ps, const std::string& name, Rng& rng, int ci, int co,
              int k, int stride, int pad, bool bias) {
  Conv2d m;
  m.w = ps.add(name + ".w", kaiming_conv(rng, co, ci, k, k));
  if (bias) m.b = ps.add(name + ".b", Tensor::zeros({co}));
  m.stride = stride;
  m.pad = pad < 0 ? k / 2 : pad;
  return m;
}

Linear linear(ParamSet& ps, const std::string& name, Rng& rng, int ci, int co,
              bool bias) {
  Linear m;
  m.w = ps.add(name + ".w", kaiming_linear(rng, co, ci));
  if (bias) m.b = ps.add(name + ".b", Tensor::zeros({co}));
  return m;
}

GroupNorm group_norm(ParamSet& ps, const std::string& name, int channels,
                     int groups) {
  GroupNorm m;
  m.gamma = ps.add(name + ".g", Tensor::full({channels}, 1.0));
  m.beta = ps.add(name + ".b", Tensor::zeros({channels}));
  m.groups = groups;
  return m;
}

LayerNorm layer_norm(ParamSet& ps, const std::string& name, int channels) {
  LayerNorm m;
  m.gamma = ps.add(name + ".g", Tensor::full({channels}, 1.0));
  m.beta = ps.add(name + ".b", Tensor::zeros({channels}));
  return m;
}

ConvBlock conv_block(ParamSet& ps, const std::string& name, Rng& rng, int ci,
                     int co, int k, int stride, int groups) {
  ConvBlock m;
  m.conv = conv2d(ps, name + ".conv", rng, ci, co, k, stride);
  m.gn = group_norm(ps, name + ".gn", co, groups);
  return m;
}

Var Mlp::operator()(const Var& x) const {
  return l3(ops::gelu(l2(ops::gelu(l1(x)))));
}

Mlp mlp(ParamSet& ps, const std::string& name, Rng& rng, int ci, int hidden,
        int co) {
  Mlp m;
  m.l1 = linear(ps, name + ".l1", rng, ci, hidden);
  m.l2 = linear(ps, name + ".l2", rng, hidden, hidden);
  m.l3 = linear(ps, name + ".l3", rng, hidden, co);
  return m;
}

Var Attention::operator()(const Var& q, const Var& k, const Var& v) const {
  const int dim = q.val().dim(1);
  if (dim % heads != 0)
    throw ShapeError("attention: dim not divisible by heads");
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qp = wq(q), kp = wk(k), vp = wv(v);
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = ops::cols(qp, h * dh, (h + 1) * dh);
    Var kh = ops::cols(kp, h * dh, (h + 1) * dh);
    Var vh = ops::cols(vp, h * dh, (h + 1) * dh);
    Var att = ops::softmax_rows(ops::scale(ops::mm_nt(qh, kh), scale));
    outs.push_back(ops::mm(att, vh));
  }
  return wo(ops::concat_cols(outs));
}

Attention attention(ParamSet& ps, const std::string& name, Rng& rng, int dim,
                    int heads) {
  Attention m;
  m.wq = linear(ps, name + ".q", rng, dim, dim);
  m.wk = linear(ps, name + ".k", rng, dim, dim);
  m.wv = linear(ps, name + ".v", rng, dim, dim);
  m.wo = linear(ps, name + ".o", rng, dim, dim);
  m.heads = heads;
  return m;
}

Var EncoderLayer::operator()(const Var& x, const Tensor& pos) const {
  Var x2 = ln1(x);
  Var qk = ops::add_const(x2, pos);
  Var y = ops::add(x, attn(qk, qk, x2));
  Var y2 = ln2(y);
  return ops::add(y, ff2(ops::gelu(ff1(y2))));
}

EncoderLayer encoder_layer(ParamSet& ps, const std::string& name, Rng& rng,
                           int dim, int heads, int ffn) {
  EncoderLayer m;
  m.ln1 = layer_norm(ps, name + ".ln1", dim);
  m.attn = attention(ps, name + ".attn", rng, dim, heads);
  m.ln2 = layer_norm(ps, name + ".ln2", dim);
  m.ff1 = linear(ps, name + ".ff1", rng, dim, ffn);
  m.ff2 = linear(ps, name + ".ff2", rng, ffn, dim);
  return m;
}

Var DecoderLayer::operator()(const Var& x, const Var& query_pos,
                             const Var& memory, const Tensor& mem_pos) const {
  Var x2 = ln1(x);
  Var qk = ops::add(x2, query_pos);
  Var y = ops::add(x, self_attn(qk, qk, x2));
  Var y2 = ln2(y);
  Var z = ops::add(y, cross_attn(ops::add(y2, query_pos),
                                 ops::add_const(memory, mem_pos), memory));
  Var z2 = ln3(z);
  return ops::add(z, ff2(ops::gelu(ff1(z2))));
}

DecoderLayer decoder_layer(ParamSet& ps, const std::string& name, Rng& rng,
                           int dim, int heads, int ffn) {
  DecoderLayer m;
  m.ln1 = layer_norm(ps, name + ".ln1", dim);
  m.self_attn = attention(ps, name + ".self", rng, dim, heads);
  m.ln2 = layer_norm(ps, name + ".ln2", dim);
  m.cross_attn = attention(ps, name + ".cross", rng, dim, heads);
  m.ln3 = layer_norm(ps, name + ".ln3", dim);
  m.ff1 = linear(ps, name + ".ff1", rng, dim, ffn);
  m.ff2 = linear(ps, name + ".ff2", rng, ffn, dim);
  return m;
}

Tensor sine_position_embedding(int dim, int h, int w) {
  if (dim % 4 != 0)
    throw ShapeError("sine_position_embedding: dim must be divisible by 4");
  const int feats = dim / 2;
  const double two_pi = 6.283185307179586;
  Tensor pe = Tensor::zeros({h * w, dim});
  std::vector<double> dim_t(static_cast<size_t>(feats));
  for (int t = 0; t < feats; ++t)
    dim_t[static_cast<size_t>(t)] =
        std::pow(10000.0, 2.0 * (t / 2) / static_cast<double>(feats));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double ye = (i + 0.5) / h * two_pi;
      const double xe = (j + 0.5) / w * two_pi;
      double* row = pe.data() + (static_cast<int64_t>(i) * w + j) * dim;
      for (int t = 0; t < feats; ++t) {
        const double vy = ye / dim_t[static_cast<size_t>(t)];
        const double vx = xe / dim_t[static_cast<size_t>(t)];
        row[t] = (t % 2 == 0) ? std::sin(vy) : std::cos(vy);
        row[feats + t] = (t % 2 == 0) ? std::sin(vx) : std::cos(vx);
      }
    }
  return pe;
}

}  // namespace him::nn
