// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kadp/rng.hpp"

namespace kadp {

namespace {

constexpr char kMagic[9] = "KADPDN01";

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  const std::int64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(double))));
}

Eigen::VectorXd read_vec(std::istream& in) {
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n < 0 || n > (1 << 28)) throw std::runtime_error("denoiser checkpoint: bad vector length");
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(double))));
  if (!in) throw std::runtime_error("denoiser checkpoint: truncated");
  return v;
}

}  // namespace

std::uint64_t DenoiserConfig::hash() const {
  const std::int64_t fields[11] = {n_nodes, horizon,      obs_frames, points,   width,     cond_width,
                                   blocks,  point_hidden, mlp_mult,   unet ? 1 : 0, action_override};
  return fnv1a(fields, sizeof(fields));
}

DenoiserBlock::DenoiserBlock(int w, int cond_width, int emb_width, int mlp_mult)
    : ln1(w),
      ln2(w),
      ln3(w),
      step_proj(w, emb_width),
      conv(w, 3 * w),
      attn_q(w, w),
      attn_k(w, cond_width),
      attn_v(w, cond_width),
      attn_o(w, w),
      mlp1(mlp_mult * w, w),
      mlp2(w, mlp_mult * w) {}

void DenoiserBlock::init(Rng& rng) {
  step_proj.init(rng);
  // Residual branches end in a small-gain layer so a deep stack starts close
  // to the identity.
  conv.init(rng, 0.3);
  attn_q.init(rng);
  attn_k.init(rng);
  attn_v.init(rng);
  attn_o.init(rng, 0.3);
  mlp1.init(rng);
  mlp2.init(rng, 0.3);
}

void DenoiserBlock::collect(ParamList& out) {
  ln1.collect(out);
  ln2.collect(out);
  ln3.collect(out);
  step_proj.collect(out);
  conv.collect(out);
  attn_q.collect(out);
  attn_k.collect(out);
  attn_v.collect(out);
  attn_o.collect(out);
  mlp1.collect(out);
  mlp2.collect(out);
}

Eigen::MatrixXd DenoiserBlock::forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond,
                                       const Eigen::MatrixXd& emb, int batch, int tokens, int cond_tokens,
                                       Cache& cache) const {
  const int w = static_cast<int>(ln1.gain.size());
  cache.x_in = x;

  const Eigen::MatrixXd sp = step_proj.apply(emb);
  Eigen::MatrixXd x1 = x;
  for (int b = 0; b < batch; ++b) x1.middleCols(b * tokens, tokens).colwise() += sp.col(b);

  cache.t1 = ln1.forward(x1, cache.c1);
  cache.shifted = Eigen::MatrixXd::Zero(3 * w, x.cols());
  cache.shifted.middleRows(w, w) = cache.t1;
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < tokens; ++t) {
      const int c = b * tokens + t;
      if (t > 0) cache.shifted.col(c).head(w) = cache.t1.col(c - 1);
      if (t + 1 < tokens) cache.shifted.col(c).tail(w) = cache.t1.col(c + 1);
    }
  }
  Eigen::MatrixXd x2 = x1 + conv.apply(cache.shifted);

  cache.t2 = ln2.forward(x2, cache.c2);
  cache.q = attn_q.apply(cache.t2);
  cache.k = attn_k.apply(cond);
  cache.v = attn_v.apply(cond);
  cache.attn.resize(cond_tokens, x.cols());
  cache.y.resize(w, x.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));
  for (int b = 0; b < batch; ++b) {
    const auto qb = cache.q.middleCols(b * tokens, tokens);
    const auto kb = cache.k.middleCols(b * cond_tokens, cond_tokens);
    const auto vb = cache.v.middleCols(b * cond_tokens, cond_tokens);
    const Eigen::MatrixXd scores = (kb.transpose() * qb) * scale;
    const Eigen::MatrixXd a = softmax_columns(scores);
    cache.attn.middleCols(b * tokens, tokens) = a;
    cache.y.middleCols(b * tokens, tokens) = vb * a;
  }
  Eigen::MatrixXd x3 = x2 + attn_o.apply(cache.y);

  cache.t3 = ln3.forward(x3, cache.c3);
  cache.m1pre = mlp1.apply(cache.t3);
  cache.m1post = gelu(cache.m1pre);
  return x3 + mlp2.apply(cache.m1post);
}

Eigen::MatrixXd DenoiserBlock::backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& cond,
                                        const Eigen::MatrixXd& emb, int batch, int tokens, int cond_tokens,
                                        const Cache& cache, DenoiserBlock& grad, Eigen::MatrixXd& d_cond,
                                        Eigen::MatrixXd& d_emb) const {
  const int w = static_cast<int>(ln1.gain.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));

  // Feed-forward sublayer.
  Eigen::MatrixXd dx3 = dy;
  {
    const Eigen::MatrixXd dm1post = mlp2.backward(cache.m1post, dy, grad.mlp2);
    const Eigen::MatrixXd dm1pre = dm1post.cwiseProduct(gelu_grad(cache.m1pre));
    const Eigen::MatrixXd dt3 = mlp1.backward(cache.t3, dm1pre, grad.mlp1);
    dx3 += ln3.backward(cache.c3, dt3, grad.ln3);
  }

  // Cross-attention sublayer.
  Eigen::MatrixXd dx2 = dx3;
  {
    const Eigen::MatrixXd dyattn = attn_o.backward(cache.y, dx3, grad.attn_o);
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(w, cache.q.cols());
    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(w, cache.k.cols());
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(w, cache.v.cols());
    for (int b = 0; b < batch; ++b) {
      const auto qb = cache.q.middleCols(b * tokens, tokens);
      const auto kb = cache.k.middleCols(b * cond_tokens, cond_tokens);
      const auto vb = cache.v.middleCols(b * cond_tokens, cond_tokens);
      const auto ab = cache.attn.middleCols(b * tokens, tokens);
      const auto dyb = dyattn.middleCols(b * tokens, tokens);
      const Eigen::MatrixXd da = vb.transpose() * dyb;
      const Eigen::MatrixXd ds = softmax_backward(ab, da);
      dq.middleCols(b * tokens, tokens) = kb * ds * scale;
      dk.middleCols(b * cond_tokens, cond_tokens) = qb * ds.transpose() * scale;
      dv.middleCols(b * cond_tokens, cond_tokens) = dyb * ab.transpose();
    }
    const Eigen::MatrixXd dt2 = attn_q.backward(cache.t2, dq, grad.attn_q);
    d_cond += attn_k.backward(cond, dk, grad.attn_k);
    d_cond += attn_v.backward(cond, dv, grad.attn_v);
    dx2 += ln2.backward(cache.c2, dt2, grad.ln2);
  }

  // Temporal convolution sublayer.
  Eigen::MatrixXd dx1 = dx2;
  {
    const Eigen::MatrixXd dshift = conv.backward(cache.shifted, dx2, grad.conv);
    Eigen::MatrixXd dt1 = dshift.middleRows(w, w);
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < tokens; ++t) {
        const int c = b * tokens + t;
        if (t > 0) dt1.col(c - 1) += dshift.col(c).head(w);
        if (t + 1 < tokens) dt1.col(c + 1) += dshift.col(c).tail(w);
      }
    }
    dx1 += ln1.backward(cache.c1, dt1, grad.ln1);
  }

  // Step injection.
  Eigen::MatrixXd dsp(w, batch);
  for (int b = 0; b < batch; ++b) dsp.col(b) = dx1.middleCols(b * tokens, tokens).rowwise().sum();
  d_emb += step_proj.backward(emb, dsp, grad.step_proj);
  return dx1;
}

ParamList DenoiserModel::params() {
  ParamList out;
  p1.collect(out);
  p2.collect(out);
  cproj.collect(out);
  e1.collect(out);
  e2.collect(out);
  token_in.collect(out);
  for (DenoiserBlock& block : blocks) block.collect(out);
  if (config.unet) {
    down.collect(out);
    up.collect(out);
    fuse.collect(out);
  }
  ln_f.collect(out);
  head.collect(out);
  return out;
}

std::uint64_t DenoiserModel::weights_hash() const {
  return param_hash(const_cast<DenoiserModel*>(this)->params());
}

namespace {

// Allocates every tensor at its configured shape, all zeros.
DenoiserModel build_denoiser(const DenoiserConfig& config) {
  if (config.n_nodes <= 0 || config.horizon <= 0 || config.obs_frames <= 0 || config.points <= 0 ||
      config.width <= 0 || config.cond_width <= 0 || config.blocks <= 0 || config.point_hidden <= 0 ||
      config.mlp_mult <= 0)
    throw std::invalid_argument("denoiser config: all sizes must be positive");
  if (config.action_override < 0)
    throw std::invalid_argument("denoiser config: action_override must be >= 0");
  if (config.unet && config.horizon % 2 != 0)
    throw std::invalid_argument("denoiser config: unet backbone needs an even horizon");
  DenoiserModel m;
  m.config = config;
  const int token = config.token_dim();
  const int w = config.width;
  m.p1 = Linear(config.point_hidden, 3);
  m.p2 = Linear(config.cond_width, config.point_hidden);
  m.cproj = Linear(config.cond_width, config.cond_width + config.proprio_dim());
  m.e1 = Linear(w, w);
  m.e2 = Linear(w, w);
  m.token_in = Linear(w, token);
  if (config.unet) {
    m.blocks.emplace_back(w, config.cond_width, w, config.mlp_mult);
    m.blocks.emplace_back(2 * w, config.cond_width, w, config.mlp_mult);
    m.blocks.emplace_back(w, config.cond_width, w, config.mlp_mult);
    m.down = Linear(2 * w, w);
    m.up = Linear(w, 2 * w);
    m.fuse = Linear(w, 2 * w);
  } else {
    for (int i = 0; i < config.blocks; ++i) m.blocks.emplace_back(w, config.cond_width, w, config.mlp_mult);
  }
  m.ln_f = LayerNorm(w);
  m.head = Linear(token, w);
  m.act_mean = Eigen::VectorXd::Zero(token);
  m.act_scale = Eigen::VectorXd::Ones(token);
  m.prop_mean = Eigen::VectorXd::Zero(config.proprio_dim());
  m.prop_scale = Eigen::VectorXd::Ones(config.proprio_dim());
  m.point_mean.setZero();
  m.point_scale.setOnes();
  return m;
}

struct EncoderCache {
  Eigen::MatrixXd pts_n, f1pre, f1, f2pre, f2;
  Eigen::MatrixXi argmax;   // cond_width x B*T_o
  Eigen::MatrixXd pooled, cat, cond;
};

// points: 3 x B*T_o*P raw; proprio: token x B*T_o raw.
void encoder_forward(const DenoiserModel& m, const Eigen::MatrixXd& points, const Eigen::MatrixXd& proprio,
                     EncoderCache& c) {
  const int P = m.config.points;
  const int frames = static_cast<int>(proprio.cols());
  c.pts_n = (points.colwise() - m.point_mean).array().colwise() / m.point_scale.array();
  c.f1pre = m.p1.apply(c.pts_n);
  c.f1 = gelu(c.f1pre);
  c.f2pre = m.p2.apply(c.f1);
  c.f2 = gelu(c.f2pre);
  const int cw = m.config.cond_width;
  c.pooled.resize(cw, frames);
  c.argmax.resize(cw, frames);
  for (int f = 0; f < frames; ++f) {
    for (int r = 0; r < cw; ++r) {
      int best = 0;
      double best_v = c.f2(r, f * P);
      for (int p = 1; p < P; ++p) {
        const double v = c.f2(r, f * P + p);
        if (v > best_v) {
          best_v = v;
          best = p;
        }
      }
      c.pooled(r, f) = best_v;
      c.argmax(r, f) = best;
    }
  }
  const Eigen::MatrixXd prop_n =
      (proprio.colwise() - m.prop_mean).array().colwise() / m.prop_scale.array();
  c.cat.resize(cw + proprio.rows(), frames);
  c.cat.topRows(cw) = c.pooled;
  c.cat.bottomRows(proprio.rows()) = prop_n;
  c.cond = m.cproj.apply(c.cat);
}

void encoder_backward(const DenoiserModel& m, const EncoderCache& c, const Eigen::MatrixXd& d_cond,
                      DenoiserModel& g) {
  const int P = m.config.points;
  const int cw = m.config.cond_width;
  const Eigen::MatrixXd dcat = m.cproj.backward(c.cat, d_cond, g.cproj);
  Eigen::MatrixXd df2 = Eigen::MatrixXd::Zero(c.f2.rows(), c.f2.cols());
  for (int f = 0; f < c.pooled.cols(); ++f)
    for (int r = 0; r < cw; ++r) df2(r, f * P + c.argmax(r, f)) += dcat(r, f);
  const Eigen::MatrixXd df2pre = df2.cwiseProduct(gelu_grad(c.f2pre));
  const Eigen::MatrixXd df1 = m.p2.backward(c.f1, df2pre, g.p2);
  const Eigen::MatrixXd df1pre = df1.cwiseProduct(gelu_grad(c.f1pre));
  m.p1.backward(c.pts_n, df1pre, g.p1);
}

struct BackboneCache {
  Eigen::MatrixXd emb0, e1pre, e1post, emb;
  Eigen::MatrixXd x_in_n, x0;
  std::vector<DenoiserBlock::Cache> bc;
  Eigen::MatrixXd skip, pool, mid_in, mid_out, up_out, upsampled, catm, fuse_out;
  LayerNorm::Cache cf;
  Eigen::MatrixXd yf, out_n;
};

// noised: token x B*T raw. Returns prediction in real units, token x B*T.
Eigen::MatrixXd backbone_forward(const DenoiserModel& m, const Eigen::MatrixXd& noised,
                                 const Eigen::MatrixXd& cond, const Eigen::VectorXd& steps,
                                 BackboneCache& c) {
  const int B = static_cast<int>(steps.size());
  const int T = m.config.horizon;
  const int To = m.config.obs_frames;
  const int w = m.config.width;

  c.emb0.resize(w, B);
  for (int b = 0; b < B; ++b) c.emb0.col(b) = sinusoidal_embedding(steps[b], w);
  c.e1pre = m.e1.apply(c.emb0);
  c.e1post = gelu(c.e1pre);
  c.emb = m.e2.apply(c.e1post);

  c.x_in_n = (noised.colwise() - m.act_mean).array().colwise() / m.act_scale.array();
  c.x0 = m.token_in.apply(c.x_in_n);

  Eigen::MatrixXd x;
  if (m.config.unet) {
    c.bc.resize(3);
    c.skip = m.blocks[0].forward(c.x0, cond, c.emb, B, T, To, c.bc[0]);
    const int Th = T / 2;
    c.pool.resize(w, B * Th);
    for (int b = 0; b < B; ++b)
      for (int u = 0; u < Th; ++u)
        c.pool.col(b * Th + u) = 0.5 * (c.skip.col(b * T + 2 * u) + c.skip.col(b * T + 2 * u + 1));
    c.mid_in = m.down.apply(c.pool);
    c.mid_out = m.blocks[1].forward(c.mid_in, cond, c.emb, B, Th, To, c.bc[1]);
    c.up_out = m.up.apply(c.mid_out);
    c.upsampled.resize(w, B * T);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t) c.upsampled.col(b * T + t) = c.up_out.col(b * Th + t / 2);
    c.catm.resize(2 * w, B * T);
    c.catm.topRows(w) = c.skip;
    c.catm.bottomRows(w) = c.upsampled;
    c.fuse_out = m.fuse.apply(c.catm);
    x = m.blocks[2].forward(c.fuse_out, cond, c.emb, B, T, To, c.bc[2]);
  } else {
    c.bc.resize(m.blocks.size());
    x = c.x0;
    for (std::size_t i = 0; i < m.blocks.size(); ++i)
      x = m.blocks[i].forward(x, cond, c.emb, B, T, To, c.bc[i]);
  }
  c.yf = m.ln_f.forward(x, c.cf);
  c.out_n = m.head.apply(c.yf);
  return (c.out_n.array().colwise() * m.act_scale.array()).colwise() + m.act_mean.array();
}

// d_pred in real units; returns d_cond and accumulates parameter grads.
Eigen::MatrixXd backbone_backward(const DenoiserModel& m, const Eigen::MatrixXd& cond,
                                  const Eigen::VectorXd& steps, const Eigen::MatrixXd& d_pred,
                                  const BackboneCache& c, DenoiserModel& g) {
  const int B = static_cast<int>(steps.size());
  const int T = m.config.horizon;
  const int To = m.config.obs_frames;
  const int w = m.config.width;

  const Eigen::MatrixXd dout_n = d_pred.array().colwise() * m.act_scale.array();
  const Eigen::MatrixXd dyf = m.head.backward(c.yf, dout_n, g.head);
  Eigen::MatrixXd dx = m.ln_f.backward(c.cf, dyf, g.ln_f);

  Eigen::MatrixXd d_cond = Eigen::MatrixXd::Zero(cond.rows(), cond.cols());
  Eigen::MatrixXd d_emb = Eigen::MatrixXd::Zero(w, B);

  Eigen::MatrixXd dx0;
  if (m.config.unet) {
    const int Th = T / 2;
    const Eigen::MatrixXd dfuse_out =
        m.blocks[2].backward(dx, cond, c.emb, B, T, To, c.bc[2], g.blocks[2], d_cond, d_emb);
    const Eigen::MatrixXd dcatm = m.fuse.backward(c.catm, dfuse_out, g.fuse);
    Eigen::MatrixXd dskip = dcatm.topRows(w);
    const Eigen::MatrixXd dupsampled = dcatm.bottomRows(w);
    Eigen::MatrixXd dup_out = Eigen::MatrixXd::Zero(w, B * Th);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t) dup_out.col(b * Th + t / 2) += dupsampled.col(b * T + t);
    const Eigen::MatrixXd dmid_out = m.up.backward(c.mid_out, dup_out, g.up);
    const Eigen::MatrixXd dmid_in =
        m.blocks[1].backward(dmid_out, cond, c.emb, B, Th, To, c.bc[1], g.blocks[1], d_cond, d_emb);
    const Eigen::MatrixXd dpool = m.down.backward(c.pool, dmid_in, g.down);
    for (int b = 0; b < B; ++b)
      for (int u = 0; u < Th; ++u) {
        dskip.col(b * T + 2 * u) += 0.5 * dpool.col(b * Th + u);
        dskip.col(b * T + 2 * u + 1) += 0.5 * dpool.col(b * Th + u);
      }
    dx0 = m.blocks[0].backward(dskip, cond, c.emb, B, T, To, c.bc[0], g.blocks[0], d_cond, d_emb);
  } else {
    dx0 = dx;
    for (std::size_t i = m.blocks.size(); i > 0; --i)
      dx0 = m.blocks[i - 1].backward(dx0, cond, c.emb, B, T, To, c.bc[i - 1], g.blocks[i - 1], d_cond, d_emb);
  }
  m.token_in.backward(c.x_in_n, dx0, g.token_in);

  const Eigen::MatrixXd de1post = m.e2.backward(c.e1post, d_emb, g.e2);
  const Eigen::MatrixXd de1pre = de1post.cwiseProduct(gelu_grad(c.e1pre));
  m.e1.backward(c.emb0, de1pre, g.e1);
  return d_cond;
}

}  // namespace

Eigen::MatrixXd chunk_to_tokens(const ActionChunk& chunk, int n_nodes) {
  Eigen::MatrixXd tokens(3 * n_nodes + 1, chunk.length());
  for (int t = 0; t < chunk.length(); ++t) {
    const NodeState& s = chunk.steps[static_cast<std::size_t>(t)];
    if (s.positions.cols() != n_nodes) throw std::invalid_argument("chunk_to_tokens: node count mismatch");
    tokens.col(t).head(3 * n_nodes) =
        Eigen::Map<const Eigen::VectorXd>(s.positions.data(), 3 * n_nodes);
    tokens(3 * n_nodes, t) = s.gripper;
  }
  return tokens;
}

ActionChunk tokens_to_chunk(const Eigen::MatrixXd& tokens, int n_nodes) {
  ActionChunk chunk;
  for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
    NodeState s;
    s.positions = Eigen::Map<const Eigen::Matrix3Xd>(tokens.col(t).data(), 3, n_nodes);
    s.gripper = tokens(3 * n_nodes, t);
    chunk.steps.push_back(std::move(s));
  }
  return chunk;
}

DenoiserModel make_denoiser(const DenoiserConfig& config, Rng& rng) {
  DenoiserModel m = build_denoiser(config);
  m.p1.init(rng);
  m.p2.init(rng);
  m.cproj.init(rng);
  m.e1.init(rng);
  m.e2.init(rng);
  m.token_in.init(rng);
  for (DenoiserBlock& block : m.blocks) block.init(rng);
  if (config.unet) {
    m.down.init(rng);
    m.up.init(rng);
    m.fuse.init(rng);
  }
  m.head.init(rng, 0.0);
  return m;
}

Eigen::MatrixXd encode_observation(const DenoiserModel& model, const Obs& obs) {
  const int To = model.config.obs_frames;
  const int P = model.config.points;
  if (static_cast<int>(obs.point_sets.size()) != To || static_cast<int>(obs.proprio.size()) != To)
    throw std::invalid_argument("encode_observation: wrong number of frames");
  Eigen::MatrixXd points(3, To * P);
  Eigen::MatrixXd proprio(model.config.proprio_dim(), To);
  for (int f = 0; f < To; ++f) {
    if (obs.point_sets[static_cast<std::size_t>(f)].cols() != P)
      throw std::invalid_argument("encode_observation: wrong point count");
    points.middleCols(f * P, P) = obs.point_sets[static_cast<std::size_t>(f)];
    const NodeState& s = obs.proprio[static_cast<std::size_t>(f)];
    if (s.positions.cols() != model.config.n_nodes)
      throw std::invalid_argument("encode_observation: wrong proprio node count");
    proprio.col(f).head(3 * model.config.n_nodes) =
        Eigen::Map<const Eigen::VectorXd>(s.positions.data(), 3 * model.config.n_nodes);
    proprio(3 * model.config.n_nodes, f) = s.gripper;
  }
  EncoderCache cache;
  encoder_forward(model, points, proprio, cache);
  return cache.cond;
}

ActionChunk predict_sample(const DenoiserModel& model, const ActionChunk& noised,
                           const Eigen::MatrixXd& cond, int k) {
  if (model.config.action_override != 0)
    throw std::invalid_argument("predict_sample: model does not use the node representation");
  return tokens_to_chunk(predict_tokens(model, chunk_to_tokens(noised, model.config.n_nodes), cond, k),
                         model.config.n_nodes);
}

Eigen::MatrixXd predict_tokens(const DenoiserModel& model, const Eigen::MatrixXd& noised,
                               const Eigen::MatrixXd& cond, int k) {
  if (noised.rows() != model.config.token_dim() || noised.cols() != model.config.horizon)
    throw std::invalid_argument("predict_tokens: wrong chunk shape");
  if (cond.rows() != model.config.cond_width || cond.cols() != model.config.obs_frames)
    throw std::invalid_argument("predict_tokens: condition shape mismatch");
  BackboneCache cache;
  return backbone_forward(model, noised, cond, Eigen::VectorXd::Constant(1, static_cast<double>(k)), cache);
}

double denoiser_loss(const DenoiserModel& model, const DenoiserBatch& batch, DenoiserModel* grads) {
  const int T = model.config.horizon;
  const int To = model.config.obs_frames;
  const int P = model.config.points;
  const int B = static_cast<int>(batch.steps.size());
  if (B == 0) throw std::invalid_argument("denoiser_loss: empty batch");
  if (batch.noised.cols() != B * T || batch.target.cols() != B * T ||
      batch.noised.rows() != model.config.token_dim() || batch.target.rows() != model.config.token_dim() ||
      batch.points.cols() != static_cast<Eigen::Index>(B) * To * P || batch.proprio.cols() != B * To ||
      batch.proprio.rows() != model.config.proprio_dim())
    throw std::invalid_argument("denoiser_loss: batch shape mismatch");

  EncoderCache enc;
  encoder_forward(model, batch.points, batch.proprio, enc);
  BackboneCache bb;
  const Eigen::MatrixXd pred = backbone_forward(model, batch.noised, enc.cond, batch.steps, bb);
  const Eigen::MatrixXd diff = pred - batch.target;
  const double n_elems = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n_elems;
  if (grads != nullptr) {
    const Eigen::MatrixXd d_pred = (2.0 / n_elems) * diff;
    const Eigen::MatrixXd d_cond = backbone_backward(model, enc.cond, batch.steps, d_pred, bb, *grads);
    encoder_backward(model, enc, d_cond, *grads);
  }
  return loss;
}

void save_denoiser(const DenoiserModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_denoiser: cannot open " + path);
  out.write(kMagic, 8);
  const DenoiserConfig& c = model.config;
  const std::int64_t fields[11] = {c.action_override, c.n_nodes, c.horizon, c.obs_frames, c.points, c.width,
                                   c.cond_width, c.blocks, c.point_hidden, c.mlp_mult, c.unet ? 1 : 0};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  out.write(reinterpret_cast<const char*>(&model.chain_hash), sizeof(model.chain_hash));
  out.write(reinterpret_cast<const char*>(&model.ikmlp_hash), sizeof(model.ikmlp_hash));
  write_vec(out, model.act_mean);
  write_vec(out, model.act_scale);
  write_vec(out, model.prop_mean);
  write_vec(out, model.prop_scale);
  write_vec(out, model.point_mean);
  write_vec(out, model.point_scale);
  save_params(out, const_cast<DenoiserModel&>(model).params());
  if (!out) throw std::runtime_error("save_denoiser: write failed");
}

DenoiserModel load_denoiser(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_denoiser: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_denoiser: not a KADPDN01 checkpoint");
  std::int64_t fields[11];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  if (!in) throw std::runtime_error("load_denoiser: truncated header");
  DenoiserConfig c;
  c.action_override = static_cast<int>(fields[0]);
  c.n_nodes = static_cast<int>(fields[1]);
  c.horizon = static_cast<int>(fields[2]);
  c.obs_frames = static_cast<int>(fields[3]);
  c.points = static_cast<int>(fields[4]);
  c.width = static_cast<int>(fields[5]);
  c.cond_width = static_cast<int>(fields[6]);
  c.blocks = static_cast<int>(fields[7]);
  c.point_hidden = static_cast<int>(fields[8]);
  c.mlp_mult = static_cast<int>(fields[9]);
  c.unet = fields[10] != 0;
  DenoiserModel model = build_denoiser(c);
  in.read(reinterpret_cast<char*>(&model.chain_hash), sizeof(model.chain_hash));
  in.read(reinterpret_cast<char*>(&model.ikmlp_hash), sizeof(model.ikmlp_hash));
  model.act_mean = read_vec(in);
  model.act_scale = read_vec(in);
  model.prop_mean = read_vec(in);
  model.prop_scale = read_vec(in);
  const Eigen::VectorXd pm = read_vec(in);
  const Eigen::VectorXd ps = read_vec(in);
  if (pm.size() != 3 || ps.size() != 3 || model.act_mean.size() != c.token_dim() ||
      model.prop_mean.size() != c.proprio_dim())
    throw std::runtime_error("load_denoiser: malformed normalization block");
  model.point_mean = pm;
  model.point_scale = ps;
  load_params(in, model.params());
  return model;
}

}  // namespace kadp
