#pragma once

// Post-norm Transformer layer (multi-head attention, residual + layer norm,
// ReLU feed-forward, residual + layer norm) with a hand-written backward pass.
// Rows of every matrix are sequence positions.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace routex::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLayerNormEps = 1e-5;

/// Visitor over (name, parameter) pairs; used for init, optimizers,
/// checkpoints and gradient checks.
template <typename S>
using ParamVisitor = std::function<void(const std::string&, Mat<S>&)>;

/// y = x W^T + b
template <typename S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>* b = nullptr) {
  Mat<S> y = x * w.transpose();
  if (b) y.rowwise() += b->row(0);
  return y;
}

template <typename S>
void uniform_init(Mat<S>& m, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(u(rng));
}

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
};

template <typename S>
Mat<S> layer_norm(const Mat<S>& z, const Mat<S>& gamma, const Mat<S>& beta, LayerNormCache<S>& cache) {
  const auto n = z.rows();
  const auto h = z.cols();
  cache.xhat.resize(n, h);
  cache.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mu = z.row(i).mean();
    const auto centered = (z.row(i).array() - mu).matrix();
    const S var = centered.squaredNorm() / S(h);
    const S inv = S(1) / std::sqrt(var + S(kLayerNormEps));
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = centered * inv;
  }
  Mat<S> y = cache.xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& gamma, const LayerNormCache<S>& cache, Mat<S>& dgamma,
                           Mat<S>& dbeta) {
  const auto h = dy.cols();
  dgamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * gamma.row(0).array();
  Mat<S> dz(dy.rows(), h);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const S sum = dxhat.row(i).sum();
    const S dot = dxhat.row(i).dot(cache.xhat.row(i));
    dz.row(i) = (cache.inv_std(i) / S(h)) *
                (S(h) * dxhat.row(i).array() - sum - cache.xhat.row(i).array() * dot).matrix();
  }
  return dz;
}

template <typename S>
struct TransformerLayerParams {
  Mat<S> wq, wk, wv, wo;  // H x H; head m owns rows [m*dk, (m+1)*dk) of wq/wk/wv and columns of wo
  Mat<S> w1, b1;          // 4H x H, 1 x 4H
  Mat<S> w2, b2;          // H x 4H, 1 x H
  Mat<S> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // 1 x H

  void resize(int h) {
    wq = wk = wv = wo = Mat<S>::Zero(h, h);
    w1 = Mat<S>::Zero(4 * h, h);
    b1 = Mat<S>::Zero(1, 4 * h);
    w2 = Mat<S>::Zero(h, 4 * h);
    b2 = Mat<S>::Zero(1, h);
    ln1_gamma = ln2_gamma = Mat<S>::Zero(1, h);
    ln1_beta = ln2_beta = Mat<S>::Zero(1, h);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".wq", wq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".wv", wv);
    fn(prefix + ".wo", wo);
    fn(prefix + ".ffn.w1", w1);
    fn(prefix + ".ffn.b1", b1);
    fn(prefix + ".ffn.w2", w2);
    fn(prefix + ".ffn.b2", b2);
    fn(prefix + ".ln1.gamma", ln1_gamma);
    fn(prefix + ".ln1.beta", ln1_beta);
    fn(prefix + ".ln2.gamma", ln2_gamma);
    fn(prefix + ".ln2.beta", ln2_beta);
  }

  void init(std::mt19937_64& rng) {
    const auto h = std::size_t(wq.cols());
    for (auto* m : {&wq, &wk, &wv, &wo}) uniform_init(*m, h, rng);
    uniform_init(w1, h, rng);
    uniform_init(b1, h, rng);
    uniform_init(w2, 4 * h, rng);
    uniform_init(b2, 4 * h, rng);
    ln1_gamma.setOnes();
    ln2_gamma.setOnes();
    ln1_beta.setZero();
    ln2_beta.setZero();
  }
};

template <typename S>
struct TransformerLayerCache {
  Mat<S> x, q, k, v, o;
  std::vector<Mat<S>> attn;  // one n x n matrix per head
  LayerNormCache<S> ln1, ln2;
  Mat<S> y1, pre, act;
};

/// One layer. With `causal`, position i attends to positions 0..i.
template <typename S>
Mat<S> transformer_forward(const TransformerLayerParams<S>& p, const Mat<S>& x, int heads, bool causal,
                           TransformerLayerCache<S>* cache) {
  const auto n = x.rows();
  const int h = int(x.cols());
  const int dk = h / heads;
  const S scale = S(1) / std::sqrt(S(dk));
  Mat<S> q = linear(x, p.wq), k = linear(x, p.wk), v = linear(x, p.wv);
  Mat<S> o(n, h);
  if (cache) cache->attn.assign(std::size_t(heads), Mat<S>());
  for (int m = 0; m < heads; ++m) {
    Mat<S> a = (q.middleCols(m * dk, dk) * k.middleCols(m * dk, dk).transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index visible = causal ? i + 1 : n;
      const S mx = a.row(i).head(visible).maxCoeff();
      a.row(i).head(visible) = (a.row(i).head(visible).array() - mx).exp().matrix();
      a.row(i).head(visible) /= a.row(i).head(visible).sum();
      if (visible < n) a.row(i).tail(n - visible).setZero();
    }
    o.middleCols(m * dk, dk) = a * v.middleCols(m * dk, dk);
    if (cache) cache->attn[std::size_t(m)] = std::move(a);
  }
  const Mat<S> z1 = x + linear(o, p.wo);
  LayerNormCache<S> ln1, ln2;
  Mat<S> y1 = layer_norm(z1, p.ln1_gamma, p.ln1_beta, ln1);
  Mat<S> pre = linear(y1, p.w1, &p.b1);
  Mat<S> act = pre.cwiseMax(S(0));
  const Mat<S> z2 = y1 + linear(act, p.w2, &p.b2);
  Mat<S> y = layer_norm(z2, p.ln2_gamma, p.ln2_beta, ln2);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->ln1 = std::move(ln1);
    cache->ln2 = std::move(ln2);
    cache->y1 = std::move(y1);
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

/// Accumulates parameter gradients into `g` and returns dL/dx.
template <typename S>
Mat<S> transformer_backward(const TransformerLayerParams<S>& p, const TransformerLayerCache<S>& c, const Mat<S>& dy,
                            int heads, TransformerLayerParams<S>& g) {
  const int h = int(c.x.cols());
  const int dk = h / heads;
  const S scale = S(1) / std::sqrt(S(dk));

  const Mat<S> dz2 = layer_norm_backward(dy, p.ln2_gamma, c.ln2, g.ln2_gamma, g.ln2_beta);
  g.w2 += dz2.transpose() * c.act;
  g.b2.row(0) += dz2.colwise().sum();
  Mat<S> dpre = dz2 * p.w2;
  dpre = (c.pre.array() > S(0)).select(dpre, S(0));
  g.w1 += dpre.transpose() * c.y1;
  g.b1.row(0) += dpre.colwise().sum();
  const Mat<S> dy1 = dz2 + dpre * p.w1;

  const Mat<S> dz1 = layer_norm_backward(dy1, p.ln1_gamma, c.ln1, g.ln1_gamma, g.ln1_beta);
  g.wo += dz1.transpose() * c.o;
  const Mat<S> d_o = dz1 * p.wo;

  Mat<S> dq(c.q.rows(), h), dk_(c.k.rows(), h), dv(c.v.rows(), h);
  for (int m = 0; m < heads; ++m) {
    const auto& a = c.attn[std::size_t(m)];
    const auto dom = d_o.middleCols(m * dk, dk);
    dv.middleCols(m * dk, dk) = a.transpose() * dom;
    const Mat<S> da = dom * c.v.middleCols(m * dk, dk).transpose();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = (da.array() * a.array()).rowwise().sum();
    Mat<S> ds = a.array() * (da.array().colwise() - rowdot.array());
    ds *= scale;
    dq.middleCols(m * dk, dk) = ds * c.k.middleCols(m * dk, dk);
    dk_.middleCols(m * dk, dk) = ds.transpose() * c.q.middleCols(m * dk, dk);
  }
  g.wq += dq.transpose() * c.x;
  g.wk += dk_.transpose() * c.x;
  g.wv += dv.transpose() * c.x;
  return dz1 + dq * p.wq + dk_ * p.wk + dv * p.wv;
}

}  // namespace routex::nn
