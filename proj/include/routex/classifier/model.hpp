#pragma once

// Edge classifier: node encoder (separate depot projection, Transformer
// layers without positional encoding), edge embedding from both end nodes and
// the global state, causally masked Transformer decoder, linear softmax head.

#include <random>
#include <string>
#include <vector>

#include "routex/classifier/features.hpp"
#include "routex/classifier/transformer.hpp"

namespace routex {

struct ModelConfig {
  ProblemKind kind = ProblemKind::TSPTW;
  int hidden_dim = 128;
  int n_heads = 8;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int n_classes = 2;
  int node_feature_dim = 4;
  int depot_feature_dim = 4;
  int state_dim = 1;
  FeatureScales scales;

  static ModelConfig for_kind(ProblemKind kind, int n_classes) {
    ModelConfig c;
    c.kind = kind;
    c.n_classes = n_classes;
    const auto dims = feature_dims(kind);
    c.node_feature_dim = dims.node;
    c.depot_feature_dim = dims.depot;
    c.state_dim = dims.state;
    return c;
  }

  void validate() const {
    if (hidden_dim < 1 || n_heads < 1 || hidden_dim % n_heads != 0)
      throw Error("invalid_model_config", "hidden_dim must be a positive multiple of n_heads");
    if (encoder_layers < 0 || decoder_layers < 0 || n_classes < 1 || node_feature_dim < 1 || depot_feature_dim < 1)
      throw Error("invalid_model_config", "dimensions must be positive");
  }
};

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"kind", std::string(to_string(c.kind))},
           {"hidden_dim", c.hidden_dim},
           {"n_heads", c.n_heads},
           {"encoder_layers", c.encoder_layers},
           {"decoder_layers", c.decoder_layers},
           {"n_classes", c.n_classes},
           {"node_feature_dim", c.node_feature_dim},
           {"depot_feature_dim", c.depot_feature_dim},
           {"state_dim", c.state_dim},
           {"time_scale", c.scales.time}};
}

inline void from_json(const json& j, ModelConfig& c) {
  c.kind = parse_kind(j.at("kind").get<std::string>());
  c.hidden_dim = j.at("hidden_dim");
  c.n_heads = j.at("n_heads");
  c.encoder_layers = j.at("encoder_layers");
  c.decoder_layers = j.at("decoder_layers");
  c.n_classes = j.at("n_classes");
  c.node_feature_dim = j.at("node_feature_dim");
  c.depot_feature_dim = j.at("depot_feature_dim");
  c.state_dim = j.at("state_dim");
  c.scales.time = j.value("time_scale", 10.0);
}

template <typename S>
struct ModelParams {
  using M = nn::Mat<S>;
  M w_depot, b_depot;  // H x D', 1 x H
  M w_node, b_node;    // H x D, 1 x H
  std::vector<nn::TransformerLayerParams<S>> encoder;
  M w_edge;            // H x (2H + D_st)
  std::vector<nn::TransformerLayerParams<S>> decoder;
  M w_dec, b_dec;      // C x H, 1 x C

  /// Zero-filled parameters with the configured shapes.
  static ModelParams zeros(const ModelConfig& c) {
    const int h = c.hidden_dim;
    ModelParams p;
    p.w_depot = M::Zero(h, c.depot_feature_dim);
    p.b_depot = M::Zero(1, h);
    p.w_node = M::Zero(h, c.node_feature_dim);
    p.b_node = M::Zero(1, h);
    p.encoder.resize(std::size_t(c.encoder_layers));
    for (auto& l : p.encoder) l.resize(h);
    p.w_edge = M::Zero(h, 2 * h + c.state_dim);
    p.decoder.resize(std::size_t(c.decoder_layers));
    for (auto& l : p.decoder) l.resize(h);
    p.w_dec = M::Zero(c.n_classes, h);
    p.b_dec = M::Zero(1, c.n_classes);
    return p;
  }

  /// Weights and biases ~ U(-1/sqrt(d), 1/sqrt(d)) with d the layer's input
  /// width; layer-norm scales 1, shifts 0.
  static ModelParams random(const ModelConfig& c, std::uint64_t seed) {
    auto p = zeros(c);
    std::mt19937_64 rng(seed);
    nn::uniform_init(p.w_depot, std::size_t(c.depot_feature_dim), rng);
    nn::uniform_init(p.b_depot, std::size_t(c.depot_feature_dim), rng);
    nn::uniform_init(p.w_node, std::size_t(c.node_feature_dim), rng);
    nn::uniform_init(p.b_node, std::size_t(c.node_feature_dim), rng);
    for (auto& l : p.encoder) l.init(rng);
    nn::uniform_init(p.w_edge, std::size_t(2 * c.hidden_dim + c.state_dim), rng);
    for (auto& l : p.decoder) l.init(rng);
    nn::uniform_init(p.w_dec, std::size_t(c.hidden_dim), rng);
    nn::uniform_init(p.b_dec, std::size_t(c.hidden_dim), rng);
    return p;
  }

  void visit(const nn::ParamVisitor<S>& fn) {
    fn("depot.w", w_depot);
    fn("depot.b", b_depot);
    fn("node.w", w_node);
    fn("node.b", b_node);
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].visit("encoder." + std::to_string(i), fn);
    fn("edge.w", w_edge);
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].visit("decoder." + std::to_string(i), fn);
    fn("head.w", w_dec);
    fn("head.b", b_dec);
  }

  std::size_t count() {
    std::size_t n = 0;
    visit([&](const std::string&, M& m) { n += std::size_t(m.size()); });
    return n;
  }

  void set_zero() {
    visit([](const std::string&, M& m) { m.setZero(); });
  }

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    auto self = *this;
    std::vector<nn::Mat<T>> flat;
    self.visit([&](const std::string&, M& m) { flat.push_back(m.template cast<T>()); });
    out.encoder.resize(encoder.size());
    out.decoder.resize(decoder.size());
    std::size_t k = 0;
    out.visit([&](const std::string&, nn::Mat<T>& m) { m = flat[k++]; });
    return out;
  }
};

/// Featurized route: everything the network needs, independent of Scalar.
struct EncodedSample {
  std::vector<double> depot;
  std::vector<std::vector<double>> nodes;
  std::vector<Edge> edges;
  std::vector<std::vector<double>> states;  // state before traversing each edge
};

inline EncodedSample encode_sample(const VrpInstance& inst, const Route& route, const ModelConfig& cfg) {
  if (inst.kind != cfg.kind && feature_dims(inst.kind).node != cfg.node_feature_dim)
    throw Error("kind_mismatch", "model expects " + std::string(to_string(cfg.kind)) + " instances");
  auto nf = featurize_nodes(inst, cfg.kind, cfg.scales);
  EncodedSample s;
  s.depot = std::move(nf.depot);
  s.nodes = std::move(nf.nodes);
  s.edges = route.edges();
  for (std::size_t t = 0; t < s.edges.size(); ++t) s.states.push_back(state_vector(inst, cfg.kind, route.states[t], cfg.scales));
  if (!s.states.empty() && int(s.states[0].size()) != cfg.state_dim)
    throw Error("kind_mismatch", "state width does not match the model");
  return s;
}

template <typename S>
struct ForwardCache {
  nn::Mat<S> input_nodes;  // N x D (row 0 unused)
  nn::Mat<S> input_depot;  // 1 x D'
  std::vector<nn::TransformerLayerCache<S>> enc, dec;
  nn::Mat<S> node_emb;     // N x H after the encoder
  nn::Mat<S> edge_in;      // (T-1) x (2H + D_st)
  nn::Mat<S> dec_out;      // (T-1) x H
  nn::Mat<S> probs;        // (T-1) x C
};

template <typename S>
class EdgeClassifier {
 public:
  using M = nn::Mat<S>;

  EdgeClassifier(ModelConfig config, ModelParams<S> params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
  }

  const ModelConfig& config() const { return config_; }
  ModelParams<S>& params() { return params_; }
  const ModelParams<S>& params() const { return params_; }

  /// Node embeddings after the encoder, N x H.
  M encode_nodes(const EncodedSample& s, ForwardCache<S>* cache = nullptr) const {
    const auto n = Eigen::Index(s.nodes.size());
    M x(n, config_.node_feature_dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int d = 0; d < config_.node_feature_dim; ++d) x(i, d) = S(s.nodes[std::size_t(i)][std::size_t(d)]);
    M xd(1, config_.depot_feature_dim);
    for (int d = 0; d < config_.depot_feature_dim; ++d) xd(0, d) = S(s.depot[std::size_t(d)]);
    M h = nn::linear(x, params_.w_node, &params_.b_node);
    h.row(0) = nn::linear(xd, params_.w_depot, &params_.b_depot).row(0);
    if (cache) {
      cache->input_nodes = x;
      cache->input_depot = xd;
      cache->enc.assign(params_.encoder.size(), {});
    }
    for (std::size_t l = 0; l < params_.encoder.size(); ++l)
      h = nn::transformer_forward(params_.encoder[l], h, config_.n_heads, false, cache ? &cache->enc[l] : nullptr);
    return h;
  }

  /// h0_e = W_edge [h_tail || h_head || s], one row per edge.
  M edge_inputs(const M& node_emb, const EncodedSample& s) const {
    const int h = config_.hidden_dim;
    M in(Eigen::Index(s.edges.size()), 2 * h + config_.state_dim);
    for (std::size_t t = 0; t < s.edges.size(); ++t) {
      const auto r = Eigen::Index(t);
      in.row(r).head(h) = node_emb.row(s.edges[t].tail);
      in.row(r).segment(h, h) = node_emb.row(s.edges[t].head);
      for (int d = 0; d < config_.state_dim; ++d) in(r, 2 * h + d) = S(s.states[t][std::size_t(d)]);
    }
    return in;
  }

  /// Per-step class probabilities, (T-1) x C.
  M forward(const EncodedSample& s, ForwardCache<S>* cache = nullptr) const {
    if (s.edges.empty()) return M(0, config_.n_classes);
    const M node_emb = encode_nodes(s, cache);
    M edge_in = edge_inputs(node_emb, s);
    M x = nn::linear(edge_in, params_.w_edge);
    if (cache) cache->dec.assign(params_.decoder.size(), {});
    for (std::size_t l = 0; l < params_.decoder.size(); ++l)
      x = nn::transformer_forward(params_.decoder[l], x, config_.n_heads, true, cache ? &cache->dec[l] : nullptr);
    M logits = nn::linear(x, params_.w_dec, &params_.b_dec);
    M probs = softmax_rows(logits);
    if (cache) {
      cache->node_emb = node_emb;
      cache->edge_in = std::move(edge_in);
      cache->dec_out = std::move(x);
      cache->probs = probs;
    }
    return probs;
  }

  /// Backpropagates dL/dprobs through the whole network, accumulating into `g`.
  void backward(const EncodedSample& s, const ForwardCache<S>& c, const M& dprobs, ModelParams<S>& g) const {
    if (s.edges.empty()) return;
    // softmax Jacobian: dz = p * (g - <g, p>)
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = (dprobs.array() * c.probs.array()).rowwise().sum();
    const M dlogits = c.probs.array() * (dprobs.array().colwise() - dot.array());
    g.w_dec += dlogits.transpose() * c.dec_out;
    g.b_dec.row(0) += dlogits.colwise().sum();
    M dx = dlogits * params_.w_dec;
    for (std::size_t l = params_.decoder.size(); l-- > 0;)
      dx = nn::transformer_backward(params_.decoder[l], c.dec[l], dx, config_.n_heads, g.decoder[l]);
    g.w_edge += dx.transpose() * c.edge_in;
    const M dedge_in = dx * params_.w_edge;
    const int h = config_.hidden_dim;
    M dnode = M::Zero(c.node_emb.rows(), h);
    for (std::size_t t = 0; t < s.edges.size(); ++t) {
      dnode.row(s.edges[t].tail) += dedge_in.row(Eigen::Index(t)).head(h);
      dnode.row(s.edges[t].head) += dedge_in.row(Eigen::Index(t)).segment(h, h);
    }
    for (std::size_t l = params_.encoder.size(); l-- > 0;)
      dnode = nn::transformer_backward(params_.encoder[l], c.enc[l], dnode, config_.n_heads, g.encoder[l]);
    // Row 0 came from the depot projection, the rest from the node projection.
    g.w_depot += dnode.row(0).transpose() * c.input_depot;
    g.b_depot.row(0) += dnode.row(0);
    const auto n = dnode.rows();
    if (n > 1) {
      g.w_node += dnode.bottomRows(n - 1).transpose() * c.input_nodes.bottomRows(n - 1);
      g.b_node.row(0) += dnode.bottomRows(n - 1).colwise().sum();
    }
  }

  std::vector<int> predict(const EncodedSample& s) const { return argmax_rows(forward(s)); }

  static M softmax_rows(const M& logits) {
    M p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const S mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    return p;
  }

  static std::vector<int> argmax_rows(const M& probs) {
    std::vector<int> out(std::size_t(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      Eigen::Index arg;
      probs.row(i).maxCoeff(&arg);
      out[std::size_t(i)] = int(arg);
    }
    return out;
  }

 private:
  ModelConfig config_;
  ModelParams<S> params_;
};

}  // namespace routex
