#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pulsar/errors.hpp"
#include "pulsar/hand_graph.hpp"
#include "pulsar/rng.hpp"
#include "pulsar/tape.hpp"
#include "pulsar/tensor.hpp"

namespace pulsar {

enum class BlockMode { Baseline, Adaptive };

struct ModelConfig {
  int input_channels = 2;  // x-y coordinates
  int frames = 80;
  int vertices = HandGraph::vertex_count;
  int subset_count = 3;          // K_v
  int temporal_kernel = 9;       // K_t, odd
  std::vector<int> channels{16, 32};
  double dropout = 0.5;
  bool adaptive = false;
  int embed_channels = 4;  // C_e for the data-dependent adjacency

  BlockMode mode() const { return adaptive ? BlockMode::Adaptive : BlockMode::Baseline; }

  void validate() const {
    if (input_channels <= 0 || frames <= 0 || vertices <= 0 || subset_count <= 0 || embed_channels <= 0)
      throw ConfigError("model: dimensions must be positive");
    if (temporal_kernel <= 0 || temporal_kernel % 2 == 0) throw ConfigError("model: temporal kernel must be odd");
    if (channels.empty()) throw ConfigError("model: channel plan must not be empty");
    int prev = input_channels;
    for (int c : channels) {
      if (c <= prev) throw ConfigError("model: channel plan must be strictly increasing");
      prev = c;
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
  }
};

template <class S>
struct BnParamsT {
  TensorT<S> gamma, beta;
  std::vector<S> run_mean, run_var;

  static BnParamsT make(int features) {
    BnParamsT bn;
    bn.gamma = TensorT<S>::ones(Shape{features});
    bn.gamma.set_requires_grad(true);
    bn.beta = TensorT<S>::zeros(Shape{features});
    bn.beta.set_requires_grad(true);
    bn.run_mean.assign(static_cast<std::size_t>(features), S(0));
    bn.run_var.assign(static_cast<std::size_t>(features), S(1));
    return bn;
  }
};

// One spatio-temporal block: per-subset 1x1 maps over the aggregated
// vertices, then BN/ReLU/dropout, a Kt x 1 temporal convolution with BN, and
// a residual joined before the final ReLU.
template <class S>
struct BlockParamsT {
  int in_channels = 0, out_channels = 0;
  std::vector<TensorT<S>> w;       // K_v of [Cout, Cin]
  std::vector<TensorT<S>> w_bias;  // K_v of [Cout]
  std::vector<TensorT<S>> mask;    // M_k, V x V, baseline mode
  std::vector<TensorT<S>> badj;    // B_k, V x V, adaptive mode
  TensorT<S> theta_w, theta_b;     // C_e x Cin embedding + bias
  TensorT<S> phi_w, phi_b;
  TensorT<S> tconv_w, tconv_b;  // [Cout, Cout, Kt], [Cout]
  TensorT<S> res_w;             // [Cout, Cin] when channels change
  BnParamsT<S> bn_spatial, bn_temporal;

  bool has_residual_map() const { return in_channels != out_channels; }
};

template <class S>
struct NetworkParamsT {
  ModelConfig config;
  BnParamsT<S> input_bn;  // C*V features
  std::vector<BlockParamsT<S>> blocks;
  TensorT<S> fc_w, fc_b;  // [C_last, 1], [1]

  // Stable enumeration of the learnable arrays for the active mode; running
  // BN statistics are serialized separately.
  std::vector<std::pair<std::string, TensorT<S>*>> named_params();
  std::vector<std::pair<std::string, std::vector<S>*>> named_stats();
};

// Fixed adjacency subsets as tensors in the training precision.
template <class S>
std::vector<TensorT<S>> adjacency_tensors(const PartitionedAdjacency& part) {
  std::vector<TensorT<S>> out;
  out.reserve(static_cast<std::size_t>(part.subset_count));
  for (const auto& mat : part.subsets) {
    std::vector<S> vals(mat.size());
    for (std::size_t i = 0; i < mat.size(); ++i) vals[i] = static_cast<S>(mat[i]);
    out.emplace_back(Shape{part.vertices, part.vertices}, std::move(vals));
  }
  return out;
}

template <class S>
NetworkParamsT<S> init_params(const ModelConfig& config, std::uint64_t seed);

// Data-dependent adjacency: 1x1 embeddings of the input, per-sample vertex
// similarity, and a row softmax.
template <class S>
TensorT<S> compute_ck(TapeT<S>& tape, const TensorT<S>& x, const BlockParamsT<S>& params);

template <class S>
TensorT<S> block_forward(TapeT<S>& tape, const TensorT<S>& x, BlockParamsT<S>& params,
                         const std::vector<TensorT<S>>& adjacency, BlockMode mode, bool train, double dropout);

// Input BN over C x V features, two blocks, GAP, and the single-logit head.
template <class S>
TensorT<S> network_forward(TapeT<S>& tape, const TensorT<S>& batch, NetworkParamsT<S>& params,
                           const std::vector<TensorT<S>>& adjacency, bool train);

// ---- implementation ----

template <class S>
std::vector<std::pair<std::string, TensorT<S>*>> NetworkParamsT<S>::named_params() {
  std::vector<std::pair<std::string, TensorT<S>*>> out;
  out.emplace_back("input_bn.gamma", &input_bn.gamma);
  out.emplace_back("input_bn.beta", &input_bn.beta);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& blk = blocks[b];
    const std::string prefix = "block" + std::to_string(b + 1) + ".";
    for (std::size_t k = 0; k < blk.w.size(); ++k) {
      out.emplace_back(prefix + "w" + std::to_string(k), &blk.w[k]);
      out.emplace_back(prefix + "w_bias" + std::to_string(k), &blk.w_bias[k]);
      if (config.adaptive)
        out.emplace_back(prefix + "badj" + std::to_string(k), &blk.badj[k]);
      else
        out.emplace_back(prefix + "mask" + std::to_string(k), &blk.mask[k]);
    }
    if (config.adaptive) {
      out.emplace_back(prefix + "theta_w", &blk.theta_w);
      out.emplace_back(prefix + "theta_b", &blk.theta_b);
      out.emplace_back(prefix + "phi_w", &blk.phi_w);
      out.emplace_back(prefix + "phi_b", &blk.phi_b);
    }
    out.emplace_back(prefix + "tconv_w", &blk.tconv_w);
    out.emplace_back(prefix + "tconv_b", &blk.tconv_b);
    if (blk.has_residual_map()) out.emplace_back(prefix + "res_w", &blk.res_w);
    out.emplace_back(prefix + "bn_spatial.gamma", &blk.bn_spatial.gamma);
    out.emplace_back(prefix + "bn_spatial.beta", &blk.bn_spatial.beta);
    out.emplace_back(prefix + "bn_temporal.gamma", &blk.bn_temporal.gamma);
    out.emplace_back(prefix + "bn_temporal.beta", &blk.bn_temporal.beta);
  }
  out.emplace_back("fc.w", &fc_w);
  out.emplace_back("fc.b", &fc_b);
  return out;
}

template <class S>
std::vector<std::pair<std::string, std::vector<S>*>> NetworkParamsT<S>::named_stats() {
  std::vector<std::pair<std::string, std::vector<S>*>> out;
  out.emplace_back("input_bn.run_mean", &input_bn.run_mean);
  out.emplace_back("input_bn.run_var", &input_bn.run_var);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& blk = blocks[b];
    const std::string prefix = "block" + std::to_string(b + 1) + ".";
    out.emplace_back(prefix + "bn_spatial.run_mean", &blk.bn_spatial.run_mean);
    out.emplace_back(prefix + "bn_spatial.run_var", &blk.bn_spatial.run_var);
    out.emplace_back(prefix + "bn_temporal.run_mean", &blk.bn_temporal.run_mean);
    out.emplace_back(prefix + "bn_temporal.run_var", &blk.bn_temporal.run_var);
  }
  return out;
}

namespace detail {

template <class S>
TensorT<S> scaled_uniform(Rng& rng, Shape shape, int fan_in, int fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  TensorT<S> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <class S>
TensorT<S> const_param(Shape shape, S value) {
  TensorT<S> t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

}  // namespace detail

template <class S>
NetworkParamsT<S> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0xc0ffee));
  NetworkParamsT<S> params;
  params.config = config;
  params.input_bn = BnParamsT<S>::make(config.input_channels * config.vertices);

  const int v = config.vertices;
  int cin = config.input_channels;
  for (int cout : config.channels) {
    BlockParamsT<S> blk;
    blk.in_channels = cin;
    blk.out_channels = cout;
    for (int k = 0; k < config.subset_count; ++k) {
      blk.w.push_back(detail::scaled_uniform<S>(rng, Shape{cout, cin}, cin, cout));
      blk.w_bias.push_back(detail::const_param<S>(Shape{cout}, S(0)));
      blk.mask.push_back(detail::const_param<S>(Shape{v, v}, S(1)));  // all-ones: init equals unmasked aggregation
      blk.badj.push_back(detail::const_param<S>(Shape{v, v}, S(0)));  // learned from zero
    }
    blk.theta_w = detail::scaled_uniform<S>(rng, Shape{config.embed_channels, cin}, cin, config.embed_channels);
    blk.theta_b = detail::const_param<S>(Shape{config.embed_channels}, S(0));
    blk.phi_w = detail::scaled_uniform<S>(rng, Shape{config.embed_channels, cin}, cin, config.embed_channels);
    blk.phi_b = detail::const_param<S>(Shape{config.embed_channels}, S(0));
    const int kt = config.temporal_kernel;
    blk.tconv_w = detail::scaled_uniform<S>(rng, Shape{cout, cout, kt}, cout * kt, cout * kt);
    blk.tconv_b = detail::const_param<S>(Shape{cout}, S(0));
    if (blk.has_residual_map()) blk.res_w = detail::scaled_uniform<S>(rng, Shape{cout, cin}, cin, cout);
    blk.bn_spatial = BnParamsT<S>::make(cout);
    blk.bn_temporal = BnParamsT<S>::make(cout);
    params.blocks.push_back(std::move(blk));
    cin = cout;
  }
  params.fc_w = detail::scaled_uniform<S>(rng, Shape{cin, 1}, cin, 1);
  params.fc_b = detail::const_param<S>(Shape{1}, S(0));
  return params;
}

template <class S>
TensorT<S> compute_ck(TapeT<S>& tape, const TensorT<S>& x, const BlockParamsT<S>& params) {
  TensorT<S> theta = tape.conv1x1(x, params.theta_w, params.theta_b);
  TensorT<S> phi = tape.conv1x1(x, params.phi_w, params.phi_b);
  TensorT<S> sim = tape.vertex_similarity(theta, phi);
  return tape.softmax(sim, 2);  // rows over the second vertex axis sum to 1
}

template <class S>
TensorT<S> block_forward(TapeT<S>& tape, const TensorT<S>& x, BlockParamsT<S>& params,
                         const std::vector<TensorT<S>>& adjacency, BlockMode mode, bool train, double dropout) {
  if (x.ndim() != 4 || x.dim(1) != params.in_channels)
    throw ShapeError("block_forward: input " + shape_str(x.shape()) + " does not match block channels " + std::to_string(params.in_channels));
  if (adjacency.size() != params.w.size()) throw ShapeError("block_forward: adjacency subset count mismatch");
  const int n = x.dim(0);

  TensorT<S> ck;
  if (mode == BlockMode::Adaptive) ck = compute_ck(tape, x, params);

  TensorT<S> spatial;
  for (std::size_t k = 0; k < params.w.size(); ++k) {
    TensorT<S> agg;
    if (mode == BlockMode::Baseline) {
      agg = tape.mul(adjacency[k], params.mask[k]);  // A_k masked entrywise
    } else {
      TensorT<S> fixed = tape.add(adjacency[k], params.badj[k]);  // A_k + B_k
      agg = tape.add(tape.expand0(fixed, n), ck);                 // + C_k per sample
    }
    TensorT<S> gathered = tape.vertex_aggregate(x, agg);
    TensorT<S> mixed = tape.conv1x1(gathered, params.w[k], params.w_bias[k]);
    spatial = spatial.defined() ? tape.add(spatial, mixed) : mixed;
  }

  spatial = tape.batch_norm(spatial, params.bn_spatial.gamma, params.bn_spatial.beta, params.bn_spatial.run_mean,
                            params.bn_spatial.run_var, BnLayout::PerChannel, train);
  spatial = tape.relu(spatial);
  spatial = tape.dropout(spatial, dropout, train);

  TensorT<S> temporal = tape.temporal_conv(spatial, params.tconv_w, params.tconv_b);
  temporal = tape.batch_norm(temporal, params.bn_temporal.gamma, params.bn_temporal.beta, params.bn_temporal.run_mean,
                             params.bn_temporal.run_var, BnLayout::PerChannel, train);

  TensorT<S> residual = params.has_residual_map() ? tape.conv1x1(x, params.res_w) : x;
  return tape.relu(tape.add(temporal, residual));
}

template <class S>
TensorT<S> network_forward(TapeT<S>& tape, const TensorT<S>& batch, NetworkParamsT<S>& params,
                           const std::vector<TensorT<S>>& adjacency, bool train) {
  const ModelConfig& cfg = params.config;
  if (batch.ndim() != 4 || batch.dim(1) != cfg.input_channels || batch.dim(2) != cfg.frames || batch.dim(3) != cfg.vertices)
    throw ShapeError("network_forward: expected batch [N," + std::to_string(cfg.input_channels) + "," +
                     std::to_string(cfg.frames) + "," + std::to_string(cfg.vertices) + "], got " + shape_str(batch.shape()));

  TensorT<S> h = tape.batch_norm(batch, params.input_bn.gamma, params.input_bn.beta, params.input_bn.run_mean,
                                 params.input_bn.run_var, BnLayout::PerChannelVertex, train);
  for (auto& blk : params.blocks) h = block_forward(tape, h, blk, adjacency, cfg.mode(), train, cfg.dropout);
  TensorT<S> pooled = tape.global_avg_pool(h);
  return tape.affine(pooled, params.fc_w, params.fc_b);
}

}  // namespace pulsar
