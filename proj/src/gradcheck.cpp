#include "pulsar/gradcheck.hpp"

#include <cmath>
#include <memory>

#include "pulsar/rng.hpp"

namespace pulsar {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// keeps |x| away from the ReLU kink so the central difference stays one-sided
Tensor random_signed_offset(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  t.set_requires_grad(true);
  return t;
}

std::vector<Tensor> toy_adjacency(Rng& rng, int v) {
  std::vector<Tensor> adj;
  Tensor identity(Shape{v, v});
  for (int i = 0; i < v; ++i) identity.data()[static_cast<std::size_t>(i) * v + i] = 1.0;
  adj.push_back(identity);
  for (int k = 1; k < 3; ++k) {
    Tensor m(Shape{v, v});
    for (int i = 0; i < v; ++i) {
      double degree = 0.0;
      for (int j = 0; j < v; ++j) {
        const double e = rng.bernoulli(0.4) ? 1.0 : 0.0;
        m.data()[static_cast<std::size_t>(i) * v + j] = e;
        degree += e;
      }
      if (degree > 0.0)
        for (int j = 0; j < v; ++j) m.data()[static_cast<std::size_t>(i) * v + j] /= degree;
    }
    adj.push_back(m);
  }
  return adj;
}

ModelConfig toy_model_config(bool adaptive) {
  ModelConfig cfg;
  cfg.input_channels = 3;
  cfg.frames = 6;
  cfg.vertices = 5;
  cfg.temporal_kernel = 3;
  cfg.channels = {4};
  cfg.embed_channels = 2;
  cfg.dropout = 0.25;
  cfg.adaptive = adaptive;
  return cfg;
}

struct Case {
  std::string name;
  bool sample_coords = false;
  // fills the checked inputs and a forward closure over them for one round
  std::function<void(Rng&, std::vector<Tensor>&, std::function<Tensor(Tape&)>&)> setup;
};

Case primitive_case(std::string name, std::function<std::vector<Tensor>(Rng&)> make,
                    std::function<Tensor(Tape&, std::vector<Tensor>&)> op) {
  Case c;
  c.name = std::move(name);
  c.setup = [make = std::move(make), op = std::move(op)](Rng& rng, std::vector<Tensor>& inputs,
                                                         std::function<Tensor(Tape&)>& fwd) {
    inputs = make(rng);
    std::vector<Tensor> captured = inputs;  // handles share storage with `inputs`
    fwd = [captured, op](Tape& tape) mutable { return op(tape, captured); };
  };
  return c;
}

Case block_case(bool adaptive) {
  Case c;
  c.name = adaptive ? "block_adaptive" : "block_baseline";
  c.sample_coords = true;
  c.setup = [adaptive](Rng& rng, std::vector<Tensor>& inputs, std::function<Tensor(Tape&)>& fwd) {
    const ModelConfig cfg = toy_model_config(adaptive);
    auto adj = std::make_shared<std::vector<Tensor>>(toy_adjacency(rng, cfg.vertices));
    auto params = std::make_shared<NetworkParamsT<double>>(init_params<double>(cfg, rng.next_u64()));
    inputs.clear();
    inputs.push_back(random_tensor(rng, {2, cfg.input_channels, cfg.frames, cfg.vertices}));
    for (auto& [name, t] : params->named_params())
      if (name.rfind("block1.", 0) == 0) inputs.push_back(*t);
    auto stats0 = std::make_shared<std::vector<std::vector<double>>>();
    for (auto& [name, s] : params->named_stats()) stats0->push_back(*s);
    const Tensor x = inputs[0];
    const BlockMode mode = adaptive ? BlockMode::Adaptive : BlockMode::Baseline;
    const double dropout = cfg.dropout;
    fwd = [params, adj, stats0, x, mode, dropout](Tape& tape) {
      std::size_t i = 0;
      for (auto& [name, s] : params->named_stats()) *s = (*stats0)[i++];
      return block_forward(tape, x, params->blocks[0], *adj, mode, /*train=*/true, dropout);
    };
  };
  return c;
}

Case network_case(bool adaptive) {
  Case c;
  c.name = adaptive ? "network_adaptive" : "network_baseline";
  c.sample_coords = true;
  c.setup = [adaptive](Rng& rng, std::vector<Tensor>& inputs, std::function<Tensor(Tape&)>& fwd) {
    ModelConfig cfg = toy_model_config(adaptive);
    cfg.input_channels = 2;
    cfg.channels = {3, 4};
    auto adj = std::make_shared<std::vector<Tensor>>(toy_adjacency(rng, cfg.vertices));
    auto params = std::make_shared<NetworkParamsT<double>>(init_params<double>(cfg, rng.next_u64()));
    inputs.clear();
    inputs.push_back(random_tensor(rng, {2, cfg.input_channels, cfg.frames, cfg.vertices}));
    for (auto& [name, t] : params->named_params()) inputs.push_back(*t);
    auto stats0 = std::make_shared<std::vector<std::vector<double>>>();
    for (auto& [name, s] : params->named_stats()) stats0->push_back(*s);
    const Tensor x = inputs[0];
    fwd = [params, adj, stats0, x](Tape& tape) {
      std::size_t i = 0;
      for (auto& [name, s] : params->named_stats()) *s = (*stats0)[i++];
      return network_forward(tape, x, *params, *adj, /*train=*/true);
    };
  };
  return c;
}

double loss_against(const Tensor& out, const Tensor& target) {
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) loss += out.data()[i] * target.data()[i];
  return loss;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& options) {
  std::vector<Case> cases;
  cases.push_back(primitive_case(
      "add", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.add(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "sub", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.sub(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "mul", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.mul(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "scale", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.scale(in[0], 1.7); }));
  cases.push_back(primitive_case(
      "matmul", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.matmul(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "affine",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {2})};
      },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.affine(in[0], in[1], in[2]); }));
  cases.push_back(primitive_case(
      "conv1x1",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5}), random_tensor(rng, {4, 3}), random_tensor(rng, {4})};
      },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.conv1x1(in[0], in[1], in[2]); }));
  cases.push_back(primitive_case(
      "temporal_conv",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {2, 3, 6, 4}), random_tensor(rng, {4, 3, 3}), random_tensor(rng, {4})};
      },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.temporal_conv(in[0], in[1], in[2]); }));
  cases.push_back(primitive_case(
      "batch_norm_train",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {3, 4, 5, 2}), random_tensor(rng, {4}, 0.5, 1.5), random_tensor(rng, {4})};
      },
      [](Tape& tape, std::vector<Tensor>& in) {
        std::vector<double> mean(4, 0.0), var(4, 1.0);
        return tape.batch_norm(in[0], in[1], in[2], mean, var, BnLayout::PerChannel, true);
      }));
  cases.push_back(primitive_case(
      "batch_norm_train_cv",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {3, 2, 4, 5}), random_tensor(rng, {10}, 0.5, 1.5), random_tensor(rng, {10})};
      },
      [](Tape& tape, std::vector<Tensor>& in) {
        std::vector<double> mean(10, 0.0), var(10, 1.0);
        return tape.batch_norm(in[0], in[1], in[2], mean, var, BnLayout::PerChannelVertex, true);
      }));
  cases.push_back(primitive_case(
      "batch_norm_eval",
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor(rng, {2, 4, 3, 2}), random_tensor(rng, {4}, 0.5, 1.5), random_tensor(rng, {4})};
      },
      [](Tape& tape, std::vector<Tensor>& in) {
        std::vector<double> mean{0.1, -0.2, 0.05, 0.3};
        std::vector<double> var{1.2, 0.8, 1.0, 0.6};
        return tape.batch_norm(in[0], in[1], in[2], mean, var, BnLayout::PerChannel, false);
      }));
  cases.push_back(primitive_case(
      "relu", [](Rng& rng) { return std::vector<Tensor>{random_signed_offset(rng, {2, 3, 4, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.relu(in[0]); }));
  cases.push_back(primitive_case(
      "softmax", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 5, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.softmax(in[0], 1); }));
  cases.push_back(primitive_case(
      "dropout", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.dropout(in[0], 0.3, true); }));
  cases.push_back(primitive_case(
      "global_avg_pool", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.global_avg_pool(in[0]); }));
  cases.push_back(primitive_case(
      "reduce_sum", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.reduce_sum(in[0]); }));
  cases.push_back(primitive_case(
      "expand0", [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {3, 4})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.expand0(in[0], 2); }));
  cases.push_back(primitive_case(
      "vertex_aggregate",
      [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5}), random_tensor(rng, {5, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.vertex_aggregate(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "vertex_aggregate_per_sample",
      [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5}), random_tensor(rng, {2, 5, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.vertex_aggregate(in[0], in[1]); }));
  cases.push_back(primitive_case(
      "vertex_similarity",
      [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {2, 3, 4, 5}), random_tensor(rng, {2, 3, 4, 5})}; },
      [](Tape& tape, std::vector<Tensor>& in) { return tape.vertex_similarity(in[0], in[1]); }));
  cases.push_back(block_case(false));
  cases.push_back(block_case(true));
  cases.push_back(network_case(false));
  cases.push_back(network_case(true));

  std::vector<GradCheckResult> results;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    double max_err = 0.0;
    for (int round = 0; round < options.rounds; ++round) {
      Rng rng(derive_seed(options.seed, ci * 1000 + static_cast<std::uint64_t>(round)));
      const std::uint64_t tape_seed = derive_seed(options.seed, 0xface + ci * 1000 + static_cast<std::uint64_t>(round));

      std::vector<Tensor> inputs;
      std::function<Tensor(Tape&)> fwd;
      c.setup(rng, inputs, fwd);

      // analytic pass
      Tape tape(tape_seed);
      Tensor out = fwd(tape);
      Tensor target(out.shape());
      for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = rng.uniform(-1.0, 1.0);
      tape.backward(tape.reduce_sum(tape.mul(out, target)));
      std::vector<std::vector<double>> analytic;
      analytic.reserve(inputs.size());
      for (const Tensor& in : inputs) analytic.push_back(tape.grad(in));
      if (options.corrupt == c.name && !analytic.empty() && !analytic[0].empty()) analytic[0][0] += 0.5;

      const auto eval_loss = [&](void) {
        Tape fd_tape(tape_seed, /*grad_enabled=*/false);
        return loss_against(fwd(fd_tape), target);
      };

      // coordinate list: exhaustive for primitives, sampled for composites
      std::vector<std::pair<std::size_t, std::size_t>> coords;
      if (c.sample_coords) {
        std::size_t total = 0;
        for (const Tensor& in : inputs) total += in.size();
        for (int s = 0; s < options.sampled_coords; ++s) {
          std::size_t flat = rng.next_u64() % total;
          for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (flat < inputs[i].size()) {
              coords.emplace_back(i, flat);
              break;
            }
            flat -= inputs[i].size();
          }
        }
        if (options.corrupt == c.name) coords.emplace_back(0, 0);
      } else {
        for (std::size_t i = 0; i < inputs.size(); ++i)
          for (std::size_t j = 0; j < inputs[i].size(); ++j) coords.emplace_back(i, j);
      }

      for (const auto& [i, j] : coords) {
        const double orig = inputs[i].data()[j];
        inputs[i].data()[j] = orig + options.fd_epsilon;
        const double f_plus = eval_loss();
        inputs[i].data()[j] = orig - options.fd_epsilon;
        const double f_minus = eval_loss();
        inputs[i].data()[j] = orig;
        const double numeric = (f_plus - f_minus) / (2.0 * options.fd_epsilon);
        max_err = std::max(max_err, gradcheck_rel_err(analytic[i][j], numeric));
      }
    }
    results.push_back(GradCheckResult{c.name, max_err, max_err < options.tolerance});
  }
  return results;
}

}  // namespace pulsar
