#include "pulsar/pu_risk.hpp"

#include <cmath>

#include "pulsar/errors.hpp"

namespace pulsar {

namespace {

double stable_sigmoid(double z) {
  // 1 / (1 + e^-z) without overflow on either tail
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  // ln(1 + e^z)
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double mean_loss(std::span<const double> scores, double sign, BaseLoss kind) {
  double acc = 0.0;
  for (double s : scores) acc += base_loss(sign * s, kind);
  return acc / static_cast<double>(scores.size());
}

}  // namespace

BaseLoss base_loss_from_string(const std::string& s) {
  if (s == "sigmoid") return BaseLoss::Sigmoid;
  if (s == "logistic") return BaseLoss::Logistic;
  throw ConfigError("unknown base loss '" + s + "' (expected sigmoid|logistic)");
}

RiskMode risk_mode_from_string(const std::string& s) {
  if (s == "pn") return RiskMode::PN;
  if (s == "pu") return RiskMode::PUUnbiased;
  if (s == "pu-nn") return RiskMode::PUNonNegative;
  throw ConfigError("unknown risk mode '" + s + "' (expected pn|pu|pu-nn)");
}

std::string to_string(BaseLoss k) { return k == BaseLoss::Sigmoid ? "sigmoid" : "logistic"; }

std::string to_string(RiskMode m) {
  switch (m) {
    case RiskMode::PN: return "pn";
    case RiskMode::PUUnbiased: return "pu";
    case RiskMode::PUNonNegative: return "pu-nn";
  }
  return "pn";
}

void RiskConfig::validate() const {
  // PN tolerates the degenerate prior theta_p = 1 (negative term vanishes);
  // the PU estimators need a strict mixture
  if (mode == RiskMode::PN) {
    if (!(theta_p > 0.0 && theta_p <= 1.0)) throw ConfigError("risk: class prior theta_p must lie in (0,1]");
  } else if (!(theta_p > 0.0 && theta_p < 1.0)) {
    throw ConfigError("risk: class prior theta_p must lie in (0,1)");
  }
}

double base_loss(double margin, BaseLoss kind) {
  switch (kind) {
    case BaseLoss::Sigmoid: return stable_sigmoid(-margin);
    case BaseLoss::Logistic: return softplus(-margin);
  }
  return 0.0;
}

double base_loss_derivative(double margin, BaseLoss kind) {
  switch (kind) {
    case BaseLoss::Sigmoid: {
      const double s = stable_sigmoid(margin);
      return -s * (1.0 - s);
    }
    case BaseLoss::Logistic: return -stable_sigmoid(-margin);
  }
  return 0.0;
}

double composite_loss(double margin, BaseLoss kind) { return base_loss(margin, kind) - base_loss(-margin, kind); }

double composite_loss_derivative(double margin, BaseLoss kind) {
  return base_loss_derivative(margin, kind) + base_loss_derivative(-margin, kind);
}

RiskBreakdown risk_pn(std::span<const double> scores_p, std::span<const double> scores_n, const RiskConfig& cfg) {
  cfg.validate();
  if (scores_p.empty() || scores_n.empty()) throw DataError("risk_pn: both sample sets must be non-empty");
  RiskBreakdown r;
  r.positive_term = cfg.theta_p * mean_loss(scores_p, +1.0, cfg.base_loss);
  r.unlabeled_or_negative_term = cfg.theta_n() * mean_loss(scores_n, -1.0, cfg.base_loss);
  r.total = r.positive_term + r.unlabeled_or_negative_term;
  return r;
}

RiskBreakdown risk_pu(std::span<const double> scores_p, std::span<const double> scores_u, const RiskConfig& cfg) {
  cfg.validate();
  if (scores_p.empty() || scores_u.empty()) throw DataError("risk_pu: both sample sets must be non-empty");
  RiskBreakdown r;
  const double unlabeled_neg = mean_loss(scores_u, -1.0, cfg.base_loss);
  if (cfg.mode == RiskMode::PUUnbiased) {
    double comp = 0.0;
    for (double s : scores_p) comp += composite_loss(s, cfg.base_loss);
    r.positive_term = cfg.theta_p * comp / static_cast<double>(scores_p.size());
    r.unlabeled_or_negative_term = unlabeled_neg;
    r.total = r.positive_term + r.unlabeled_or_negative_term;
  } else if (cfg.mode == RiskMode::PUNonNegative) {
    r.positive_term = cfg.theta_p * mean_loss(scores_p, +1.0, cfg.base_loss);
    const double neg_part = unlabeled_neg - cfg.theta_p * mean_loss(scores_p, -1.0, cfg.base_loss);
    r.clamped = neg_part < 0.0;
    r.unlabeled_or_negative_term = r.clamped ? 0.0 : neg_part;
    r.total = r.positive_term + r.unlabeled_or_negative_term;
  } else {
    throw ConfigError("risk_pu: config mode is pn; use risk_pn");
  }
  return r;
}

RiskBreakdown risk_pn_grad(std::span<const double> scores_p, std::span<const double> scores_n, const RiskConfig& cfg,
                           std::span<double> grad_p, std::span<double> grad_n) {
  RiskBreakdown r = risk_pn(scores_p, scores_n, cfg);
  if (grad_p.size() != scores_p.size() || grad_n.size() != scores_n.size())
    throw ShapeError("risk_pn_grad: gradient spans must match score spans");
  const double wp = cfg.theta_p / static_cast<double>(scores_p.size());
  const double wn = cfg.theta_n() / static_cast<double>(scores_n.size());
  for (std::size_t i = 0; i < scores_p.size(); ++i) grad_p[i] = wp * base_loss_derivative(scores_p[i], cfg.base_loss);
  for (std::size_t i = 0; i < scores_n.size(); ++i) grad_n[i] = -wn * base_loss_derivative(-scores_n[i], cfg.base_loss);
  return r;
}

RiskBreakdown risk_pu_grad(std::span<const double> scores_p, std::span<const double> scores_u, const RiskConfig& cfg,
                           std::span<double> grad_p, std::span<double> grad_u) {
  RiskBreakdown r = risk_pu(scores_p, scores_u, cfg);
  if (grad_p.size() != scores_p.size() || grad_u.size() != scores_u.size())
    throw ShapeError("risk_pu_grad: gradient spans must match score spans");
  const double wp = cfg.theta_p / static_cast<double>(scores_p.size());
  const double wu = 1.0 / static_cast<double>(scores_u.size());
  if (cfg.mode == RiskMode::PUUnbiased) {
    for (std::size_t i = 0; i < scores_p.size(); ++i) grad_p[i] = wp * composite_loss_derivative(scores_p[i], cfg.base_loss);
    for (std::size_t i = 0; i < scores_u.size(); ++i) grad_u[i] = -wu * base_loss_derivative(-scores_u[i], cfg.base_loss);
  } else {
    // subgradient of the clamped estimator: the max(0, .) branch goes flat
    for (std::size_t i = 0; i < scores_p.size(); ++i) {
      grad_p[i] = wp * base_loss_derivative(scores_p[i], cfg.base_loss);
      if (!r.clamped) grad_p[i] += wp * base_loss_derivative(-scores_p[i], cfg.base_loss);
    }
    for (std::size_t i = 0; i < scores_u.size(); ++i)
      grad_u[i] = r.clamped ? 0.0 : -wu * base_loss_derivative(-scores_u[i], cfg.base_loss);
  }
  return r;
}

}  // namespace pulsar
