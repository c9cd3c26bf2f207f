#pragma once

#include <span>
#include <string>

namespace pulsar {

enum class BaseLoss { Sigmoid, Logistic };
enum class RiskMode { PN, PUUnbiased, PUNonNegative };

BaseLoss base_loss_from_string(const std::string& s);
RiskMode risk_mode_from_string(const std::string& s);
std::string to_string(BaseLoss k);
std::string to_string(RiskMode m);

struct RiskConfig {
  BaseLoss base_loss = BaseLoss::Sigmoid;
  double theta_p = 0.5;  // class prior p(y = +1)
  RiskMode mode = RiskMode::PUNonNegative;

  double theta_n() const { return 1.0 - theta_p; }
  void validate() const;
};

struct RiskBreakdown {
  double total = 0.0;
  double positive_term = 0.0;              // prior-weighted positive-sample risk
  double unlabeled_or_negative_term = 0.0;  // negative term (PN) or unlabeled term (PU)
  bool clamped = false;                    // non-negative correction was active
};

// Margin losses, decreasing in the margin m = y * g(x):
//   sigmoid   l(m) = 1 / (1 + e^m)
//   logistic  l(m) = ln(1 + e^-m)
double base_loss(double margin, BaseLoss kind);
double base_loss_derivative(double margin, BaseLoss kind);

// Composite loss l~(m) = l(m) - l(-m); odd in m.
double composite_loss(double margin, BaseLoss kind);
double composite_loss_derivative(double margin, BaseLoss kind);

// Supervised PN risk: theta_p E_P[l(g)] + theta_n E_N[l(-g)] with empirical means.
RiskBreakdown risk_pn(std::span<const double> scores_p, std::span<const double> scores_n, const RiskConfig& cfg);

// PU risk from positive and unlabeled scores.
//   unbiased:     theta_p E_P[l~(g)] + E_U[l(-g)]
//   non-negative: theta_p E_P[l(g)] + max(0, E_U[l(-g)] - theta_p E_P[l(-g)])
RiskBreakdown risk_pu(std::span<const double> scores_p, std::span<const double> scores_u, const RiskConfig& cfg);

// Same estimators plus the gradient of the total with respect to each score.
RiskBreakdown risk_pn_grad(std::span<const double> scores_p, std::span<const double> scores_n, const RiskConfig& cfg,
                           std::span<double> grad_p, std::span<double> grad_n);
RiskBreakdown risk_pu_grad(std::span<const double> scores_p, std::span<const double> scores_u, const RiskConfig& cfg,
                           std::span<double> grad_p, std::span<double> grad_u);

}  // namespace pulsar
