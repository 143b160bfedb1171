#include "jsae/activations.hpp"

#include <cmath>
#include <stdexcept>

namespace jsae {

namespace {

constexpr double kTanhCoeff = 0.044715;
// sqrt(2/pi)
const double kSqrt2OverPi = std::sqrt(2.0 / M_PI);
// 1/sqrt(2*pi)
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

double act(ActivationKind kind, double x) {
  if (std::isnan(x)) return x;
  switch (kind) {
    case ActivationKind::GeluTanh: {
      double u = kSqrt2OverPi * (x + kTanhCoeff * x * x * x);
      return 0.5 * x * (1.0 + std::tanh(u));
    }
    case ActivationKind::GeluErf:
      return x * norm_cdf(x);
    case ActivationKind::Relu:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::Identity:
      return x;
  }
  throw std::invalid_argument("act: unknown activation kind");
}

double act_d1(ActivationKind kind, double x) {
  if (std::isnan(x)) return x;
  switch (kind) {
    case ActivationKind::GeluTanh: {
      double u = kSqrt2OverPi * (x + kTanhCoeff * x * x * x);
      double t = std::tanh(u);
      double du = kSqrt2OverPi * (1.0 + 3.0 * kTanhCoeff * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
    case ActivationKind::GeluErf:
      return norm_cdf(x) + x * norm_pdf(x);
    case ActivationKind::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Identity:
      return 1.0;
  }
  throw std::invalid_argument("act_d1: unknown activation kind");
}

double act_d2(ActivationKind kind, double x) {
  if (std::isnan(x)) return x;
  switch (kind) {
    case ActivationKind::GeluTanh: {
      double u = kSqrt2OverPi * (x + kTanhCoeff * x * x * x);
      double t = std::tanh(u);
      double du = kSqrt2OverPi * (1.0 + 3.0 * kTanhCoeff * x * x);
      double ddu = kSqrt2OverPi * 6.0 * kTanhCoeff * x;
      double sech2 = 1.0 - t * t;
      return sech2 * (du + 0.5 * x * (ddu - 2.0 * t * du * du));
    }
    case ActivationKind::GeluErf:
      return norm_pdf(x) * (2.0 - x * x);
    case ActivationKind::Relu:
      return 0.0;
    case ActivationKind::Identity:
      return 0.0;
  }
  throw std::invalid_argument("act_d2: unknown activation kind");
}

namespace {

template <double (*F)(ActivationKind, double)>
Eigen::VectorXd apply(ActivationKind kind, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = F(kind, v[i]);
  return out;
}

}  // namespace

Eigen::VectorXd act(ActivationKind kind, const Eigen::VectorXd& v) {
  return apply<&act>(kind, v);
}

Eigen::VectorXd act_d1(ActivationKind kind, const Eigen::VectorXd& v) {
  return apply<&act_d1>(kind, v);
}

Eigen::VectorXd act_d2(ActivationKind kind, const Eigen::VectorXd& v) {
  return apply<&act_d2>(kind, v);
}

const char* to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::GeluTanh: return "gelu_tanh";
    case ActivationKind::GeluErf: return "gelu_erf";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Identity: return "identity";
  }
  throw std::invalid_argument("to_string: unknown activation kind");
}

ActivationKind activation_from_string(const std::string& name) {
  if (name == "gelu_tanh") return ActivationKind::GeluTanh;
  if (name == "gelu_erf") return ActivationKind::GeluErf;
  if (name == "relu") return ActivationKind::Relu;
  if (name == "identity") return ActivationKind::Identity;
  throw std::invalid_argument("unknown activation kind: " + name);
}

}  // namespace jsae
