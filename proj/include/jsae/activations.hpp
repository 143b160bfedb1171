#pragma once

#include <string>

#include <Eigen/Core>

namespace jsae {

enum class ActivationKind { GeluTanh, GeluErf, Relu, Identity };

// Scalar nonlinearity together with its first two derivatives in closed form.
// Closed forms (rather than autodiff or finite differences) keep the Jacobian
// kernel and its curvature diagnostics exact and deterministic.
//
// Convention at the ReLU kink: act_d1(0) = act_d2(0) = 0.
double act(ActivationKind kind, double x);
double act_d1(ActivationKind kind, double x);
double act_d2(ActivationKind kind, double x);

// Elementwise application.
Eigen::VectorXd act(ActivationKind kind, const Eigen::VectorXd& v);
Eigen::VectorXd act_d1(ActivationKind kind, const Eigen::VectorXd& v);
Eigen::VectorXd act_d2(ActivationKind kind, const Eigen::VectorXd& v);

const char* to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

}  // namespace jsae
