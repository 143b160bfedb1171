#include "jsae/mlp.hpp"

#include <stdexcept>
#include <string>

namespace jsae {

void validate(const MlpParams& p) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("MlpParams: ") + msg);
  };
  require(p.w1.rows() > 0 && p.w1.cols() > 0, "w1 must be non-empty");
  require(p.b1.size() == p.w1.rows(), "b1 size must match w1 rows");
  require(p.w2.cols() == p.w1.rows(), "w2 cols must match w1 rows");
  require(p.w2.rows() > 0, "w2 must be non-empty");
  require(p.b2.size() == p.w2.rows(), "b2 size must match w2 rows");
  if (p.kind == MlpKind::Glu) {
    require(p.w_gate.rows() == p.w1.rows() && p.w_gate.cols() == p.w1.cols(),
            "w_gate shape must match w1");
    require(p.b_gate.size() == p.b1.size(), "b_gate size must match b1");
  } else {
    require(p.w_gate.size() == 0 && p.b_gate.size() == 0,
            "gate tensors must be empty for Standard");
  }
}

MlpOutput mlp_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.m_in()) {
    throw std::invalid_argument("mlp_forward: input has size " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(p.m_in()));
  }
  MlpOutput out;
  if (p.kind == MlpKind::Standard) {
    out.cache.hidden_pre = p.w1 * x + p.b1;
    out.y = p.w2 * act(p.activation, out.cache.hidden_pre) + p.b2;
  } else {
    out.cache.gate_pre = p.w_gate * x + p.b_gate;
    out.cache.gate = act(p.activation, out.cache.gate_pre);
    out.cache.up = p.w1 * x + p.b1;
    out.cache.hidden = out.cache.up.cwiseProduct(out.cache.gate);
    out.y = p.w2 * out.cache.hidden + p.b2;
  }
  return out;
}

const char* to_string(MlpKind kind) {
  switch (kind) {
    case MlpKind::Standard: return "standard";
    case MlpKind::Glu: return "glu";
  }
  throw std::invalid_argument("to_string: unknown mlp kind");
}

MlpKind mlp_kind_from_string(const std::string& name) {
  if (name == "standard") return MlpKind::Standard;
  if (name == "glu") return MlpKind::Glu;
  throw std::invalid_argument("unknown mlp kind: " + name);
}

}  // namespace jsae
