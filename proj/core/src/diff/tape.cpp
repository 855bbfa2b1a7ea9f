#include "ptr/diff/tape.hpp"

#include <algorithm>
#include <cmath>

#include "ptr/control.hpp"
#include "ptr/error.hpp"
#include "ptr/pulse.hpp"

namespace ptr::diff {

NodeId Tape::parameter(const std::string& name, Vec value) {
  require(!params_.count(name), ErrorKind::kState, "parameter '" + name + "' registered twice");
  nodes_.push_back({"parameter", {}, std::move(value), nullptr, true});
  params_[name] = nodes_.size() - 1;
  return {nodes_.size() - 1};
}

NodeId Tape::constant(Vec value) {
  nodes_.push_back({"constant", {}, std::move(value), nullptr, false});
  return {nodes_.size() - 1};
}

NodeId Tape::record(std::string kind, std::vector<NodeId> inputs, Vec value, BackwardFn backward) {
  Node node{std::move(kind), {}, std::move(value), std::move(backward), false};
  for (const auto& in : inputs) {
    require(in.valid() && in.index < nodes_.size(), ErrorKind::kState,
            "op '" + node.kind + "' uses a node that is not on the tape yet");
    node.inputs.push_back(in.index);
    node.requires_grad = node.requires_grad || nodes_[in.index].requires_grad;
  }
  if (!node.requires_grad) node.backward = nullptr;
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

const Vec& Tape::value(NodeId id) const {
  require(id.valid() && id.index < nodes_.size(), ErrorKind::kState, "invalid node id");
  return nodes_[id.index].value;
}

double Tape::scalar(NodeId id) const {
  const auto& v = value(id);
  require(v.size() == 1, ErrorKind::kState, "node is not a scalar");
  return v[0];
}

const std::string& Tape::kind(NodeId id) const {
  require(id.valid() && id.index < nodes_.size(), ErrorKind::kState, "invalid node id");
  return nodes_[id.index].kind;
}

bool Tape::requires_grad(NodeId id) const {
  require(id.valid() && id.index < nodes_.size(), ErrorKind::kState, "invalid node id");
  return nodes_[id.index].requires_grad;
}

GradientMap Tape::backward(NodeId loss) {
  require(!backward_done_, ErrorKind::kState,
          "backward() already ran on this tape; call reset_gradients() first");
  require(value(loss).size() == 1, ErrorKind::kState, "backward() needs a scalar loss node");
  backward_done_ = true;
  grads_.assign(nodes_.size(), Vec{});
  grads_[loss.index] = Vec{1.0};
  std::vector<Vec*> ins;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads_[i].empty()) continue;
    ins.clear();
    for (std::size_t in : node.inputs) {
      if (!nodes_[in].requires_grad) {
        ins.push_back(nullptr);
        continue;
      }
      if (grads_[in].empty()) grads_[in].assign(nodes_[in].value.size(), 0.0);
      ins.push_back(&grads_[in]);
    }
    node.backward(grads_[i], ins);
  }
  GradientMap out;
  for (const auto& [name, idx] : params_) out[name] = gradient({idx});
  return out;
}

void Tape::reset_gradients() {
  grads_.clear();
  backward_done_ = false;
}

Vec Tape::gradient(NodeId id) const {
  const auto& v = value(id);
  if (id.index < grads_.size() && !grads_[id.index].empty()) return grads_[id.index];
  return Vec(v.size(), 0.0);
}

NodeId Tape::find_parameter(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? NodeId{} : NodeId{it->second};
}

// ---------------------------------------------------------------------------

namespace {

std::size_t broadcast_size(const Vec& a, const Vec& b) {
  require(a.size() == b.size() || a.size() == 1 || b.size() == 1, ErrorKind::kInvalidInput,
          "elementwise op: incompatible lengths " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  return std::max(a.size(), b.size());
}

inline double at(const Vec& v, std::size_t i) { return v.size() == 1 ? v[0] : v[i]; }

inline void acc(Vec* g, std::size_t i, double v) {
  if (g->size() == 1) (*g)[0] += v;
  else (*g)[i] += v;
}

template <typename F, typename D>
NodeId unary(Tape& t, const char* kind, NodeId a, F f, D df) {
  const Vec& x = t.value(a);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(kind, {a}, std::move(y), [x, df](const Vec& g, std::span<Vec* const> in) {
    if (!in[0]) return;
    for (std::size_t i = 0; i < x.size(); ++i) (*in[0])[i] += g[i] * df(x[i]);
  });
}

}  // namespace

NodeId add(Tape& t, NodeId a, NodeId b) {
  const Vec& x = t.value(a);
  const Vec& y = t.value(b);
  const std::size_t n = broadcast_size(x, y);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = at(x, i) + at(y, i);
  return t.record("add", {a, b}, std::move(out), [n](const Vec& g, std::span<Vec* const> in) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in[0]) acc(in[0], i, g[i]);
      if (in[1]) acc(in[1], i, g[i]);
    }
  });
}

NodeId sub(Tape& t, NodeId a, NodeId b) {
  const Vec& x = t.value(a);
  const Vec& y = t.value(b);
  const std::size_t n = broadcast_size(x, y);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = at(x, i) - at(y, i);
  return t.record("sub", {a, b}, std::move(out), [n](const Vec& g, std::span<Vec* const> in) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in[0]) acc(in[0], i, g[i]);
      if (in[1]) acc(in[1], i, -g[i]);
    }
  });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
  const Vec& x = t.value(a);
  const Vec& y = t.value(b);
  const std::size_t n = broadcast_size(x, y);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = at(x, i) * at(y, i);
  return t.record("mul", {a, b}, std::move(out), [x, y, n](const Vec& g, std::span<Vec* const> in) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in[0]) acc(in[0], i, g[i] * at(y, i));
      if (in[1]) acc(in[1], i, g[i] * at(x, i));
    }
  });
}

NodeId scale(Tape& t, NodeId a, double s) {
  return unary(t, "scale", a, [s](double x) { return s * x; }, [s](double) { return s; });
}

NodeId add_scalar(Tape& t, NodeId a, double s) {
  return unary(t, "add_scalar", a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

NodeId square(Tape& t, NodeId a) {
  return unary(t, "square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

NodeId sum(Tape& t, NodeId a) {
  const Vec& x = t.value(a);
  double s = 0.0;
  for (double v : x) s += v;
  return t.record("sum", {a}, Vec{s}, [](const Vec& g, std::span<Vec* const> in) {
    if (!in[0]) return;
    for (double& v : *in[0]) v += g[0];
  });
}

NodeId mean(Tape& t, NodeId a) {
  const std::size_t n = t.value(a).size();
  require(n > 0, ErrorKind::kInvalidInput, "mean of an empty node");
  return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

NodeId dot_const(Tape& t, NodeId a, const Vec& weights) {
  const Vec& x = t.value(a);
  require(x.size() == weights.size(), ErrorKind::kInvalidInput, "dot_const: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  return t.record("dot_const", {a}, Vec{s}, [weights](const Vec& g, std::span<Vec* const> in) {
    if (!in[0]) return;
    for (std::size_t i = 0; i < weights.size(); ++i) (*in[0])[i] += g[0] * weights[i];
  });
}

NodeId softplus(Tape& t, NodeId a) {
  return unary(t, "softplus", a, [](double x) { return pulse::softplus(x); },
               [](double x) { return pulse::sigmoid(x); });
}

NodeId sigmoid(Tape& t, NodeId a) {
  return unary(t, "sigmoid", a, [](double x) { return pulse::sigmoid(x); },
               [](double x) {
                 const double s = pulse::sigmoid(x);
                 return s * (1.0 - s);
               });
}

NodeId tanh(Tape& t, NodeId a) {
  return unary(t, "tanh", a, [](double x) { return std::tanh(x); },
               [](double x) {
                 const double y = std::tanh(x);
                 return 1.0 - y * y;
               });
}

NodeId exp(Tape& t, NodeId a) {
  return unary(t, "exp", a, [](double x) { return std::exp(x); },
               [](double x) { return std::exp(x); });
}

NodeId sigmoid_range(Tape& t, NodeId a, double lo, double hi) {
  const double w = hi - lo;
  return unary(t, "sigmoid_range", a, [lo, w](double x) { return lo + w * pulse::sigmoid(x); },
               [w](double x) {
                 const double s = pulse::sigmoid(x);
                 return w * s * (1.0 - s);
               });
}

NodeId total_variation(Tape& t, NodeId a, std::size_t rows, double eps) {
  const Vec& x = t.value(a);
  require(rows > 0 && x.size() % rows == 0, ErrorKind::kInvalidInput,
          "total_variation: length is not a multiple of rows");
  const std::size_t len = x.size() / rows;
  if (len < 2) return t.constant(Vec{0.0});
  const double count = static_cast<double>(rows * (len - 1));
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 1; i < len; ++i) {
      const double d = x[r * len + i] - x[r * len + i - 1];
      s += std::sqrt(d * d + eps * eps) - eps;
    }
  }
  return t.record("total_variation", {a}, Vec{s / count},
                  [x, rows, len, eps, count](const Vec& g, std::span<Vec* const> in) {
                    if (!in[0]) return;
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 1; i < len; ++i) {
                        const std::size_t k = r * len + i;
                        const double d = x[k] - x[k - 1];
                        const double gd = g[0] * d / std::sqrt(d * d + eps * eps) / count;
                        (*in[0])[k] += gd;
                        (*in[0])[k - 1] -= gd;
                      }
                    }
                  });
}

NodeId upsample(Tape& t, NodeId track, double hop, std::size_t length) {
  auto y = control::upsample_frames(t.value(track), hop, length);
  return t.record("upsample", {track}, std::move(y), [hop](const Vec& g, std::span<Vec* const> in) {
    if (in[0]) control::upsample_frames_adjoint(g, hop, *in[0]);
  });
}

NodeId weighted_sum(Tape& t, std::span<const NodeId> terms, std::span<const double> weights) {
  require(terms.size() == weights.size() && !terms.empty(), ErrorKind::kInvalidInput,
          "weighted_sum: terms and weights differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * t.scalar(terms[i]);
  Vec w(weights.begin(), weights.end());
  return t.record("weighted_sum", std::vector<NodeId>(terms.begin(), terms.end()), Vec{s},
                  [w](const Vec& g, std::span<Vec* const> in) {
                    for (std::size_t i = 0; i < w.size(); ++i) {
                      if (in[i]) (*in[i])[0] += g[0] * w[i];
                    }
                  });
}

}  // namespace ptr::diff
