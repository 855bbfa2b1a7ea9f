#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ptr::diff {

using Vec = std::vector<double>;

/// Handle to a node on a Tape.
struct NodeId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
};

/// Accumulates the contribution of an output gradient into the gradients of
/// the node inputs. in_grads[k] is null when input k needs no gradient.
using BackwardFn = std::function<void(const Vec& out_grad, std::span<Vec* const> in_grads)>;

using GradientMap = std::map<std::string, Vec>;

/// Reverse-mode record of a vector-valued computation graph. Nodes are
/// appended in topological order; an input must already exist on the tape.
class Tape {
 public:
  NodeId parameter(const std::string& name, Vec value);
  NodeId constant(Vec value);
  /// Adds an op node. Throws kState if an input index does not precede it.
  NodeId record(std::string kind, std::vector<NodeId> inputs, Vec value, BackwardFn backward);

  const Vec& value(NodeId id) const;
  double scalar(NodeId id) const;
  const std::string& kind(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const;

  /// Populates gradients of every node reachable from `loss` (a scalar).
  /// A second call without reset_gradients() throws kState.
  GradientMap backward(NodeId loss);
  void reset_gradients();

  /// Gradient of any node after backward (zeros if unreachable).
  Vec gradient(NodeId id) const;
  NodeId find_parameter(const std::string& name) const;
  const std::map<std::string, std::size_t>& parameters() const { return params_; }

 private:
  struct Node {
    std::string kind;
    std::vector<std::size_t> inputs;
    Vec value;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Vec> grads_;
  std::map<std::string, std::size_t> params_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Generic ops. Binary elementwise ops broadcast length-1 operands.

NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId a, double s);
NodeId add_scalar(Tape& t, NodeId a, double s);
NodeId square(Tape& t, NodeId a);
NodeId sum(Tape& t, NodeId a);
NodeId mean(Tape& t, NodeId a);
NodeId dot_const(Tape& t, NodeId a, const Vec& weights);
NodeId softplus(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId tanh(Tape& t, NodeId a);
NodeId exp(Tape& t, NodeId a);
/// lo + (hi - lo) * sigmoid(a)
NodeId sigmoid_range(Tape& t, NodeId a, double lo, double hi);
/// Smooth total variation mean_t sqrt((x_t - x_{t-1})^2 + eps^2) - eps
/// over `rows` consecutive tracks of equal length stored back to back.
NodeId total_variation(Tape& t, NodeId a, std::size_t rows = 1, double eps = 1e-3);
/// Frame track -> audio-rate series (see control::upsample_frames).
NodeId upsample(Tape& t, NodeId track, double hop, std::size_t length);
/// Weighted sum of scalar nodes.
NodeId weighted_sum(Tape& t, std::span<const NodeId> terms, std::span<const double> weights);

}  // namespace ptr::diff
