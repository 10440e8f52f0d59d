#pragma once

#include <map>
#include <string>

#include "mrb/graph.hpp"
#include "mrb/tensor.hpp"

namespace mrb {

// Non-owning named input bindings; tensors must outlive the call.
using Inputs = std::map<std::string, const Tensor*>;

// Per-evaluation state: node values, gradients, pooling argmax caches.
// Graphs and weights are immutable and shared; make one Eval per worker.
class Eval {
 public:
  explicit Eval(const Graph& g);

  // Runs the whole graph; returns the output node's value. Every op result is
  // checked for NaN/Inf and raises NumericError instead of propagating.
  const Tensor& forward(const Inputs& inputs);

  // Reverse pass seeded with 1 at the scalar output.
  void backward();
  // Reverse pass with an arbitrary cotangent at the output (VJP).
  void backward(const Tensor& seed);

  const Tensor& grad(const std::string& input_name) const;
  const Tensor& grad_of(NodeId id) const;
  const Tensor& value_of(NodeId id) const;
  const Tensor& output_value() const;
  bool ran_forward() const { return forward_done_; }

 private:
  void eval_node(NodeId id, const Inputs& inputs);
  void backprop_node(NodeId id);
  NodeId input_id(const std::string& name) const;

  const Graph* g_;
  std::vector<Tensor> val_;
  std::vector<Tensor> grad_;
  std::vector<std::vector<Eigen::Index>> argmax_;  // max_pool winner indices
  bool forward_done_ = false;
  bool backward_done_ = false;
};

Tensor forward(const Graph& g, const Inputs& inputs);
Tensor gradient(const Graph& g, const Inputs& inputs, const std::string& wrt);

}  // namespace mrb
