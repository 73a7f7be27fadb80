#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mi2a/tensor.hpp"

namespace mi2a {

/// A named trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of parameters with stable addresses. Copying deep-copies values.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  /// Total number of scalar weights.
  std::size_t scalar_count() const;
  /// Scalar count of parameters whose names start with `prefix`.
  std::size_t scalar_count(std::string_view prefix) const;
  std::vector<std::string> names() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape-based reverse-mode differentiation. Nodes are appended in construction order,
/// which is a topological order; backward() walks it once in reverse.
class Graph {
 public:
  /// Called during backward with the node's upstream gradient. Implementations
  /// accumulate into `grad_of(input)` for inputs where `needs_grad(input)` holds.
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Binds a parameter as a leaf. Binding the same parameter twice returns the same node.
  Var parameter(Parameter& p);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() root wrt v; empty if v did not receive one.
  /// Only leaves keep their gradient; interior nodes release it once consumed.
  const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }

  bool needs_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  Tensor& grad_of(Var v);
  /// Adds `g` (same element count as v) into v's gradient; the first contribution is copied.
  void accumulate_grad(Var v, const Tensor& g);

  /// Seeds d(root)/d(root) = 1 and propagates. Parameter leaves add into Parameter::grad.
  void backward(Var root);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace mi2a
