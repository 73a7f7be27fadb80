#include "mi2a/graph.hpp"

#include <algorithm>

#include "mi2a/errors.hpp"

namespace mi2a {

ParameterStore::ParameterStore(const ParameterStore& other) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterStore::add(std::string name, Tensor init) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor::zeros(init.shape());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t ParameterStore::scalar_count() const { return scalar_count(""); }

std::size_t ParameterStore::scalar_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->name.starts_with(prefix)) n += p->value.size();
  }
  return n;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->name);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      p->grad = Tensor::zeros(p->value.shape());
    } else {
      p->grad.fill(0.0);
    }
  }
}

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph() != this) throw std::invalid_argument("Graph::record: input from another graph");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph() != this) throw std::invalid_argument("Graph::record: input from another graph");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Graph::grad_of(Var v) {
  Node& n = nodes_.at(v.id());
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Graph::accumulate_grad(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id());
  if (g.size() != n.value.size()) {
    throw ShapeError("gradient " + shape_string(g.shape()) + " does not fit " + shape_string(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g.reshaped(n.value.shape());
    return;
  }
  double* dst = n.grad.raw();
  const double* src = g.raw();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw std::invalid_argument("Graph::backward: foreign root");
  if (nodes_[root.id()].value.size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + shape_string(nodes_[root.id()].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_of(root).fill(1.0);

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.requires_grad) continue;
    // nodes_ is never resized during backward, so n.grad stays addressable.
    if (n.backward) {
      n.backward(*this, n.grad);
      if (n.param == nullptr) n.grad = Tensor();
    }
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor::zeros(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

}  // namespace mi2a
