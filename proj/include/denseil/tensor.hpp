#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace denseil {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN/Inf, or receives it.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class Mode { Train, Eval };

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles with an optional reverse-mode graph.
///
/// Tensors are cheap handles: copies share the same storage. Ops never
/// mutate their inputs; leaf tensors (parameters, data) may be edited in
/// place through mutable_values().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  const double* data() const { return values().data(); }

  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool requires_grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Value copy with no graph attached.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad();
  Node& parent(std::size_t i) { return *parents[i]; }
};

/// Wraps an op result. Validates finiteness, and attaches the backward
/// closure only if grad mode is on and some parent requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn);

void require_finite(const char* op, std::span<const double> values);

}  // namespace detail

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Accumulates d(loss)/d(x) into every reachable tensor that requires grad.
void backward(const Tensor& loss);

/// Counts multiply-adds issued by matmul ops on the current thread while
/// alive. Nested counters all observe the same operations.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const { return count_; }

  static void record(std::uint64_t macs);

 private:
  std::uint64_t count_ = 0;
  MacCounter* outer_;
};

struct Param {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Named tensors of a model, in registration order. Non-trainable entries
/// hold running statistics and are saved alongside the weights.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor tensor, bool trainable = true);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::span<Param> params() { return params_; }
  std::span<const Param> params() const { return params_; }
  std::vector<Tensor> trainable() const;
  void zero_grad();

 private:
  std::vector<Param> params_;
};

}  // namespace denseil
