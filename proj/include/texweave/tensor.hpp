#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace texweave {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
//
// Every dimension is >= 1; a scalar has shape {1}. The gradient buffer is
// either empty or exactly as long as the data.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D and 3-D element access; no bounds checks beyond the flat vector.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t h, std::size_t w, std::size_t c) {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  double item() const;

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

class Graph;

// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  double item() const;
  bool requires_grad() const;
  Tensor tensor() const;

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only tape of operations. Nodes are recorded in evaluation order, so
// reverse iteration is a valid topological order for the backward pass.
//
// A graph is built fresh for every forward pass and used from one thread.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf owning its value; its gradient is read back with grad().
  Var variable(Tensor value);
  // Leaf aliasing externally owned storage. The gradient is accumulated into
  // the tensor's own grad buffer, which must outlive the backward pass.
  Var parameter(Tensor& param);
  // Leaf aliasing externally owned storage that never receives a gradient.
  Var view(const Tensor& value);

  Var record(Shape shape, std::vector<double> value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates to every ancestor requiring a
  // gradient. The root must hold exactly one element.
  void backward(Var root);

  std::span<const double> grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by operation backward closures.
  const Shape& shape_of(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value_of(std::size_t id) const;
  std::span<const double> grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_[id].inputs; }
  // Gradient accumulator of a node; zero-initialized on first use.
  std::span<double> grad_sink(std::size_t id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> owned;
    const double* external = nullptr;
    std::size_t external_size = 0;
    Tensor* param = nullptr;
    std::vector<std::size_t> inputs;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Binary elementwise operations require equal
// shapes, or one operand holding a single element (scalar broadcast).
// ---------------------------------------------------------------------------

inline constexpr double kClampEpsilon = 1e-8;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a / b with |b| clamped to at least kClampEpsilon (sign preserved).
Var div(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
// log(max(a, kClampEpsilon)).
Var log(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var abs(Var a);
Var sqrt(Var a);
Var clamp(Var a, double lo, double hi);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// Sum or mean over the listed axes; an empty list reduces everything to {1}.
Var sum(Var a, const std::vector<std::size_t>& axes = {});
Var mean(Var a, const std::vector<std::size_t>& axes = {});

// Flat concatenation into shape {1, total}.
Var concat(const std::vector<Var>& parts);
// Flat slice [offset, offset + length) as shape {1, length}.
Var slice(Var a, std::size_t offset, std::size_t length);
// Columns of a 2-D tensor, in the given order.
Var select_columns(Var a, const std::vector<std::size_t>& columns);
// Channel c of an H x W x C image as an H x W matrix.
Var channel(Var image, std::size_t c);
// Stacks H x W matrices into an H x W x C image.
Var stack_channels(const std::vector<Var>& planes);

// Correlates every kernel (K x k x k, k odd) with every channel of an
// H x W x C image using reflect padding. Output is H x W x (C*K) with
// channel index c * K + kernel. Differentiable with respect to the image.
Var conv2d_same(Var image, const Tensor& kernels);

}  // namespace texweave
