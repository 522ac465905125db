#include "texweave/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "texweave/errors.hpp"

namespace texweave {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimension of size 0 in " + shape_string(shape));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

std::span<double> Tensor::grad() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

// ---------------------------------------------------------------------------
// Var
// ---------------------------------------------------------------------------

const Shape& Var::shape() const { return graph_->shape_of(id_); }
std::size_t Var::size() const { return graph_->value_of(id_).size(); }
std::span<const double> Var::value() const { return graph_->value_of(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::item() const {
  auto v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar node " + shape_string(shape()));
  return v[0];
}

Tensor Var::tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  Node node;
  node.shape = value.shape();
  auto data = value.data();
  node.owned.assign(data.begin(), data.end());
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::parameter(Tensor& param) {
  Node node;
  node.shape = param.shape();
  node.external = param.data().data();
  node.external_size = param.size();
  node.param = &param;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::view(const Tensor& value) {
  Node node;
  node.shape = value.shape();
  node.external = value.data().data();
  node.external_size = value.size();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Shape shape, std::vector<double> value, std::vector<std::size_t> inputs,
                  BackwardFn backward) {
  Node node;
  node.shape = std::move(shape);
  node.owned = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t i) { return nodes_[i].requires_grad; });
  if (node.requires_grad) node.backward = std::move(backward);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<const double> Graph::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.external) return {n.external, n.external_size};
  return n.owned;
}

std::span<double> Graph::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad();
  if (n.grad.empty()) n.grad.assign(value_of(id).size(), 0.0);
  return n.grad;
}

std::span<const double> Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.param) return n.param->grad();
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph_ != this) throw std::invalid_argument("backward root belongs to another graph");
  if (value_of(root.id()).size() != 1)
    throw ShapeError("backward requires a scalar root, got " + shape_string(root.shape()));
  if (!nodes_[root.id()].requires_grad) return;
  grad_sink(root.id())[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.empty()) continue;  // unreachable from the root
    // The closure may append to other nodes' grads but never to nodes_.
    n.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

namespace {

Graph& same_graph(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph())
    throw std::invalid_argument("operands belong to different graphs");
  return a.graph();
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Graph& g = a.graph();
  auto x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(a.shape(), std::move(y), {a.id()}, [dfdx](Graph& g, std::size_t self) {
    std::size_t in = g.inputs_of(self)[0];
    auto x = g.value_of(in);
    auto y = g.value_of(self);
    auto gy = g.grad_of(self);
    auto gx = g.grad_sink(in);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * dfdx(x[i], y[i]);
  });
}

// Resolved broadcasting: which operand (if any) is the single-element one.
struct Broadcast {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

Broadcast resolve(const Shape& a, const Shape& b) {
  std::size_t na = shape_size(a), nb = shape_size(b);
  if (a == b) return {a, false, false};
  if (nb == 1) return {a, false, true};
  if (na == 1) return {b, true, false};
  throw ShapeError("shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
}

// f(x, y) -> value; dfa(x, y, out) and dfb(x, y, out) partial derivatives.
template <typename F, typename DA, typename DB>
Var binary(Var a, Var b, F f, DA dfa, DB dfb) {
  Graph& g = same_graph(a, b);
  Broadcast bc = resolve(a.shape(), b.shape());
  auto x = a.value();
  auto y = b.value();
  std::size_t n = shape_size(bc.shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[bc.a_scalar ? 0 : i], y[bc.b_scalar ? 0 : i]);
  return g.record(bc.shape, std::move(out), {a.id(), b.id()},
                  [bc, dfa, dfb](Graph& g, std::size_t self) {
                    std::size_t ia = g.inputs_of(self)[0];
                    std::size_t ib = g.inputs_of(self)[1];
                    auto x = g.value_of(ia);
                    auto y = g.value_of(ib);
                    auto out = g.value_of(self);
                    auto go = g.grad_of(self);
                    if (g.requires_grad(ia)) {
                      auto ga = g.grad_sink(ia);
                      for (std::size_t i = 0; i < go.size(); ++i) {
                        double xi = x[bc.a_scalar ? 0 : i], yi = y[bc.b_scalar ? 0 : i];
                        ga[bc.a_scalar ? 0 : i] += go[i] * dfa(xi, yi, out[i]);
                      }
                    }
                    if (g.requires_grad(ib)) {
                      auto gb = g.grad_sink(ib);
                      for (std::size_t i = 0; i < go.size(); ++i) {
                        double xi = x[bc.a_scalar ? 0 : i], yi = y[bc.b_scalar ? 0 : i];
                        gb[bc.b_scalar ? 0 : i] += go[i] * dfb(xi, yi, out[i]);
                      }
                    }
                  });
}

double clamp_magnitude(double v) {
  if (std::abs(v) >= kClampEpsilon) return v;
  return v < 0 ? -kClampEpsilon : kClampEpsilon;
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, [](double x, double y) { return x / clamp_magnitude(y); },
      [](double, double y, double) { return 1.0 / clamp_magnitude(y); },
      [](double x, double y, double) {
        if (std::abs(y) < kClampEpsilon) return 0.0;
        return -x / (y * y);
      });
}

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(std::max(x, kClampEpsilon)); },
      [](double x, double) { return x < kClampEpsilon ? 0.0 : 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sqrt(Var a) {
  for (double x : a.value())
    if (x < 0) throw DomainError("sqrt of negative value " + std::to_string(x));
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra and reshaping
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw ShapeError("matmul dimension mismatch: " + shape_string(sa) + " x " + shape_string(sb));
  std::size_t m = sa[0], k = sa[1], n = sb[1];
  auto A = a.value();
  auto B = b.value();
  std::vector<double> C(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return g.record({m, n}, std::move(C), {a.id(), b.id()}, [m, k, n](Graph& g, std::size_t self) {
    std::size_t ia = g.inputs_of(self)[0];
    std::size_t ib = g.inputs_of(self)[1];
    auto A = g.value_of(ia);
    auto B = g.value_of(ib);
    auto dC = g.grad_of(self);
    if (g.requires_grad(ia)) {
      // dA = dC * B^T
      auto dA = g.grad_sink(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gc = dC.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gc[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (g.requires_grad(ib)) {
      // dB = A^T * dC
      auto dB = g.grad_sink(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gc = dC.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          double aip = A[i * k + p];
          if (aip == 0.0) continue;
          double* gb = dB.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += aip * gc[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose expects a matrix, got " + shape_string(s));
  std::size_t r = s[0], c = s[1];
  auto x = a.value();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return a.graph().record({c, r}, std::move(y), {a.id()}, [r, c](Graph& g, std::size_t self) {
    std::size_t in = g.inputs_of(self)[0];
    auto gy = g.grad_of(self);
    auto gx = g.grad_sink(in);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  check_shape(shape);
  if (shape_size(shape) != a.size())
    throw ShapeError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  auto x = a.value();
  return a.graph().record(std::move(shape), std::vector<double>(x.begin(), x.end()), {a.id()},
                          [](Graph& g, std::size_t self) {
                            std::size_t in = g.inputs_of(self)[0];
                            auto gy = g.grad_of(self);
                            auto gx = g.grad_sink(in);
                            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
                          });
}

namespace {

// Maps every input flat index to its output flat index under a reduction.
std::pair<Shape, std::vector<std::size_t>> reduction_map(const Shape& shape,
                                                         const std::vector<std::size_t>& axes) {
  std::vector<bool> reduced(shape.size(), axes.empty());
  for (auto ax : axes) {
    if (ax >= shape.size())
      throw ShapeError("invalid axis " + std::to_string(ax) + " for shape " + shape_string(shape));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);
  if (out_shape.empty()) out_shape = {1};

  std::size_t n = shape_size(shape);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (!reduced[d]) o = o * shape[d] + idx[d];
    map[flat] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return {out_shape, map};
}

Var reduce(Var a, const std::vector<std::size_t>& axes, bool average) {
  auto [out_shape, map] = reduction_map(a.shape(), axes);
  std::size_t out_n = shape_size(out_shape);
  double factor = average ? static_cast<double>(out_n) / static_cast<double>(a.size()) : 1.0;
  auto x = a.value();
  std::vector<double> y(out_n, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) y[map[i]] += x[i];
  if (average)
    for (auto& v : y) v *= factor;
  return a.graph().record(out_shape, std::move(y), {a.id()},
                          [map = std::move(map), factor](Graph& g, std::size_t self) {
                            std::size_t in = g.inputs_of(self)[0];
                            auto gy = g.grad_of(self);
                            auto gx = g.grad_sink(in);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[map[i]];
                          });
}

}  // namespace

Var sum(Var a, const std::vector<std::size_t>& axes) { return reduce(a, axes, false); }
Var mean(Var a, const std::vector<std::size_t>& axes) { return reduce(a, axes, true); }

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Graph& g = parts.front().graph();
  std::vector<double> y;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("concat operands belong to different graphs");
    auto v = p.value();
    y.insert(y.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  std::size_t total = y.size();
  return g.record({1, total}, std::move(y), std::move(ids), [](Graph& g, std::size_t self) {
    auto gy = g.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t in : g.inputs_of(self)) {
      std::size_t n = g.value_of(in).size();
      if (g.requires_grad(in)) {
        auto gx = g.grad_sink(in);
        for (std::size_t i = 0; i < n; ++i) gx[i] += gy[offset + i];
      }
      offset += n;
    }
  });
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length > a.size())
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for " + shape_string(a.shape()));
  auto x = a.value();
  std::vector<double> y(x.begin() + static_cast<std::ptrdiff_t>(offset),
                        x.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return a.graph().record({1, length}, std::move(y), {a.id()},
                          [offset](Graph& g, std::size_t self) {
                            std::size_t in = g.inputs_of(self)[0];
                            auto gy = g.grad_of(self);
                            auto gx = g.grad_sink(in);
                            for (std::size_t i = 0; i < gy.size(); ++i) gx[offset + i] += gy[i];
                          });
}

Var select_columns(Var a, const std::vector<std::size_t>& columns) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("select_columns expects a matrix, got " + shape_string(s));
  if (columns.empty()) throw ShapeError("select_columns with no columns");
  for (auto c : columns)
    if (c >= s[1]) throw ShapeError("column " + std::to_string(c) + " out of range");
  std::size_t rows = s[0], cols = s[1], out_cols = columns.size();
  auto x = a.value();
  std::vector<double> y(rows * out_cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out_cols; ++j) y[r * out_cols + j] = x[r * cols + columns[j]];
  return a.graph().record({rows, out_cols}, std::move(y), {a.id()},
                          [columns, rows, cols](Graph& g, std::size_t self) {
                            std::size_t in = g.inputs_of(self)[0];
                            auto gy = g.grad_of(self);
                            auto gx = g.grad_sink(in);
                            std::size_t oc = columns.size();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < oc; ++j)
                                gx[r * cols + columns[j]] += gy[r * oc + j];
                          });
}

Var channel(Var image, std::size_t c) {
  const Shape& s = image.shape();
  if (s.size() != 3 || c >= s[2])
    throw ShapeError("channel " + std::to_string(c) + " of " + shape_string(s));
  std::size_t h = s[0], w = s[1], ch = s[2];
  auto x = image.value();
  std::vector<double> y(h * w);
  for (std::size_t i = 0; i < h * w; ++i) y[i] = x[i * ch + c];
  return image.graph().record({h, w}, std::move(y), {image.id()},
                              [c, ch](Graph& g, std::size_t self) {
                                std::size_t in = g.inputs_of(self)[0];
                                auto gy = g.grad_of(self);
                                auto gx = g.grad_sink(in);
                                for (std::size_t i = 0; i < gy.size(); ++i) gx[i * ch + c] += gy[i];
                              });
}

Var stack_channels(const std::vector<Var>& planes) {
  if (planes.empty()) throw ShapeError("stack_channels of zero planes");
  Graph& g = planes.front().graph();
  const Shape s = planes.front().shape();
  if (s.size() != 2) throw ShapeError("stack_channels expects matrices, got " + shape_string(s));
  std::size_t ch = planes.size(), hw = s[0] * s[1];
  std::vector<double> y(hw * ch);
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < ch; ++c) {
    if (planes[c].shape() != s)
      throw ShapeError("stack_channels shape mismatch: " + shape_string(s) + " vs " +
                       shape_string(planes[c].shape()));
    auto v = planes[c].value();
    for (std::size_t i = 0; i < hw; ++i) y[i * ch + c] = v[i];
    ids.push_back(planes[c].id());
  }
  return g.record({s[0], s[1], ch}, std::move(y), std::move(ids), [ch](Graph& g, std::size_t self) {
    auto gy = g.grad_of(self);
    const auto& ins = g.inputs_of(self);
    for (std::size_t c = 0; c < ch; ++c) {
      if (!g.requires_grad(ins[c])) continue;
      auto gx = g.grad_sink(ins[c]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i * ch + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

// Mirror index without repeating the edge sample: -1 -> 1, n -> n - 2.
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Var conv2d_same(Var image, const Tensor& kernels) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("conv2d_same expects H x W x C, got " + shape_string(s));
  const Shape& ks = kernels.shape();
  if (ks.size() != 3 || ks[1] != ks[2])
    throw ShapeError("kernels must be K x k x k, got " + shape_string(ks));
  if (ks[1] % 2 == 0) throw ShapeError("kernel size must be odd, got " + std::to_string(ks[1]));

  const std::size_t H = s[0], W = s[1], C = s[2], K = ks[0], k = ks[1];
  const long pad = static_cast<long>(k / 2);
  const std::size_t L = C * K;

  // Reflected source coordinate for output position p and kernel tap t.
  std::vector<std::size_t> rows(H * k), cols(W * k);
  for (std::size_t p = 0; p < H; ++p)
    for (std::size_t t = 0; t < k; ++t)
      rows[p * k + t] = reflect_index(static_cast<long>(p + t) - pad, static_cast<long>(H));
  for (std::size_t p = 0; p < W; ++p)
    for (std::size_t t = 0; t < k; ++t)
      cols[p * k + t] = reflect_index(static_cast<long>(p + t) - pad, static_cast<long>(W));

  auto x = image.value();
  auto ker = kernels.data();
  std::vector<double> y(H * W * L, 0.0);
  std::vector<double> patch(k * k);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx)
            patch[dy * k + dx] = x[(rows[h * k + dy] * W + cols[w * k + dx]) * C + c];
        double* out = y.data() + (h * W + w) * L + c * K;
        for (std::size_t q = 0; q < K; ++q) {
          const double* kq = ker.data() + q * k * k;
          double acc = 0.0;
          for (std::size_t t = 0; t < k * k; ++t) acc += kq[t] * patch[t];
          out[q] = acc;
        }
      }
    }
  }

  return image.graph().record(
      {H, W, L}, std::move(y), {image.id()},
      [kernels, rows = std::move(rows), cols = std::move(cols), H, W, C, K, k](Graph& g,
                                                                               std::size_t self) {
        std::size_t in = g.inputs_of(self)[0];
        auto gy = g.grad_of(self);
        auto gx = g.grad_sink(in);
        auto ker = kernels.data();
        const std::size_t L = C * K;
        std::vector<double> gpatch(k * k);
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t w = 0; w < W; ++w) {
            for (std::size_t c = 0; c < C; ++c) {
              std::fill(gpatch.begin(), gpatch.end(), 0.0);
              const double* go = gy.data() + (h * W + w) * L + c * K;
              for (std::size_t q = 0; q < K; ++q) {
                double gq = go[q];
                if (gq == 0.0) continue;
                const double* kq = ker.data() + q * k * k;
                for (std::size_t t = 0; t < k * k; ++t) gpatch[t] += gq * kq[t];
              }
              for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx)
                  gx[(rows[h * k + dy] * W + cols[w * k + dx]) * C + c] += gpatch[dy * k + dx];
            }
          }
        }
      });
}

}  // namespace texweave
