// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lags::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense rank-2 tensor of doubles. Vectors are n x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols, double fill = 0.0, bool requires_grad = false);
  explicit Tensor(Matrix value, bool requires_grad = false);

  std::vector<Eigen::Index> shape() const { return {value_.rows(), value_.cols()}; }
  Eigen::Index rows() const { return value_.rows(); }
  Eigen::Index cols() const { return value_.cols(); }
  Eigen::Index size() const { return value_.size(); }

  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  std::span<double> data() { return {value_.data(), static_cast<std::size_t>(value_.size())}; }
  std::span<const double> data() const { return {value_.data(), static_cast<std::size_t>(value_.size())}; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  const Matrix& grad() const;
  void accumulate_grad(const Matrix& g);
  void zero_grad() { grad_.reset(); }

 private:
  Matrix value_;
  bool requires_grad_ = false;
  std::optional<Matrix> grad_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records operations in execution order; `backward` replays them in reverse.
/// A tape is single-use and single-threaded.
class Tape {
 public:
  /// With `record = false` nothing is differentiable (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  /// Records an external tensor by reference; on backward its grad is accumulated.
  Var leaf(Tensor& t);

  /// Populates gradients of the 1x1 `loss` w.r.t. every differentiable leaf.
  void backward(Var loss);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient of the last backward pass w.r.t. node `id` (zeros if unreached).
  Matrix grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  // Used by the primitive implementations.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  void accumulate(const Var& v, const Matrix& g);
  template <class Expr>
  void accumulate_expr(const Var& v, const Expr& g) {
    auto& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Tensor* source = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    Matrix grad;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// Primitives. Shapes must match exactly except where noted.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var multiply(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
/// a (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(const Var& a, const Var& bias);
Var scale(const Var& a, double s);
/// s * a + shift, elementwise.
Var affine(const Var& a, double s, double shift);
/// Row r multiplied by the constant factors[r].
Var scale_rows(const Var& a, const std::vector<double>& factors);
Var sum(const Var& a);
Var mean(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var natural_log(const Var& a);
Var log2(const Var& a);
Var abs(const Var& a);
/// Elementwise clamp; gradient passes only where lo <= a <= hi.
Var clamp(const Var& a, double lo, double hi);
/// Column-wise concatenation [a | b].
Var concat(const Var& a, const Var& b);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
/// out[r] = a[index[r]].
Var gather_rows(const Var& a, const std::vector<int>& index);
/// out[s] = sum of a[r] with segment[r] == s, s in [0, segments).
Var segment_sum(const Var& a, const std::vector<int>& segment, int segments);

/// Rescales the n x 1 column `a` so every segment sums to `budget`. A segment
/// whose sum is below `eps` is replaced by the uniform split budget / size and
/// reported in `fallback` (if given); no gradient flows through such segments.
Var l1_normalize(const Var& a, const std::vector<int>& segment, int segments, double budget, double eps = 1e-12,
                 std::vector<bool>* fallback = nullptr);
Var l1_normalize(const Var& a, double budget, double eps = 1e-12);

/// Named parameter tensors with stable addresses.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Matrix value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t parameter_count() const;
  void zero_grad();

  nlohmann::json to_json() const;
  /// Loads values into an existing store; names and shapes must match.
  void load_json(const nlohmann::json& j);

 private:
  std::deque<Tensor> tensors_;
  std::vector<std::string> names_;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long long step = 0;

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every tensor in `params` from its grad
/// (missing grads count as zero).
void adam_step(ParameterStore& params, AdamState& state, const AdamOptions& opts);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace lags::ad
