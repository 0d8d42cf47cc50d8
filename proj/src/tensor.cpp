// SPDX-License-Identifier: Apache-2.0
#include "lags/tensor.hpp"

#include <cmath>
#include <numbers>

#include "lags/error.hpp"

namespace lags::ad {

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw DomainError("operation on an unrecorded variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw DomainError("variables belong to different tapes");
  return tape_of(a);
}

}  // namespace

Tensor::Tensor(Eigen::Index rows, Eigen::Index cols, double fill, bool requires_grad)
    : value_(Matrix::Constant(rows, cols, fill)), requires_grad_(requires_grad) {}

Tensor::Tensor(Matrix value, bool requires_grad) : value_(std::move(value)), requires_grad_(requires_grad) {}

const Matrix& Tensor::grad() const {
  if (!grad_) throw DomainError("tensor has no gradient");
  return *grad_;
}

void Tensor::accumulate_grad(const Matrix& g) {
  if (g.rows() != value_.rows() || g.cols() != value_.cols()) throw DomainError("gradient shape mismatch");
  if (grad_) {
    *grad_ += g;
  } else {
    grad_ = g;
  }
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  if (value().size() != 1) throw DomainError("item() on a non-scalar of shape " + shape_str(value()));
  return value()(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Matrix& Tape::value(int id) const {
  const auto& n = nodes_[id];
  return n.source ? n.source->value() : n.value;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, false, {}, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Tape::leaf(Tensor& t) {
  nodes_.push_back(Node{Matrix{}, &t, record_ && t.requires_grad(), {}, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool rg = false;
  if (record_) {
    for (const auto& p : parents) rg = rg || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), nullptr, rg, rg ? std::move(fn) : BackwardFn{}, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw DomainError("loss belongs to a different tape");
  if (loss.value().size() != 1) throw DomainError("backward needs a scalar loss, got " + shape_str(loss.value()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.source) n.source->accumulate_grad(n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return n.grad;
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw DomainError("matmul: inner dimensions differ " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a, g * b.value().transpose());
    if (b.requires_grad()) tp.accumulate_expr(b, a.value().transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (b.requires_grad()) tp.accumulate_expr(b, -g);
  });
}

Var multiply(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("multiply", a, b);
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) tp.accumulate_expr(b, g.cwiseProduct(a.value()));
  });
}

Var divide(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("divide", a, b);
  return t.push(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a, g.cwiseQuotient(b.value()));
    if (b.requires_grad()) {
      tp.accumulate_expr(b, -(g.cwiseProduct(a.value()).array() / b.value().array().square()).matrix());
    }
  });
}

Var add_bias(const Var& a, const Var& bias) {
  Tape& t = tape_of(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DomainError("add_bias: bias " + shape_str(bias.value()) + " does not fit " + shape_str(a.value()));
  }
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return t.push(std::move(out), {a, bias}, [a, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (bias.requires_grad()) tp.accumulate_expr(bias, g.colwise().sum());
  });
}

Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

Var affine(const Var& a, double s, double shift) {
  Tape& t = tape_of(a);
  Matrix out = (s * a.value().array() + shift).matrix();
  return t.push(std::move(out), {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate_expr(a, s * g); });
}

Var scale_rows(const Var& a, const std::vector<double>& factors) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(factors.size()) != a.rows()) throw DomainError("scale_rows: factor count mismatch");
  const Eigen::Map<const Eigen::VectorXd> f(factors.data(), static_cast<Eigen::Index>(factors.size()));
  Matrix out = f.asDiagonal() * a.value();
  return t.push(std::move(out), {a}, [a, factors](Tape& tp, const Matrix& g) {
    const Eigen::Map<const Eigen::VectorXd> ff(factors.data(), static_cast<Eigen::Index>(factors.size()));
    tp.accumulate_expr(a, ff.asDiagonal() * g);
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw DomainError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseMax(0.0), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int self = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, self](Tape& tp, const Matrix& g) {
    const auto& out = tp.value(self).array();
    tp.accumulate_expr(a, (g.array() * out * (1.0 - out)).matrix());
  });
}

Var natural_log(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(a.value().array().log().matrix(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, g.cwiseQuotient(a.value()));
  });
}

Var log2(const Var& a) {
  Tape& t = tape_of(a);
  return t.push((a.value().array().log() / std::numbers::ln2).matrix(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, (g.array() / (a.value().array() * std::numbers::ln2)).matrix());
  });
}

Var abs(const Var& a) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseAbs(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, g.cwiseProduct(a.value().unaryExpr([](double v) { return (v > 0.0) - (v < 0.0) + 0.0; })));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tape& t = tape_of(a);
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  return t.push(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [a, lo, hi](Tape& tp, const Matrix& g) {
    tp.accumulate_expr(a, (a.value().array() >= lo && a.value().array() <= hi).select(g, 0.0).matrix());
  });
}

Var concat(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw DomainError("concat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate_expr(a, g.leftCols(a.cols()));
    if (b.requires_grad()) tp.accumulate_expr(b, g.rightCols(b.cols()));
  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw DomainError("slice_rows: range out of bounds");
  return t.push(a.value().middleRows(begin, count), {a}, [a, begin, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(begin, count) = g;
    tp.accumulate(a, full);
  });
}

Var gather_rows(const Var& a, const std::vector<int>& index) {
  Tape& t = tape_of(a);
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= a.rows()) throw DomainError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(index[r]);
  }
  return t.push(std::move(out), {a}, [a, index](Tape& tp, const Matrix& g) {
    Matrix acc = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t r = 0; r < index.size(); ++r) acc.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(a, acc);
  });
}

Var segment_sum(const Var& a, const std::vector<int>& segment, int segments) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(segment.size()) != a.rows()) throw DomainError("segment_sum: segment id count mismatch");
  Matrix out = Matrix::Zero(segments, a.cols());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] < 0 || segment[r] >= segments) throw DomainError("segment_sum: segment id out of range");
    out.row(segment[r]) += a.value().row(static_cast<Eigen::Index>(r));
  }
  return t.push(std::move(out), {a}, [a, segment](Tape& tp, const Matrix& g) {
    Matrix acc(a.rows(), a.cols());
    for (std::size_t r = 0; r < segment.size(); ++r) acc.row(static_cast<Eigen::Index>(r)) = g.row(segment[r]);
    tp.accumulate(a, acc);
  });
}

Var l1_normalize(const Var& a, const std::vector<int>& segment, int segments, double budget, double eps,
                 std::vector<bool>* fallback) {
  Tape& t = tape_of(a);
  if (a.cols() != 1) throw DomainError("l1_normalize expects a column vector");
  if (static_cast<Eigen::Index>(segment.size()) != a.rows()) throw DomainError("l1_normalize: segment id count mismatch");
  const Matrix& x = a.value();
  std::vector<double> total(segments, 0.0);
  std::vector<int> count(segments, 0);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] < 0 || segment[r] >= segments) throw DomainError("l1_normalize: segment id out of range");
    if (x(static_cast<Eigen::Index>(r), 0) < 0.0) throw DomainError("l1_normalize expects nonnegative inputs");
    total[segment[r]] += x(static_cast<Eigen::Index>(r), 0);
    ++count[segment[r]];
  }
  std::vector<bool> degenerate(segments);
  for (int s = 0; s < segments; ++s) degenerate[s] = total[s] < eps;
  Matrix out(a.rows(), 1);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const int s = segment[r];
    out(static_cast<Eigen::Index>(r), 0) =
        degenerate[s] ? budget / count[s] : budget * x(static_cast<Eigen::Index>(r), 0) / total[s];
  }
  if (fallback) *fallback = degenerate;
  return t.push(std::move(out), {a}, [a, segment, segments, total, degenerate, budget](Tape& tp, const Matrix& g) {
    const Matrix& xv = a.value();
    std::vector<double> dot(segments, 0.0);
    for (std::size_t r = 0; r < segment.size(); ++r) {
      dot[segment[r]] += g(static_cast<Eigen::Index>(r), 0) * xv(static_cast<Eigen::Index>(r), 0);
    }
    Matrix acc(xv.rows(), 1);
    for (std::size_t r = 0; r < segment.size(); ++r) {
      const int s = segment[r];
      const auto i = static_cast<Eigen::Index>(r);
      acc(i, 0) = degenerate[s] ? 0.0 : budget / total[s] * (g(i, 0) - dot[s] / total[s]);
    }
    tp.accumulate(a, acc);
  });
}

Var l1_normalize(const Var& a, double budget, double eps) {
  return l1_normalize(a, std::vector<int>(static_cast<std::size_t>(a.rows()), 0), 1, budget, eps);
}

Tensor& ParameterStore::add(const std::string& name, Matrix value) {
  if (contains(name)) throw DomainError("duplicate parameter '" + name + "'");
  names_.push_back(name);
  return tensors_.emplace_back(std::move(value), true);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

Tensor& ParameterStore::at(const std::string& name) {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("unknown parameter '" + name + "'");
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

const Tensor& ParameterStore::at(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("shape").at(0).get<Eigen::Index>();
  const auto cols = j.at("shape").at(1).get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("tensor data length != product of shape");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < tensors_.size(); ++i) j[names_[i]] = matrix_to_json(tensors_[i].value());
  return j;
}

void ParameterStore::load_json(const nlohmann::json& j) {
  try {
    if (j.size() != tensors_.size()) throw DataError("checkpoint tensor count does not match the model");
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      Matrix m = matrix_from_json(j.at(names_[i]));
      if (m.rows() != tensors_[i].rows() || m.cols() != tensors_[i].cols()) {
        throw DataError("checkpoint tensor '" + names_[i] + "' has the wrong shape");
      }
      tensors_[i].value() = std::move(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint tensors: ") + e.what());
  }
}

nlohmann::json AdamState::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : first_moment) m.push_back(matrix_to_json(x));
  for (const auto& x : second_moment) v.push_back(matrix_to_json(x));
  return {{"step", step}, {"first_moment", m}, {"second_moment", v}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamState s;
  s.step = j.at("step").get<long long>();
  for (const auto& x : j.at("first_moment")) s.first_moment.push_back(matrix_from_json(x));
  for (const auto& x : j.at("second_moment")) s.second_moment.push_back(matrix_from_json(x));
  return s;
}

void adam_step(ParameterStore& params, AdamState& state, const AdamOptions& opts) {
  if (state.first_moment.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
      state.second_moment.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DomainError("Adam state does not match the parameter set");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.rows() != p.rows() || m.cols() != p.cols()) throw DomainError("Adam state shape mismatch");
    if (!p.has_grad()) {
      m *= opts.beta1;
      v *= opts.beta2;
    } else {
      const Matrix& g = p.grad();
      m = opts.beta1 * m + (1.0 - opts.beta1) * g;
      v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
    }
    p.value().array() -= opts.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opts.epsilon);
  }
}

}  // namespace lags::ad
