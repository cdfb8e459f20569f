#include "rotenc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "rotenc/numeric.hpp"
#include "rotenc/random.hpp"

namespace rotenc::ad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local NonSmoothTrace* t_trace = nullptr;

std::string shape(const Tensor& t) {
  std::ostringstream os;
  os << "(" << t.rows() << "x" << t.cols() << ")";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorCode::ShapeError, std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

void accumulate(detail::Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  if (n.grad.rows() != n.data.rows() || n.grad.cols() != n.data.cols()) {
    n.grad = Tensor::Zero(n.data.rows(), n.data.cols());
  }
  n.grad += g;
}

detail::Node& in(detail::Node& self, std::size_t i) { return *self.inputs[i]; }

Value record(Tensor data, std::vector<Value> inputs, std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->data = std::move(data);
  if (t_grad_enabled) {
    bool any = false;
    for (const Value& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Value& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(backward);
    }
  }
  return Value(std::move(node));
}

std::uint64_t fingerprint_signs(const Tensor& x) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const std::uint64_t s = v > 0.0 ? 2 : (v < 0.0 ? 0 : 1);
    h = (h ^ s) * 1099511628211ULL;
  }
  return h;
}

std::uint64_t fingerprint_indices(const std::vector<Index>& idx) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Index i : idx) h = (h ^ static_cast<std::uint64_t>(i)) * 1099511628211ULL;
  return h;
}

void trace(std::uint64_t fp) {
  if (t_trace != nullptr) t_trace->record(fp);
}

void check_segments(const char* op, const Tensor& x, const std::vector<Index>& segment, Index segments) {
  if (static_cast<Index>(segment.size()) != x.rows()) {
    throw Error(ErrorCode::ShapeError, std::string(op) + ": segment ids " + std::to_string(segment.size()) +
                                           " for input " + shape(x));
  }
  for (Index s : segment) {
    if (s < 0 || s >= segments) {
      throw Error(ErrorCode::ShapeError, std::string(op) + ": segment id " + std::to_string(s) + " outside [0, " +
                                             std::to_string(segments) + ")");
    }
  }
}

std::vector<std::vector<Index>> group_rows(const std::vector<Index>& segment, Index segments) {
  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(segments));
  for (std::size_t i = 0; i < segment.size(); ++i) groups[static_cast<std::size_t>(segment[i])].push_back(static_cast<Index>(i));
  return groups;
}

Tensor grouped_sums(const Tensor& x, const std::vector<std::vector<Index>>& groups) {
  Tensor out = Tensor::Zero(static_cast<Index>(groups.size()), x.cols());
  std::vector<double> terms;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    const auto& rows = groups[s];
    if (rows.empty()) continue;
    terms.resize(rows.size());
    for (Index j = 0; j < x.cols(); ++j) {
      for (std::size_t r = 0; r < rows.size(); ++r) terms[r] = x(rows[r], j);
      out(static_cast<Index>(s), j) = order_independent_sum(terms);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Value Value::constant(Tensor data) {
  auto node = std::make_shared<detail::Node>();
  node->data = std::move(data);
  return Value(std::move(node));
}

Value Value::parameter(Tensor data) {
  auto node = std::make_shared<detail::Node>();
  node->grad = Tensor::Zero(data.rows(), data.cols());
  node->data = std::move(data);
  node->requires_grad = true;
  return Value(std::move(node));
}

const Tensor& Value::grad() const {
  if (node_->grad.rows() != node_->data.rows() || node_->grad.cols() != node_->data.cols()) {
    node_->grad = Tensor::Zero(node_->data.rows(), node_->data.cols());
  }
  return node_->grad;
}

double Value::item() const {
  if (node_->data.size() != 1) {
    throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape(node_->data));
  }
  return node_->data(0, 0);
}

void Value::zero_grad() const {
  node_->grad = Tensor::Zero(node_->data.rows(), node_->data.cols());
  node_->has_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

NonSmoothTrace::NonSmoothTrace() : previous_(t_trace) { t_trace = this; }
NonSmoothTrace::~NonSmoothTrace() { t_trace = previous_; }

// ---------------------------------------------------------------------------

Tensor rowwise_product(const Tensor& x, const Tensor& w) {
  if (x.cols() != w.rows()) shape_error("matmul", x, w);
  Tensor out = Tensor::Zero(x.rows(), w.cols());
  for (Index j = 0; j < w.cols(); ++j) {
    for (Index k = 0; k < w.rows(); ++k) out.col(j) += w(k, j) * x.col(k);
  }
  return out;
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.data(), b.data());
  return record(rowwise_product(a.data(), b.data()), {a, b}, [](detail::Node& self) {
    detail::Node& x = in(self, 0);
    detail::Node& w = in(self, 1);
    if (x.requires_grad) accumulate(x, rowwise_product(self.grad, w.data.transpose()));
    if (w.requires_grad) accumulate(w, x.data.transpose() * self.grad);
  });
}

Value add(const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a.data(), b.data());
  return record(a.data() + b.data(), {a, b}, [](detail::Node& self) {
    accumulate(in(self, 0), self.grad);
    accumulate(in(self, 1), self.grad);
  });
}

Value sub(const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a.data(), b.data());
  return record(a.data() - b.data(), {a, b}, [](detail::Node& self) {
    accumulate(in(self, 0), self.grad);
    accumulate(in(self, 1), -self.grad);
  });
}

Value mul(const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a.data(), b.data());
  return record(a.data().cwiseProduct(b.data()), {a, b}, [](detail::Node& self) {
    detail::Node& x = in(self, 0);
    detail::Node& y = in(self, 1);
    if (x.requires_grad) accumulate(x, self.grad.cwiseProduct(y.data));
    if (y.requires_grad) accumulate(y, self.grad.cwiseProduct(x.data));
  });
}

Value scale(const Value& a, double factor) {
  return record(a.data() * factor, {a}, [factor](detail::Node& self) { accumulate(in(self, 0), self.grad * factor); });
}

Value add_row(const Value& a, const Value& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.data(), row.data());
  Tensor out = a.data().rowwise() + row.data().row(0);
  return record(std::move(out), {a, row}, [](detail::Node& self) {
    accumulate(in(self, 0), self.grad);
    if (in(self, 1).requires_grad) accumulate(in(self, 1), self.grad.colwise().sum());
  });
}

Value relu(const Value& x) {
  trace(fingerprint_signs(x.data()));
  return record(x.data().cwiseMax(0.0), {x}, [](detail::Node& self) {
    detail::Node& src = in(self, 0);
    accumulate(src, (src.data.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
  });
}

Value silu(const Value& x) {
  const Tensor sig = (1.0 + (-x.data().array()).exp()).inverse().matrix();
  Tensor out = x.data().cwiseProduct(sig);
  return record(std::move(out), {x}, [sig](detail::Node& self) {
    const auto& v = in(self, 0).data.array();
    const auto d = sig.array() * (1.0 + v * (1.0 - sig.array()));
    accumulate(in(self, 0), (self.grad.array() * d).matrix());
  });
}

Value activate(const Value& x, Activation activation) {
  return activation == Activation::relu ? relu(x) : silu(x);
}

Value sum(const Value& x) {
  Tensor out(1, 1);
  out(0, 0) = x.data().sum();
  return record(std::move(out), {x}, [](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    accumulate(in(self, 0), Tensor::Constant(src.data.rows(), src.data.cols(), self.grad(0, 0)));
  });
}

Value mean(const Value& x) {
  if (x.data().size() == 0) throw Error(ErrorCode::ShapeError, "mean of empty tensor");
  const double n = static_cast<double>(x.data().size());
  return scale(sum(x), 1.0 / n);
}

Value mean_rows(const Value& x) {
  if (x.rows() == 0) throw Error(ErrorCode::ShapeError, "mean_rows of tensor with no rows");
  const double n = static_cast<double>(x.rows());
  Tensor out = column_sums(x.data()) / n;
  return record(std::move(out), {x}, [n](detail::Node& self) {
    const Index rows = in(self, 0).data.rows();
    accumulate(in(self, 0), (self.grad / n).replicate(rows, 1));
  });
}

Value max_rows(const Value& x) {
  if (x.rows() == 0) throw Error(ErrorCode::ShapeError, "max_rows of tensor with no rows");
  std::vector<Index> arg(static_cast<std::size_t>(x.cols()));
  Tensor out(1, x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    Index best = 0;
    x.data().col(j).maxCoeff(&best);
    arg[static_cast<std::size_t>(j)] = best;
    out(0, j) = x.data()(best, j);
  }
  trace(fingerprint_indices(arg));
  return record(std::move(out), {x}, [arg](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    Tensor g = Tensor::Zero(src.data.rows(), src.data.cols());
    for (Index j = 0; j < g.cols(); ++j) g(arg[static_cast<std::size_t>(j)], j) = self.grad(0, j);
    accumulate(in(self, 0), g);
  });
}

Value segment_sum(const Value& x, const std::vector<Index>& segment, Index segments) {
  check_segments("segment_sum", x.data(), segment, segments);
  Tensor out = grouped_sums(x.data(), group_rows(segment, segments));
  return record(std::move(out), {x}, [segment](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    Tensor g(src.data.rows(), src.data.cols());
    for (std::size_t i = 0; i < segment.size(); ++i) g.row(static_cast<Index>(i)) = self.grad.row(segment[i]);
    accumulate(in(self, 0), g);
  });
}

Value segment_mean(const Value& x, const std::vector<Index>& segment, Index segments) {
  check_segments("segment_mean", x.data(), segment, segments);
  const auto groups = group_rows(segment, segments);
  Tensor out = grouped_sums(x.data(), groups);
  std::vector<double> inv_count(groups.size(), 0.0);
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (!groups[s].empty()) inv_count[s] = 1.0 / static_cast<double>(groups[s].size());
    out.row(static_cast<Index>(s)) *= inv_count[s];
  }
  return record(std::move(out), {x}, [segment, inv_count](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    Tensor g(src.data.rows(), src.data.cols());
    for (std::size_t i = 0; i < segment.size(); ++i) {
      const auto s = static_cast<std::size_t>(segment[i]);
      g.row(static_cast<Index>(i)) = self.grad.row(segment[i]) * inv_count[s];
    }
    accumulate(in(self, 0), g);
  });
}

Value segment_max(const Value& x, const std::vector<Index>& segment, Index segments) {
  check_segments("segment_max", x.data(), segment, segments);
  const auto groups = group_rows(segment, segments);
  Tensor out = Tensor::Zero(segments, x.cols());
  std::vector<Index> arg(static_cast<std::size_t>(segments * x.cols()), -1);
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) continue;
    for (Index j = 0; j < x.cols(); ++j) {
      Index best = groups[s].front();
      for (Index r : groups[s]) {
        if (x.data()(r, j) > x.data()(best, j)) best = r;
      }
      out(static_cast<Index>(s), j) = x.data()(best, j);
      arg[s * static_cast<std::size_t>(x.cols()) + static_cast<std::size_t>(j)] = best;
    }
  }
  trace(fingerprint_indices(arg));
  return record(std::move(out), {x}, [arg](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    Tensor g = Tensor::Zero(src.data.rows(), src.data.cols());
    const Index cols = g.cols();
    for (Index s = 0; s < self.grad.rows(); ++s) {
      for (Index j = 0; j < cols; ++j) {
        const Index r = arg[static_cast<std::size_t>(s * cols + j)];
        if (r >= 0) g(r, j) += self.grad(s, j);
      }
    }
    accumulate(in(self, 0), g);
  });
}

Value gather_rows(const Value& x, const std::vector<Index>& rows) {
  Tensor out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw Error(ErrorCode::ShapeError, "gather_rows: row " + std::to_string(rows[i]) + " outside " + shape(x.data()));
    }
    out.row(static_cast<Index>(i)) = x.data().row(rows[i]);
  }
  return record(std::move(out), {x}, [rows](detail::Node& self) {
    const detail::Node& src = in(self, 0);
    Tensor g = Tensor::Zero(src.data.rows(), src.data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += self.grad.row(static_cast<Index>(i));
    accumulate(in(self, 0), g);
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeError, "concat_cols of nothing");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Value& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts.front().data(), p.data());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const Value& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.data();
    at += p.cols();
  }
  return record(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      detail::Node& src = in(self, i);
      if (src.requires_grad) accumulate(src, self.grad.middleCols(offsets[i], src.data.cols()));
    }
  });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeError, "concat_rows of nothing");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Value& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().data(), p.data());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const Value& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.data();
    at += p.rows();
  }
  return record(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      detail::Node& src = in(self, i);
      if (src.requires_grad) accumulate(src, self.grad.middleRows(offsets[i], src.data.rows()));
    }
  });
}

Value center_rows(const Value& x) {
  if (x.rows() == 0) throw Error(ErrorCode::ShapeError, "center_rows of tensor with no rows");
  Tensor out = x.data().rowwise() - column_means(x.data());
  return record(std::move(out), {x}, [](detail::Node& self) {
    Tensor g = self.grad.rowwise() - self.grad.colwise().mean();
    accumulate(in(self, 0), g);
  });
}

Value mse(const Value& prediction, const Value& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    shape_error("mse", prediction.data(), target.data());
  }
  if (prediction.data().size() == 0) throw Error(ErrorCode::ShapeError, "mse of empty tensors");
  const double n = static_cast<double>(prediction.data().size());
  Tensor out(1, 1);
  out(0, 0) = (prediction.data() - target.data()).squaredNorm() / n;
  return record(std::move(out), {prediction, target}, [n](detail::Node& self) {
    detail::Node& p = in(self, 0);
    detail::Node& t = in(self, 1);
    const Tensor diff = (p.data - t.data) * (2.0 * self.grad(0, 0) / n);
    if (p.requires_grad) accumulate(p, diff);
    if (t.requires_grad) accumulate(t, -diff);
  });
}

Value l1_norm(const Value& x) {
  trace(fingerprint_signs(x.data()));
  Tensor out(1, 1);
  out(0, 0) = x.data().cwiseAbs().sum();
  return record(std::move(out), {x}, [](detail::Node& self) {
    const Tensor& v = in(self, 0).data;
    Tensor sign = v.unaryExpr([](double a) { return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0); });
    accumulate(in(self, 0), sign * self.grad(0, 0));
  });
}

namespace {

void check_norm_shapes(const char* op, const Value& x, const Value& gamma, const Value& beta, const Value& mean,
                       const Value& var) {
  for (const Value* v : {&gamma, &beta, &mean, &var}) {
    if (v->rows() != 1 || v->cols() != x.cols()) shape_error(op, x.data(), v->data());
  }
}

}  // namespace

Value batchnorm_train(const Value& x, const Value& gamma, const Value& beta, const Value& running_mean,
                      const Value& running_var, const BatchNormOptions& options) {
  check_norm_shapes("batchnorm", x, gamma, beta, running_mean, running_var);
  const Index n = x.rows();
  if (n == 0) throw Error(ErrorCode::ShapeError, "batchnorm of tensor with no rows");
  const Eigen::RowVectorXd mu = x.data().colwise().mean();
  const Tensor centered = x.data().rowwise() - mu;
  const Eigen::RowVectorXd var = centered.cwiseAbs2().colwise().mean();
  const Eigen::RowVectorXd inv_std = (var.array() + options.eps).rsqrt().matrix();
  const Tensor xhat = centered.array().rowwise() * inv_std.array();
  Tensor out = (xhat.array().rowwise() * gamma.data().row(0).array()).rowwise() + beta.data().row(0).array();

  const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
  running_mean.data_mut() = (1.0 - options.momentum) * running_mean.data() + options.momentum * mu;
  running_var.data_mut() = (1.0 - options.momentum) * running_var.data() + options.momentum * unbias * var;

  return record(std::move(out), {x, gamma, beta}, [xhat, inv_std](detail::Node& self) {
    detail::Node& src = in(self, 0);
    detail::Node& g = in(self, 1);
    detail::Node& b = in(self, 2);
    const double count = static_cast<double>(xhat.rows());
    if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
    if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
    if (src.requires_grad) {
      const Tensor dxhat = self.grad.array().rowwise() * g.data.row(0).array();
      const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
      Tensor dx = (count * dxhat).rowwise() - sum_d;
      dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
      dx = (dx.array().rowwise() * (inv_std.array() / count)).matrix();
      accumulate(src, dx);
    }
  });
}

Value batchnorm_eval(const Value& x, const Value& gamma, const Value& beta, const Value& running_mean,
                     const Value& running_var, const BatchNormOptions& options) {
  check_norm_shapes("batchnorm", x, gamma, beta, running_mean, running_var);
  const Eigen::RowVectorXd inv_std = (running_var.data().row(0).array() + options.eps).rsqrt().matrix();
  const Tensor xhat = (x.data().rowwise() - running_mean.data().row(0)).array().rowwise() * inv_std.array();
  Tensor out = (xhat.array().rowwise() * gamma.data().row(0).array()).rowwise() + beta.data().row(0).array();
  return record(std::move(out), {x, gamma, beta}, [xhat, inv_std](detail::Node& self) {
    detail::Node& src = in(self, 0);
    detail::Node& g = in(self, 1);
    detail::Node& b = in(self, 2);
    if (g.requires_grad) accumulate(g, self.grad.cwiseProduct(xhat).colwise().sum());
    if (b.requires_grad) accumulate(b, self.grad.colwise().sum());
    if (src.requires_grad) {
      accumulate(src, (self.grad.array().rowwise() * (g.data.row(0).array() * inv_std.array())).matrix());
    }
  });
}

// ---------------------------------------------------------------------------

void backward(const Value& root) {
  if (!root.defined() || root.data().size() != 1) {
    throw Error(ErrorCode::NotScalar,
                "backward needs a 1x1 root, got " + (root.defined() ? shape(root.data()) : std::string("(undefined)")));
  }
  if (!root.requires_grad()) return;

  // Post-order DFS: inputs before consumers; reversed gives a valid sweep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->grad.rows() != node->data.rows() || node->grad.cols() != node->data.cols()) {
      node->grad = Tensor::Zero(node->data.rows(), node->data.cols());
    }
    node->has_grad = true;
  }
  root.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------

ParameterStore::ParameterStore(const ParameterStore& other) {
  for (const auto& [name, v] : other.params_) params_.emplace(name, Value::parameter(v.data()));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    params_ = std::move(copy.params_);
  }
  return *this;
}

Value& ParameterStore::add(const std::string& name, Tensor init) {
  if (params_.count(name) != 0) throw Error(ErrorCode::InvalidInput, "duplicate parameter name " + name);
  return params_.emplace(name, Value::parameter(std::move(init))).first->second;
}

const Value& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidInput, "unknown parameter " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : params_) v.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += static_cast<std::size_t>(v.data().size());
  return n;
}

// ---------------------------------------------------------------------------

GradientCheckResult gradient_check(const std::function<Value()>& f, ParameterStore& store, double h,
                                   std::size_t n_probe, std::uint64_t seed) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidInput, "gradient_check step must be positive");

  store.zero_grad();
  std::vector<std::uint64_t> base_trace;
  {
    NonSmoothTrace tr;
    const Value loss = f();
    backward(loss);
    base_trace = tr.events();
  }

  std::vector<std::pair<const Value*, Index>> entries;
  for (const auto& [name, v] : store) {
    for (Index i = 0; i < v.data().size(); ++i) entries.emplace_back(&v, i);
  }

  GradientCheckResult result;
  if (entries.empty()) return result;
  Rng rng(seed);
  const std::size_t max_attempts = std::max<std::size_t>(10 * n_probe, 100);
  std::size_t attempts = 0;
  while (result.probes < n_probe && attempts < max_attempts) {
    ++attempts;
    const auto& [param, flat] = entries[static_cast<std::size_t>(rng.below(entries.size()))];
    const double analytic = param->grad().data()[flat];
    double& slot = param->data_mut().data()[flat];
    const double original = slot;

    auto evaluate = [&](double x, std::vector<std::uint64_t>& events) {
      slot = x;
      NoGradGuard no_grad;
      NonSmoothTrace tr;
      const double value = f().item();
      events = tr.events();
      return value;
    };
    std::vector<std::uint64_t> plus_trace;
    std::vector<std::uint64_t> minus_trace;
    const double f_plus = evaluate(original + h, plus_trace);
    const double f_minus = evaluate(original - h, minus_trace);
    slot = original;

    if (plus_trace != base_trace || minus_trace != base_trace) {
      ++result.skipped;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - numeric) / denom);
    ++result.probes;
  }
  return result;
}

}  // namespace rotenc::ad
