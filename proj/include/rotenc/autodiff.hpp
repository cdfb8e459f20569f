#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rotenc/error.hpp"

/// Reverse-mode automatic differentiation over dense row-major-in-meaning
/// matrices: rows are items (atoms, edges, molecules), columns are features.
namespace rotenc::ad {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Tensor data;
  Tensor grad;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

}  // namespace detail

class Value {
 public:
  Value() = default;

  static Value constant(Tensor data);
  static Value parameter(Tensor data);

  bool defined() const { return node_ != nullptr; }
  const Tensor& data() const { return node_->data; }
  /// Direct write access to the payload (optimizer updates, probing).
  Tensor& data_mut() const { return node_->data; }
  const Tensor& grad() const;
  bool has_grad() const { return node_->has_grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->data.rows(); }
  Index cols() const { return node_->data.cols(); }
  double item() const;
  void zero_grad() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Value(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// While alive, non-smooth primitives (relu, max pooling, |x|) on this thread
/// append a fingerprint of their active branch. Two evaluations with equal
/// traces lie in the same smooth piece of the function.
class NonSmoothTrace {
 public:
  NonSmoothTrace();
  ~NonSmoothTrace();
  NonSmoothTrace(const NonSmoothTrace&) = delete;
  NonSmoothTrace& operator=(const NonSmoothTrace&) = delete;

  const std::vector<std::uint64_t>& events() const { return events_; }
  void record(std::uint64_t fingerprint) { events_.push_back(fingerprint); }

 private:
  std::vector<std::uint64_t> events_;
  NonSmoothTrace* previous_;
};

enum class Activation { relu, silu };

/// out = x * w where every output row depends only on the matching input row
/// through an identical sequence of floating-point operations.
Tensor rowwise_product(const Tensor& x, const Tensor& w);

// Primitives. Shape violations throw Error(ShapeError) naming both shapes.
Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double factor);
/// a (n x m) plus a 1 x m row broadcast over rows.
Value add_row(const Value& a, const Value& row);
Value relu(const Value& x);
Value silu(const Value& x);
Value activate(const Value& x, Activation activation);
Value sum(const Value& x);
Value mean(const Value& x);
/// Column means over rows (1 x m); order-independent.
Value mean_rows(const Value& x);
/// Column maxima over rows (1 x m).
Value max_rows(const Value& x);
/// Row i of the result is the sum of input rows whose segment is i
/// (scatter-add). Sums are order-independent; empty segments are zero.
Value segment_sum(const Value& x, const std::vector<Index>& segment, Index segments);
Value segment_mean(const Value& x, const std::vector<Index>& segment, Index segments);
Value segment_max(const Value& x, const std::vector<Index>& segment, Index segments);
Value gather_rows(const Value& x, const std::vector<Index>& rows);
Value concat_cols(const std::vector<Value>& parts);
Value concat_rows(const std::vector<Value>& parts);
/// Subtracts the column means from every row.
Value center_rows(const Value& x);
Value mse(const Value& prediction, const Value& target);
/// Sum of absolute values (1 x 1); sign(0) = 0.
Value l1_norm(const Value& x);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Normalizes each column with batch statistics and updates the running
/// statistics in place (running_var tracks the unbiased batch variance).
Value batchnorm_train(const Value& x, const Value& gamma, const Value& beta, const Value& running_mean,
                      const Value& running_var, const BatchNormOptions& options = {});
/// Affine map using the stored running statistics.
Value batchnorm_eval(const Value& x, const Value& gamma, const Value& beta, const Value& running_mean,
                     const Value& running_var, const BatchNormOptions& options = {});

/// Populates grad on every reachable node that requires it. Gradients
/// accumulate; clear parameters with ParameterStore::zero_grad between steps.
void backward(const Value& root);

class ParameterStore {
 public:
  ParameterStore() = default;
  /// Copies hold their own tensors; gradients start cleared.
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Value& add(const std::string& name, Tensor init);
  const Value& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Value> params_;
};

struct GradientCheckResult {
  double max_rel_err = 0.0;
  std::size_t probes = 0;
  std::size_t skipped = 0;
};

/// Compares backward gradients against central differences on randomly
/// chosen scalar parameters. A probe is skipped when the perturbation moves
/// any non-smooth primitive to a different branch (including inputs sitting
/// exactly on a kink), since the derivative is undefined there.
GradientCheckResult gradient_check(const std::function<Value()>& f, ParameterStore& store, double h,
                                   std::size_t n_probe, std::uint64_t seed);

}  // namespace rotenc::ad
