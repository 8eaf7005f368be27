#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace metavi {

// Errors raised by tensor ops and downstream modules.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major 2-D tensor of doubles with an optional gradient buffer.
// Vectors are 1xN or Nx1, scalars 1x1.
struct TensorImpl {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // same size as value, lazily zero-filled
  bool requires_grad = false;

  std::size_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  static Tensor from(std::vector<double> data, std::size_t rows,
                     std::size_t cols);
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor row(std::vector<double> data);
  static Tensor column(std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  std::size_t rows() const { return impl_->rows; }
  std::size_t cols() const { return impl_->cols; }
  std::size_t size() const { return impl_->size(); }

  double& at(std::size_t i, std::size_t j) {
    return impl_->value[i * impl_->cols + j];
  }
  double at(std::size_t i, std::size_t j) const {
    return impl_->value[i * impl_->cols + j];
  }
  double item() const;

  std::vector<double>& data() { return impl_->value; }
  const std::vector<double>& data() const { return impl_->value; }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }

  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool requires_grad() const { return impl_->requires_grad; }
  void zero_grad() const { impl_->grad.assign(impl_->value.size(), 0.0); }

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Define-by-run gradient tape. Nodes are appended in forward order, so a
// reverse sweep respects data dependencies by construction.
class Tape {
 public:
  void record(std::function<void()> pull) { nodes_.push_back(std::move(pull)); }

  // Seeds root's grad with 1 and pulls gradients back through every node.
  // root must be scalar.
  void backward(const Tensor& root);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// --- differentiable ops -----------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// a: MxN, b: 1xN, added to every row.
Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor add_scalar(Tape& tape, const Tensor& a, double c);
Tensor neg(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor leaky_relu(Tape& tape, const Tensor& a, double slope = 0.01);
Tensor softplus(Tape& tape, const Tensor& a);
Tensor log_softplus(Tape& tape, const Tensor& a);  // stable log(softplus(x))
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor square(Tape& tape, const Tensor& a);
Tensor lgamma(Tape& tape, const Tensor& a);
Tensor sum_all(Tape& tape, const Tensor& a);            // -> 1x1
Tensor mean_all(Tape& tape, const Tensor& a);           // -> 1x1
Tensor row_sum(Tape& tape, const Tensor& a);            // MxN -> Mx1
// Column means over the row axis with compensated (Kahan) summation, so the
// result is invariant to row order.
Tensor mean_rows(Tape& tape, const Tensor& a);          // NxD -> 1xD
Tensor broadcast_col(Tape& tape, const Tensor& a, std::size_t n);  // Mx1 -> MxN
// Concatenate a 1xQ row vector onto every row of a MxP matrix -> Mx(P+Q).
Tensor concat_rowvec(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t c0, std::size_t c1);

// Numerically stable scalar helpers shared by ops and distributions.
double stable_softplus(double x);
double stable_sigmoid(double x);

// Throws NumericError naming `what` if any entry is NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace metavi
