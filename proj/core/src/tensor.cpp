#include "metavi/tensor.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <utility>

namespace metavi {

namespace {

std::shared_ptr<TensorImpl> make_impl(std::size_t rows, std::size_t cols,
                                      double v) {
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->value.assign(rows * cols, v);
  return impl;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor(make_impl(rows, cols, 0.0));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  return Tensor(make_impl(rows, cols, v));
}

Tensor Tensor::from(std::vector<double> data, std::size_t rows,
                    std::size_t cols) {
  if (data.size() != rows * cols)
    throw ShapeError("Tensor::from: data length " +
                     std::to_string(data.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->value = std::move(data);
  return Tensor(impl);
}

Tensor Tensor::row(std::vector<double> data) {
  std::size_t n = data.size();
  return from(std::move(data), 1, n);
}

Tensor Tensor::column(std::vector<double> data) {
  std::size_t n = data.size();
  return from(std::move(data), n, 1);
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("Tensor::item on non-scalar (" + std::to_string(rows()) +
                     "x" + std::to_string(cols()) + ")");
  return impl_->value[0];
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1)
    throw ShapeError("backward: root must be scalar, got " +
                     std::to_string(root.rows()) + "x" +
                     std::to_string(root.cols()));
  root.impl()->ensure_grad();
  root.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite(const Tensor& t, const std::string& what) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw NumericError("non-finite value in " + what);
}

// --- op implementations ------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dims mismatch " + std::to_string(a.cols()) + " vs " +
              std::to_string(b.rows()));
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
    }
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  tape.record([ai, bi, oi, m, k, n] {
    ai->ensure_grad();
    bi->ensure_grad();
    oi->ensure_grad();
    const auto& og = oi->grad;
    // dA = dO * B^T ; dB = A^T * dO
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = og[i * n + j];
        if (g == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          ai->grad[i * k + p] += g * bi->value[p * n + j];
          bi->grad[p * n + j] += g * ai->value[i * k + p];
        }
      }
  });
  return out;
}

namespace {

// Shared skeleton for elementwise binary ops over equal shapes.
template <class F, class DF>
Tensor binary_op(Tape& tape, const Tensor& a, const Tensor& b, F f, DF df,
                 const char* name) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(name) + ": shape mismatch");
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = f(a.data()[i], b.data()[i]);
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  tape.record([ai, bi, oi, df] {
    ai->ensure_grad();
    bi->ensure_grad();
    oi->ensure_grad();  // output may be a dead end of the graph
    for (std::size_t i = 0; i < oi->value.size(); ++i) {
      auto [da, db] = df(ai->value[i], bi->value[i]);
      ai->grad[i] += oi->grad[i] * da;
      bi->grad[i] += oi->grad[i] * db;
    }
  });
  return out;
}

template <class F, class DF>
Tensor unary_op(Tape& tape, const Tensor& a, F f, DF df) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = f(a.data()[i]);
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi, df] {
    ai->ensure_grad();
    oi->ensure_grad();  // output may be a dead end of the graph
    for (std::size_t i = 0; i < oi->value.size(); ++i)
      ai->grad[i] += oi->grad[i] * df(ai->value[i]);
  });
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; }, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; }, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; }, "mul");
}

Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& b) {
  require(b.rows() == 1 && b.cols() == a.cols(),
          "add_rowvec: b must be 1x" + std::to_string(a.cols()) + ", got " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.at(i, j) = a.at(i, j) + b.at(0, j);
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  tape.record([ai, bi, oi, n] {
    ai->ensure_grad();
    bi->ensure_grad();
    oi->ensure_grad();
    for (std::size_t i = 0; i < oi->rows; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = oi->grad[i * n + j];
        ai->grad[i * n + j] += g;
        bi->grad[j] += g;
      }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  return unary_op(
      tape, a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double c) {
  return unary_op(
      tape, a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Tensor neg(Tape& tape, const Tensor& a) { return scale(tape, a, -1.0); }

Tensor relu(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  return unary_op(
      tape, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Tensor softplus(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return stable_softplus(x); },
      [](double x) { return stable_sigmoid(x); });
}

Tensor log_softplus(Tape& tape, const Tensor& a) {
  // log(softplus(x)) without the underflow of the naive composition:
  // softplus(x) ~ exp(x) for very negative x, so the log tends to x.
  return unary_op(
      tape, a,
      [](double x) {
        if (x < -36.0) return x;
        return std::log(stable_softplus(x));
      },
      [](double x) {
        if (x < -36.0) return 1.0;
        return stable_sigmoid(x) / stable_softplus(x);
      });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return stable_sigmoid(x); },
      [](double x) {
        double s = stable_sigmoid(x);
        return s * (1.0 - s);
      });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Tensor log(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor square(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return x * x; },
      [](double x) { return 2.0 * x; });
}

Tensor lgamma(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return std::lgamma(x); },
      [](double x) { return boost::math::digamma(x); });
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi] {
    ai->ensure_grad();
    oi->ensure_grad();
    for (double& g : ai->grad) g += oi->grad[0];
  });
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
  return scale(tape, sum_all(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), 1);
  std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
    out.at(i, 0) = s;
  }
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi, n] {
    ai->ensure_grad();
    oi->ensure_grad();
    for (std::size_t i = 0; i < oi->rows; ++i)
      for (std::size_t j = 0; j < n; ++j)
        ai->grad[i * n + j] += oi->grad[i];
  });
  return out;
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  std::size_t n = a.rows(), d = a.cols();
  require(n >= 1, "mean_rows: empty input");
  Tensor out = Tensor::zeros(1, d);
  // Kahan summation per column: keeps the pooled summary stable under row
  // permutations.
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double y = a.at(i, j) - comp;
      double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    out.at(0, j) = sum / static_cast<double>(n);
  }
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi, n, d] {
    ai->ensure_grad();
    oi->ensure_grad();
    double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        ai->grad[i * d + j] += oi->grad[j] * inv;
  });
  return out;
}

Tensor broadcast_col(Tape& tape, const Tensor& a, std::size_t n) {
  require(a.cols() == 1, "broadcast_col: input must be Mx1");
  Tensor out = Tensor::zeros(a.rows(), n);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, 0);
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi, n] {
    ai->ensure_grad();
    oi->ensure_grad();
    for (std::size_t i = 0; i < ai->rows; ++i)
      for (std::size_t j = 0; j < n; ++j)
        ai->grad[i] += oi->grad[i * n + j];
  });
  return out;
}

Tensor concat_rowvec(Tape& tape, const Tensor& a, const Tensor& b) {
  require(b.rows() == 1, "concat_rowvec: b must be a row vector");
  std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = Tensor::zeros(m, p + q);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) = a.at(i, j);
    for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = b.at(0, j);
  }
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  tape.record([ai, bi, oi, m, p, q] {
    ai->ensure_grad();
    bi->ensure_grad();
    oi->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < p; ++j)
        ai->grad[i * p + j] += oi->grad[i * (p + q) + j];
      for (std::size_t j = 0; j < q; ++j)
        bi->grad[j] += oi->grad[i * (p + q) + p + j];
    }
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t c0, std::size_t c1) {
  require(c0 < c1 && c1 <= a.cols(), "slice_cols: bad column range");
  std::size_t m = a.rows(), n = a.cols(), w = c1 - c0;
  Tensor out = Tensor::zeros(m, w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = a.at(i, c0 + j);
  auto ai = a.impl(), oi = out.impl();
  tape.record([ai, oi, m, n, w, c0] {
    ai->ensure_grad();
    oi->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j)
        ai->grad[i * n + c0 + j] += oi->grad[i * w + j];
  });
  return out;
}

}  // namespace metavi
