#include "flowvar/mlp.hpp"

#include <cmath>

#include "flowvar/errors.hpp"

namespace flowvar {

double selu(double x) {
  return x > 0.0 ? kSeluLambda * x
                 : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}

double selu_grad(double x) {
  return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

namespace {

Eigen::MatrixXd selu_mat(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return selu(v); });
}

Eigen::MatrixXd selu_grad_mat(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return selu_grad(v); });
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw DomainError(std::string("mlp: non-finite ") + what);
  }
}

}  // namespace

MlpField MlpField::init(int d, int hidden, Rng& rng) {
  MlpField f;
  f.in_dim = d + 1;
  f.hidden = hidden;
  f.out_dim = d;
  auto uniform_mat = [&rng](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
      }
    }
    return m;
  };
  f.w1 = uniform_mat(hidden, f.in_dim);
  f.w2 = uniform_mat(hidden, hidden);
  f.w3 = uniform_mat(d, hidden);
  f.b1 = Eigen::VectorXd::Zero(hidden);
  f.b2 = Eigen::VectorXd::Zero(hidden);
  f.b3 = Eigen::VectorXd::Zero(d);
  return f;
}

int MlpField::param_count() const {
  return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size() +
                          w3.size() + b3.size());
}

namespace {

void copy_out(const Eigen::MatrixXd& m, Eigen::VectorXd& out,
              Eigen::Index& pos) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out(pos++) = m(i, j);
    }
  }
}

void copy_in(Eigen::MatrixXd& m, const Eigen::VectorXd& in,
             Eigen::Index& pos) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = in(pos++);
    }
  }
}

}  // namespace

Eigen::VectorXd MlpField::flatten() const {
  Eigen::VectorXd out(param_count());
  Eigen::Index pos = 0;
  copy_out(w1, out, pos);
  for (Eigen::Index i = 0; i < b1.size(); ++i) out(pos++) = b1(i);
  copy_out(w2, out, pos);
  for (Eigen::Index i = 0; i < b2.size(); ++i) out(pos++) = b2(i);
  copy_out(w3, out, pos);
  for (Eigen::Index i = 0; i < b3.size(); ++i) out(pos++) = b3(i);
  return out;
}

void MlpField::unflatten(const Eigen::VectorXd& params) {
  if (params.size() != param_count()) {
    throw ShapeError("MlpField::unflatten: size mismatch");
  }
  Eigen::Index pos = 0;
  copy_in(w1, params, pos);
  for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = params(pos++);
  copy_in(w2, params, pos);
  for (Eigen::Index i = 0; i < b2.size(); ++i) b2(i) = params(pos++);
  copy_in(w3, params, pos);
  for (Eigen::Index i = 0; i < b3.size(); ++i) b3(i) = params(pos++);
}

Eigen::VectorXd MlpGrads::flatten() const {
  Eigen::VectorXd out(w1.size() + b1.size() + w2.size() + b2.size() +
                      w3.size() + b3.size());
  Eigen::Index pos = 0;
  copy_out(w1, out, pos);
  for (Eigen::Index i = 0; i < b1.size(); ++i) out(pos++) = b1(i);
  copy_out(w2, out, pos);
  for (Eigen::Index i = 0; i < b2.size(); ++i) out(pos++) = b2(i);
  copy_out(w3, out, pos);
  for (Eigen::Index i = 0; i < b3.size(); ++i) out(pos++) = b3(i);
  return out;
}

Eigen::MatrixXd mlp_forward_cached(const MlpField& f, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& t, MlpCache& cache) {
  const Eigen::Index n = x.rows();
  if (x.cols() + 1 != f.in_dim || t.size() != n) {
    throw ShapeError("mlp_forward: input shape mismatch");
  }
  check_finite(x, "input");
  cache.a0.resize(n, f.in_dim);
  cache.a0.leftCols(f.in_dim - 1) = x;
  cache.a0.col(f.in_dim - 1) = t;
  cache.z1 = cache.a0 * f.w1.transpose();
  cache.z1.rowwise() += f.b1.transpose();
  cache.h1 = selu_mat(cache.z1);
  cache.z2 = cache.h1 * f.w2.transpose();
  cache.z2.rowwise() += f.b2.transpose();
  cache.h2 = selu_mat(cache.z2);
  Eigen::MatrixXd out = cache.h2 * f.w3.transpose();
  out.rowwise() += f.b3.transpose();
  check_finite(out, "output");
  return out;
}

Eigen::MatrixXd mlp_forward(const MlpField& f, const Eigen::MatrixXd& x,
                            const Eigen::VectorXd& t) {
  MlpCache cache;
  return mlp_forward_cached(f, x, t, cache);
}

Eigen::MatrixXd mlp_forward(const MlpField& f, const Eigen::MatrixXd& x,
                            double t) {
  return mlp_forward(f, x, Eigen::VectorXd::Constant(x.rows(), t));
}

Eigen::VectorXd mlp_eval(const MlpField& f, const Eigen::VectorXd& x,
                         double t) {
  return mlp_forward(f, x.transpose(), t).row(0).transpose();
}

MlpGrads mlp_backward(const MlpField& f, const MlpCache& cache,
                      const Eigen::MatrixXd& upstream,
                      Eigen::MatrixXd* input_grad) {
  check_finite(upstream, "upstream gradient");
  MlpGrads g;
  g.w3 = upstream.transpose() * cache.h2;
  g.b3 = upstream.colwise().sum().transpose();
  Eigen::MatrixXd dz2 =
      (upstream * f.w3).cwiseProduct(selu_grad_mat(cache.z2));
  g.w2 = dz2.transpose() * cache.h1;
  g.b2 = dz2.colwise().sum().transpose();
  Eigen::MatrixXd dz1 = (dz2 * f.w2).cwiseProduct(selu_grad_mat(cache.z1));
  g.w1 = dz1.transpose() * cache.a0;
  g.b1 = dz1.colwise().sum().transpose();
  if (input_grad != nullptr) {
    *input_grad = dz1 * f.w1;
  }
  return g;
}

}  // namespace flowvar
