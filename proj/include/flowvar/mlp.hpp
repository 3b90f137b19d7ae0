#pragma once

#include <Eigen/Dense>

#include "flowvar/rng.hpp"

namespace flowvar {

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluLambda = 1.0507009873554805;

double selu(double x);
double selu_grad(double x);

// Three-layer perceptron v(x, t): input [x, t] (d+1), two hidden layers of
// width `hidden` with SELU, linear output of size d. Weights are stored
// row-major as (out x in) matrices. Training requires exclusive access;
// evaluation is const and thread-safe.
struct MlpField {
  int in_dim = 0;   // d + 1
  int hidden = 64;
  int out_dim = 0;  // d
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  // Symmetric uniform fan-in init, biases zero.
  static MlpField init(int d, int hidden, Rng& rng);

  int param_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);
};

// Activations kept for the backward pass.
struct MlpCache {
  Eigen::MatrixXd a0, z1, h1, z2, h2;
};

// Rows of x are points, t broadcast (scalar) or per-row.
Eigen::MatrixXd mlp_forward(const MlpField& f, const Eigen::MatrixXd& x,
                            double t);
Eigen::MatrixXd mlp_forward(const MlpField& f, const Eigen::MatrixXd& x,
                            const Eigen::VectorXd& t);
Eigen::MatrixXd mlp_forward_cached(const MlpField& f, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& t, MlpCache& cache);

struct MlpGrads {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  Eigen::VectorXd flatten() const;
};

// Exact gradients of the forward map contracted with `upstream`
// (upstream = dL/d_output, one row per sample). When input_grad is non-null
// it receives dL/d[x, t] (n x (d+1)).
MlpGrads mlp_backward(const MlpField& f, const MlpCache& cache,
                      const Eigen::MatrixXd& upstream,
                      Eigen::MatrixXd* input_grad = nullptr);

Eigen::VectorXd mlp_eval(const MlpField& f, const Eigen::VectorXd& x,
                         double t);

}  // namespace flowvar
