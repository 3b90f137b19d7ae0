#include "flowvar/variance.hpp"

#include <cmath>

#include "flowvar/errors.hpp"
#include "flowvar/io.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

namespace {

// Adds schedule noise to the chord in place; one normal block per row.
void add_noise(Eigen::MatrixXd& xt, double scale, Rng& rng) {
  if (scale <= 0.0) return;
  const Eigen::Index n = xt.rows();
  const Eigen::Index d = xt.cols();
  std::vector<double> buf(static_cast<std::size_t>(n * d));
  rng.fill_normal(buf.data(), buf.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      xt(i, j) += scale * buf[static_cast<std::size_t>(i * d + j)];
    }
  }
}

}  // namespace

LossSample mc_loss(const ClosedFormField& field, const CouplingBatch& batch,
                   double t, const InterpolantSpec& interp, Rng& rng) {
  batch.validate();
  interp.validate();
  if (batch.dim() != field.dim()) {
    throw ShapeError("mc_loss: field/batch dimension mismatch");
  }
  const double n = static_cast<double>(batch.n());
  const CfTimeOp op = cf_time_op(field, t);
  Eigen::MatrixXd xt = (1.0 - t) * batch.x0 + t * batch.x1;
  add_noise(xt, interp.noise_scale(t), rng);

  Eigen::MatrixXd shifted = xt;
  shifted.rowwise() -= (t * field.theta).transpose();
  Eigen::MatrixXd v = shifted * (field.Theta * op.c).transpose();
  v.rowwise() += field.theta.transpose();
  const Eigen::MatrixXd residual = batch.x1 - batch.x0 - v;

  LossSample out;
  out.loss = residual.squaredNorm() / n;
  out.grad_theta =
      (-2.0 / n) * (op.c.transpose() * residual.colwise().sum().transpose());
  const Eigen::MatrixXd u = shifted * op.c.transpose();
  out.grad_Theta = (-2.0 / n) * (op.c.transpose() * residual.transpose() * u);
  return out;
}

LossSample mc_loss(const ClosedFormField& field, const CouplingBatch& batch,
                   const Eigen::VectorXd& t, const InterpolantSpec& interp,
                   Rng& rng) {
  batch.validate();
  interp.validate();
  if (t.size() != batch.n()) {
    throw ShapeError("mc_loss: per-row times size mismatch");
  }
  const int d = field.dim();
  const double n = static_cast<double>(batch.n());
  LossSample out;
  out.loss = 0.0;
  out.grad_theta = Eigen::VectorXd::Zero(d);
  out.grad_Theta = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd noise(d);
  for (int i = 0; i < batch.n(); ++i) {
    const double ti = t(i);
    const CfTimeOp op = cf_time_op(field, ti);
    Eigen::VectorXd xt = (1.0 - ti) * batch.x0.row(i).transpose() +
                         ti * batch.x1.row(i).transpose();
    const double scale = interp.noise_scale(ti);
    if (scale > 0.0) {
      rng.fill_normal(noise.data(), static_cast<std::size_t>(d));
      xt += scale * noise;
    }
    const Eigen::VectorXd shifted = xt - ti * field.theta;
    const Eigen::VectorXd cu = op.c * shifted;
    const Eigen::VectorXd v = field.theta + field.Theta * cu;
    const Eigen::VectorXd r =
        (batch.x1.row(i) - batch.x0.row(i)).transpose() - v;
    out.loss += r.squaredNorm() / n;
    const Eigen::VectorXd ctr = op.c.transpose() * r;
    out.grad_theta += (-2.0 / n) * ctr;
    out.grad_Theta += (-2.0 / n) * (ctr * cu.transpose());
  }
  return out;
}

namespace {

LossSample mlp_loss_impl(const MlpField& field, const CouplingBatch& batch,
                         const Eigen::VectorXd& t,
                         const InterpolantSpec& interp, Rng& rng) {
  batch.validate();
  interp.validate();
  const double n = static_cast<double>(batch.n());
  Eigen::MatrixXd xt(batch.n(), batch.dim());
  Eigen::VectorXd noise(batch.dim());
  for (int i = 0; i < batch.n(); ++i) {
    const double ti = t(i);
    if (ti < 0.0 || ti > 1.0) {
      throw DomainError("mc_loss: t outside [0, 1]");
    }
    xt.row(i) = (1.0 - ti) * batch.x0.row(i) + ti * batch.x1.row(i);
    const double scale = interp.noise_scale(ti);
    if (scale > 0.0) {
      rng.fill_normal(noise.data(), static_cast<std::size_t>(noise.size()));
      xt.row(i) += scale * noise.transpose();
    }
  }
  MlpCache cache;
  const Eigen::MatrixXd v = mlp_forward_cached(field, xt, t, cache);
  const Eigen::MatrixXd residual = batch.x1 - batch.x0 - v;
  const Eigen::MatrixXd upstream = (-2.0 / n) * residual;
  const MlpGrads grads = mlp_backward(field, cache, upstream);
  LossSample out;
  out.loss = residual.squaredNorm() / n;
  out.grad_flat = grads.flatten();
  return out;
}

}  // namespace

LossSample mc_loss(const MlpField& field, const CouplingBatch& batch, double t,
                   const InterpolantSpec& interp, Rng& rng) {
  return mlp_loss_impl(field, batch,
                       Eigen::VectorXd::Constant(batch.n(), t), interp, rng);
}

LossSample mc_loss(const MlpField& field, const CouplingBatch& batch,
                   const Eigen::VectorXd& t, const InterpolantSpec& interp,
                   Rng& rng) {
  if (t.size() != batch.n()) {
    throw ShapeError("mc_loss: per-row times size mismatch");
  }
  return mlp_loss_impl(field, batch, t, interp, rng);
}

Eigen::VectorXd uniform_times(int n, Rng& rng) {
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    t(i) = rng.uniform();
  }
  return t;
}

void VarianceReport::write_csv(const std::filesystem::path& path) const {
  CsvWriter w(path,
              {"t", "variance", "ci_lo", "ci_hi", "reduction", "S", "B",
               "case"});
  for (const auto& row : rows) {
    w.field(row.t)
        .field(row.variance)
        .field(row.ci_lo)
        .field(row.ci_hi)
        .field(row.reduction)
        .field(static_cast<std::int64_t>(row.batch_size))
        .field(static_cast<std::int64_t>(row.gradient_draws))
        .field(row.case_label);
    w.end_row();
  }
}

std::vector<VarianceRow> VarianceReport::select(
    const std::string& reduction) const {
  std::vector<VarianceRow> out;
  for (const auto& row : rows) {
    if (row.reduction == reduction) out.push_back(row);
  }
  return out;
}

PairingFactory gaussian_pairing_factory(const PairingKind& kind,
                                        const GaussianSpec& source,
                                        const GaussianSpec& target) {
  return [kind, source, target](int n, Rng& rng) {
    return make_pairing(kind, source, target, n, rng);
  };
}

namespace {

double trace_of_covariance(const Eigen::MatrixXd& draws) {
  // draws: B x P; sum of per-coordinate unbiased variances.
  const Eigen::Index b = draws.rows();
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      const double d = draws(i, j) - mean(j);
      s += d * d;
    }
    acc += s / static_cast<double>(b - 1);
  }
  return acc;
}

std::pair<double, double> bootstrap_trace_ci(const Eigen::MatrixXd& draws,
                                             double level, int resamples,
                                             Rng& rng) {
  const Eigen::Index b = draws.rows();
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  Eigen::MatrixXd resampled(b, draws.cols());
  for (int r = 0; r < resamples; ++r) {
    for (Eigen::Index i = 0; i < b; ++i) {
      resampled.row(i) = draws.row(static_cast<Eigen::Index>(
          rng.uniform_below(static_cast<std::uint64_t>(b))));
    }
    stats[static_cast<std::size_t>(r)] = trace_of_covariance(resampled);
  }
  const double alpha = (1.0 - level) / 2.0;
  return {quantile(stats, alpha), quantile(stats, 1.0 - alpha)};
}

constexpr std::uint64_t kDrawStreamBase = 1ULL << 32;
constexpr std::uint64_t kBootStreamBase = 1ULL << 33;

}  // namespace

VarianceReport grad_variance_empirical(const FieldVariant& field,
                                       const PairingFactory& factory,
                                       const InterpolantSpec& interp,
                                       std::span<const double> t_grid, int S,
                                       int B, Rng& rng,
                                       const std::string& case_label) {
  if (S < 2 || B < 2) {
    throw DomainError("grad_variance_empirical: need S >= 2 and B >= 2");
  }
  if (std::holds_alternative<MemorizingField>(field)) {
    throw DomainError(
        "grad_variance_empirical: lookup fields have no parameter gradient");
  }
  const bool closed_form = std::holds_alternative<ClosedFormField>(field);
  const Eigen::Index vec_width =
      closed_form
          ? std::get<ClosedFormField>(field).theta.size()
          : static_cast<Eigen::Index>(
                std::get<MlpField>(field).param_count());

  VarianceReport report;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    const double t = t_grid[ti];
    // Per-draw gradient slots, filled in parallel, reduced in index order.
    Eigen::MatrixXd vec_draws(B, vec_width);  // theta, or flat mlp params
    Eigen::MatrixXd mat_draws;                // Theta, closed-form only
    if (closed_form) mat_draws.resize(B, vec_width * vec_width);
    std::vector<double> ones_vec(static_cast<std::size_t>(B));
    std::vector<double> ones_mat;
    if (closed_form) ones_mat.resize(static_cast<std::size_t>(B));

    parallel_for(B, [&](std::int64_t b) {
      Rng draw_rng =
          rng.child(kDrawStreamBase + ti * static_cast<std::uint64_t>(B) +
                    static_cast<std::uint64_t>(b));
      CouplingBatch batch = factory(S, draw_rng);
      if (closed_form) {
        const LossSample sample = mc_loss(std::get<ClosedFormField>(field),
                                          batch, t, interp, draw_rng);
        const Eigen::Index d = sample.grad_theta.size();
        vec_draws.row(b) = sample.grad_theta.transpose();
        for (Eigen::Index r = 0; r < d; ++r) {
          mat_draws.block(b, r * d, 1, d) = sample.grad_Theta.row(r);
        }
        ones_vec[static_cast<std::size_t>(b)] = sample.grad_theta.sum();
        ones_mat[static_cast<std::size_t>(b)] = sample.grad_Theta.sum();
      } else {
        const LossSample sample =
            mc_loss(std::get<MlpField>(field), batch, t, interp, draw_rng);
        vec_draws.row(b) = sample.grad_flat.transpose();
        ones_vec[static_cast<std::size_t>(b)] = sample.grad_flat.sum();
      }
    });

    const Rng boot_parent = rng.child(kBootStreamBase + ti);
    auto push_scalar = [&](const std::string& reduction,
                           std::span<const double> draws,
                           std::uint64_t boot_stream) {
      Rng boot = boot_parent.child(boot_stream);
      const auto [lo, hi] = bootstrap_ci(draws, 0.95, 100, boot);
      report.rows.push_back(VarianceRow{t, sample_variance(draws), lo, hi,
                                        reduction, S, B, case_label});
    };
    auto push_trace = [&](const std::string& reduction,
                          const Eigen::MatrixXd& draws,
                          std::uint64_t boot_stream) {
      Rng boot = boot_parent.child(boot_stream);
      const auto [lo, hi] = bootstrap_trace_ci(draws, 0.95, 100, boot);
      report.rows.push_back(VarianceRow{t, trace_of_covariance(draws), lo, hi,
                                        reduction, S, B, case_label});
    };

    if (closed_form) {
      push_scalar("ones-theta", ones_vec, 0);
      push_scalar("ones-Theta", ones_mat, 1);
      push_trace("trace-theta", vec_draws, 2);
      push_trace("trace-Theta", mat_draws, 3);
    } else {
      push_scalar("ones-all", ones_vec, 0);
      push_trace("trace-all", vec_draws, 2);
    }
  }
  return report;
}

AnalyticCase parse_analytic_case(const std::string& name) {
  if (name == "ot-at-ot") return AnalyticCase::kOtAtOt;
  if (name == "rot-at-ot-theta") return AnalyticCase::kRotAtOtTheta;
  if (name == "rot-at-ot-Theta") return AnalyticCase::kRotAtOtThetaMat;
  if (name == "rot-at-rot") return AnalyticCase::kRotAtRot;
  if (name == "random-at-ot") return AnalyticCase::kRandomAtOt;
  throw DomainError("unknown analytic case: " + name);
}

std::string analytic_case_name(AnalyticCase c) {
  switch (c) {
    case AnalyticCase::kOtAtOt:
      return "ot-at-ot";
    case AnalyticCase::kRotAtOtTheta:
      return "rot-at-ot-theta";
    case AnalyticCase::kRotAtOtThetaMat:
      return "rot-at-ot-Theta";
    case AnalyticCase::kRotAtRot:
      return "rot-at-rot";
    case AnalyticCase::kRandomAtOt:
      return "random-at-ot";
  }
  return "unknown";
}

double analytic_variance(AnalyticCase c, const GaussianSpec& target,
                         const std::optional<RotationSpec>& rot, double t,
                         int n) {
  target.validate();
  if (n < 1) {
    throw DomainError("analytic_variance: n must be >= 1");
  }
  const int d = target.dim();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s = sqrt_pd(target.cov);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);
  const double inv_n = 1.0 / static_cast<double>(n);

  switch (c) {
    case AnalyticCase::kOtAtOt:
      return 0.0;
    case AnalyticCase::kRotAtRot: {
      if (!rot) throw DomainError("analytic_variance: rotation required");
      const Eigen::MatrixXd theta_rot =
          s * rotation_matrix(*rot) - identity;
      const Eigen::MatrixXd a = identity + t * theta_rot;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
      if (svd.singularValues().minCoeff() < kSingularTol) {
        throw SingularityError(
            t, "analytic_variance: pair-optimal field degenerate at t = " +
                   std::to_string(t));
      }
      return 0.0;
    }
    case AnalyticCase::kRotAtOtTheta:
    case AnalyticCase::kRotAtOtThetaMat: {
      if (!rot) throw DomainError("analytic_variance: rotation required");
      const Eigen::MatrixXd r = rotation_matrix(*rot);
      const Eigen::MatrixXd theta_hat = s - identity;
      const Eigen::MatrixXd cmat =
          (identity + t * theta_hat)
              .partialPivLu()
              .solve(identity);  // always invertible for PD targets
      const Eigen::MatrixXd dmat = identity + t * (s * r - identity);
      const Eigen::MatrixXd a_mat = s * r - identity - theta_hat * cmat * dmat;
      const Eigen::VectorXd a = a_mat.transpose() * cmat.transpose() * ones;
      if (c == AnalyticCase::kRotAtOtTheta) {
        return 4.0 * a.squaredNorm() * inv_n;
      }
      const Eigen::VectorXd b = dmat.transpose() * cmat.transpose() * ones;
      const double dot = a.dot(b);
      return 4.0 * (a.squaredNorm() * b.squaredNorm() + dot * dot) * inv_n;
    }
    case AnalyticCase::kRandomAtOt: {
      const Eigen::MatrixXd theta_hat = s - identity;
      const Eigen::MatrixXd cmat =
          (identity + t * theta_hat).partialPivLu().solve(identity);
      const Eigen::VectorXd a1 =
          cmat.transpose() * (cmat.transpose() * ones);
      const double term_x1 = a1.dot(target.cov * a1);
      const Eigen::VectorXd a0 =
          (identity + (1.0 - t) * theta_hat * cmat).transpose() *
          (cmat.transpose() * ones);
      return 4.0 * (term_x1 + a0.squaredNorm()) * inv_n;
    }
  }
  throw DomainError("analytic_variance: unhandled case");
}

}  // namespace flowvar
