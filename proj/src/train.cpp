#include "flowvar/train.hpp"

#include <cmath>
#include <numeric>

#include "flowvar/errors.hpp"
#include "flowvar/io.hpp"

namespace flowvar {

void TrainConfig::validate() const {
  if (lr < 0.0) throw DomainError("TrainConfig: learning rate must be >= 0");
  if (batch_size < 1) throw DomainError("TrainConfig: batch size must be >= 1");
  if (max_steps < 0) throw DomainError("TrainConfig: max steps must be >= 0");
  if (sigma < 0.0) throw DomainError("TrainConfig: sigma must be >= 0");
  if (times_per_pair < 1) {
    throw DomainError("TrainConfig: times_per_pair must be >= 1");
  }
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
  CsvWriter w(path, {"step", "loss", "grad_norm"});
  for (const auto& row : rows) {
    w.field(static_cast<std::int64_t>(row.step))
        .field(row.loss)
        .field(row.grad_norm);
    w.end_row();
  }
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grad.size()) {
    throw ShapeError("adam_step: params/grad size mismatch");
  }
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v =
      config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double bc1 =
      1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 =
      1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const Eigen::VectorXd m_hat = state.m / bc1;
  const Eigen::VectorXd v_hat = state.v / bc2;
  params.array() -= config.lr * m_hat.array() /
                    (v_hat.array().sqrt() + config.adam_eps);
}

namespace {

// Parameter access shared by the two field kinds.
struct MlpParamOps {
  MlpField& field;
  Eigen::VectorXd get() const { return field.flatten(); }
  void set(const Eigen::VectorXd& p) { field.unflatten(p); }
  LossSample loss(const CouplingBatch& batch, const Eigen::VectorXd& t,
                  const InterpolantSpec& interp, Rng& rng) const {
    return mc_loss(field, batch, t, interp, rng);
  }
  static Eigen::VectorXd grad(const LossSample& s) { return s.grad_flat; }
};

struct CfParamOps {
  ClosedFormField& field;
  Eigen::VectorXd get() const {
    const int d = field.dim();
    Eigen::VectorXd p(d + d * d);
    p.head(d) = field.theta;
    for (int r = 0; r < d; ++r) {
      p.segment(d + r * d, d) = field.Theta.row(r).transpose();
    }
    return p;
  }
  void set(const Eigen::VectorXd& p) {
    const int d = field.dim();
    field.theta = p.head(d);
    for (int r = 0; r < d; ++r) {
      field.Theta.row(r) = p.segment(d + r * d, d).transpose();
    }
  }
  LossSample loss(const CouplingBatch& batch, const Eigen::VectorXd& t,
                  const InterpolantSpec& interp, Rng& rng) const {
    return mc_loss(field, batch, t, interp, rng);
  }
  static Eigen::VectorXd grad(const LossSample& s) {
    const Eigen::Index d = s.grad_theta.size();
    Eigen::VectorXd g(d + d * d);
    g.head(d) = s.grad_theta;
    for (Eigen::Index r = 0; r < d; ++r) {
      g.segment(d + r * d, d) = s.grad_Theta.row(r).transpose();
    }
    return g;
  }
};

CouplingBatch take_rows(const CouplingBatch& data,
                        const std::vector<int>& idx) {
  CouplingBatch sub;
  sub.kind = data.kind;
  sub.x0.resize(static_cast<Eigen::Index>(idx.size()), data.dim());
  sub.x1.resize(static_cast<Eigen::Index>(idx.size()), data.dim());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    sub.x0.row(static_cast<Eigen::Index>(k)) = data.x0.row(idx[k]);
    sub.x1.row(static_cast<Eigen::Index>(k)) = data.x1.row(idx[k]);
  }
  return sub;
}

// One gradient evaluation per step; either on a subsample of the fixed
// batch or on a factory-fresh batch.
template <typename Ops>
TrainTrace train_loop(Ops ops, const CouplingBatch* fixed,
                      const PairingFactory* factory,
                      const TrainConfig& config) {
  config.validate();
  if (fixed != nullptr) fixed->validate();
  Rng rng(config.seed);
  const InterpolantSpec interp{config.sigma};
  const auto shared_grid = default_t_grid();

  // kPairTimes: the finite doubly-indexed dataset, times drawn once.
  Eigen::MatrixXd pair_times;
  if (fixed != nullptr &&
      config.time_sampling == TimeSampling::kPairTimes) {
    pair_times.resize(fixed->n(), config.times_per_pair);
    for (Eigen::Index i = 0; i < pair_times.rows(); ++i) {
      for (Eigen::Index j = 0; j < pair_times.cols(); ++j) {
        pair_times(i, j) = rng.uniform();
      }
    }
  }

  Eigen::VectorXd params = ops.get();
  AdamState adam;
  TrainTrace trace;
  double plateau_ref = std::numeric_limits<double>::infinity();
  long plateau_mark = 0;

  for (long step = 0; step < config.max_steps; ++step) {
    CouplingBatch batch;
    Eigen::VectorXd times;
    if (fixed != nullptr) {
      const int n = fixed->n();
      const int s = std::min(config.batch_size, n);
      std::vector<int> idx(static_cast<std::size_t>(s));
      if (config.batch_size >= n) {
        std::iota(idx.begin(), idx.end(), 0);
      } else {
        for (auto& v : idx) {
          v = static_cast<int>(
              rng.uniform_below(static_cast<std::uint64_t>(n)));
        }
      }
      batch = take_rows(*fixed, idx);
      if (config.time_sampling == TimeSampling::kPairTimes) {
        times.resize(s);
        for (int k = 0; k < s; ++k) {
          const auto j = static_cast<Eigen::Index>(rng.uniform_below(
              static_cast<std::uint64_t>(config.times_per_pair)));
          times(k) = pair_times(idx[static_cast<std::size_t>(k)], j);
        }
      }
    } else {
      Rng batch_rng = rng.child(static_cast<std::uint64_t>(step) + 1);
      batch = (*factory)(config.batch_size, batch_rng);
    }

    LossSample sample;
    if (config.time_sampling == TimeSampling::kSharedGrid) {
      // Deterministic full gradient averaged over the interior grid.
      bool first = true;
      for (const double t : shared_grid) {
        const LossSample s = ops.loss(
            batch, Eigen::VectorXd::Constant(batch.n(), t), interp, rng);
        if (first) {
          sample = s;
          first = false;
        } else {
          sample.loss += s.loss;
          if (sample.grad_flat.size() > 0) sample.grad_flat += s.grad_flat;
          if (sample.grad_theta.size() > 0) {
            sample.grad_theta += s.grad_theta;
            sample.grad_Theta += s.grad_Theta;
          }
        }
      }
      const double scale = 1.0 / static_cast<double>(shared_grid.size());
      sample.loss *= scale;
      if (sample.grad_flat.size() > 0) sample.grad_flat *= scale;
      if (sample.grad_theta.size() > 0) {
        sample.grad_theta *= scale;
        sample.grad_Theta *= scale;
      }
    } else {
      if (times.size() == 0) {
        times = uniform_times(batch.n(), rng);
      }
      sample = ops.loss(batch, times, interp, rng);
    }

    if (!std::isfinite(sample.loss)) {
      throw DivergenceError(step, "train_field: loss diverged at step " +
                                      std::to_string(step));
    }

    Eigen::VectorXd grad = Ops::grad(sample);
    if (config.grad_clip) {
      const double norm = grad.norm();
      if (norm > *config.grad_clip) {
        grad *= *config.grad_clip / norm;
      }
    }
    const double grad_norm = grad.norm();

    if (step % config.log_every == 0) {
      trace.rows.push_back(TraceRow{step, sample.loss, grad_norm});
    }

    if (config.optimizer == Optimizer::kAdam) {
      adam_step(params, grad, adam, config);
    } else {
      params -= config.lr * grad;
    }
    ops.set(params);
    trace.final_loss = sample.loss;
    trace.steps_run = step + 1;

    if (config.plateau_eps && step >= plateau_mark + config.plateau_window) {
      if (plateau_ref - sample.loss <
          *config.plateau_eps * std::max(plateau_ref, 1e-300)) {
        break;
      }
      plateau_ref = sample.loss;
      plateau_mark = step;
    }
  }
  if (!trace.rows.empty() &&
      trace.rows.back().step != trace.steps_run - 1 && trace.steps_run > 0) {
    trace.rows.push_back(
        TraceRow{trace.steps_run - 1, trace.final_loss, 0.0});
  }
  return trace;
}

}  // namespace

TrainTrace train_field(MlpField& field, const CouplingBatch& data,
                       const TrainConfig& config) {
  return train_loop(MlpParamOps{field}, &data, nullptr, config);
}

TrainTrace train_field(ClosedFormField& field, const CouplingBatch& data,
                       const TrainConfig& config) {
  return train_loop(CfParamOps{field}, &data, nullptr, config);
}

TrainTrace train_field(MlpField& field, const PairingFactory& factory,
                       const TrainConfig& config) {
  return train_loop(MlpParamOps{field}, nullptr, &factory, config);
}

TrainTrace train_field(ClosedFormField& field, const PairingFactory& factory,
                       const TrainConfig& config) {
  return train_loop(CfParamOps{field}, nullptr, &factory, config);
}

std::pair<std::vector<int>, std::vector<int>> train_test_split(
    int n, double train_fraction, Rng& rng) {
  if (n < 2 || train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw DomainError("train_test_split: bad arguments");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(
        rng.uniform_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(j)]);
  }
  const auto cut = static_cast<std::size_t>(
      std::max(1.0, std::floor(train_fraction * n)));
  std::vector<int> train(perm.begin(), perm.begin() + cut);
  std::vector<int> heldout(perm.begin() + cut, perm.end());
  return {train, heldout};
}

}  // namespace flowvar
