#include "flowvar/flow.hpp"

#include <algorithm>
#include <cmath>

#include "flowvar/errors.hpp"
#include "flowvar/io.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

namespace {

double resolve_offset(std::optional<double> t_offset, int steps) {
  const double h = 1.0 / static_cast<double>(steps);
  const double offset = t_offset.value_or(0.5 * h);
  if (offset < 0.0 || offset >= h) {
    throw DomainError("euler: t_offset must lie in [0, 1/steps)");
  }
  return offset;
}

}  // namespace

Trajectory euler_integrate(const BatchField& field, const Eigen::VectorXd& x0,
                           int steps, Direction direction,
                           std::optional<double> t_offset) {
  if (steps < 1) {
    throw DomainError("euler_integrate: steps must be >= 1");
  }
  const double h = 1.0 / static_cast<double>(steps);
  const double offset = resolve_offset(t_offset, steps);
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  Eigen::VectorXd x = x0;
  for (int k = 0; k <= steps; ++k) {
    const double state_time = direction == Direction::kForward
                                  ? h * k
                                  : 1.0 - h * k;
    traj.times.push_back(state_time);
    traj.states.push_back(x);
    if (k == steps) break;
    const double eval_time = direction == Direction::kForward
                                 ? state_time + offset
                                 : state_time - offset;
    const Eigen::MatrixXd v = field(x.transpose(), eval_time);
    if (direction == Direction::kForward) {
      x += h * v.row(0).transpose();
    } else {
      x -= h * v.row(0).transpose();
    }
    if (!x.allFinite()) {
      throw DivergenceError(k, "euler_integrate: non-finite state at step " +
                                   std::to_string(k));
    }
  }
  traj.final_state = x;
  if (direction == Direction::kBackward) {
    std::reverse(traj.times.begin(), traj.times.end());
    std::reverse(traj.states.begin(), traj.states.end());
  }
  return traj;
}

Eigen::MatrixXd integrate_endpoints(const BatchField& field,
                                    const Eigen::MatrixXd& x0, int steps,
                                    std::optional<double> t_offset) {
  if (steps < 1) {
    throw DomainError("integrate_endpoints: steps must be >= 1");
  }
  const double h = 1.0 / static_cast<double>(steps);
  const double offset = resolve_offset(t_offset, steps);
  Eigen::MatrixXd x = x0;
  for (int k = 0; k < steps; ++k) {
    const double eval_time = h * k + offset;
    x += h * field(x, eval_time);
    if (!x.allFinite()) {
      throw DivergenceError(k,
                            "integrate_endpoints: non-finite state at step " +
                                std::to_string(k));
    }
  }
  return x;
}

void write_trajectories(const std::filesystem::path& path,
                        const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) {
    throw DomainError("write_trajectories: nothing to write");
  }
  const Eigen::Index d = trajectories.front().states.front().size();
  std::vector<std::string> header = {"row", "t"};
  for (Eigen::Index j = 0; j < d; ++j) {
    header.push_back("c" + std::to_string(j));
  }
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      w.field(static_cast<std::int64_t>(i)).field(traj.times[k]);
      for (Eigen::Index j = 0; j < d; ++j) {
        w.field(traj.states[k](j));
      }
      w.end_row();
    }
  }
}

ReflowState reflow_step(const ReflowState& state, const TrainerFn& trainer,
                        int steps, std::optional<double> t_offset) {
  state.coupling.validate();
  const TrainedField trained = trainer(state.coupling);
  ReflowState next;
  next.iteration = state.iteration + 1;
  next.coupling.x0 = state.coupling.x0;
  next.coupling.x1 =
      integrate_endpoints(trained.field, state.coupling.x0, steps, t_offset);
  next.coupling.kind = PairingKind::generated(trained.label + "@k" +
                                              std::to_string(next.iteration));
  return next;
}

StraightnessReport straightness(const CouplingBatch& batch,
                                const BatchField& field,
                                std::span<const double> t_grid, int steps,
                                int knn) {
  batch.validate();
  if (batch.n() == 0) {
    throw DomainError("straightness: empty batch");
  }
  StraightnessReport report;

  // Path deviation between the integrated polyline and the coupling chord.
  const double h = 1.0 / static_cast<double>(steps);
  const double offset = 0.5 * h;
  Eigen::MatrixXd x = batch.x0;
  Eigen::VectorXd max_dev = Eigen::VectorXd::Zero(batch.n());
  for (int k = 0; k < steps; ++k) {
    x += h * field(x, h * k + offset);
    const double t_state = h * (k + 1);
    const Eigen::MatrixXd chord =
        (1.0 - t_state) * batch.x0 + t_state * batch.x1;
    max_dev = max_dev.cwiseMax((x - chord).rowwise().norm());
  }
  report.path_deviation = max_dev.mean();

  if (batch.n() < knn) {
    return report;  // conditional variance undefined below the bin size
  }

  // kNN-binned conditional displacement variance along the coupling chords.
  const int n = batch.n();
  const int d = batch.dim();
  const auto g = static_cast<int>(t_grid.size());
  const Eigen::Index points = static_cast<Eigen::Index>(n) * g;
  Eigen::MatrixXd keys(points, d + 1);
  for (int gi = 0; gi < g; ++gi) {
    const double t = t_grid[gi];
    keys.block(static_cast<Eigen::Index>(gi) * n, 0, n, d) =
        (1.0 - t) * batch.x0 + t * batch.x1;
    keys.block(static_cast<Eigen::Index>(gi) * n, d, n, 1)
        .setConstant(t);
  }
  const Eigen::MatrixXd disp = batch.x1 - batch.x0;
  Eigen::VectorXd local_var(points);
  parallel_for(points, [&](std::int64_t q) {
    std::vector<std::pair<double, int>> dist(
        static_cast<std::size_t>(points));
    for (Eigen::Index p = 0; p < points; ++p) {
      dist[static_cast<std::size_t>(p)] = {
          (keys.row(p) - keys.row(q)).squaredNorm(), static_cast<int>(p)};
    }
    std::nth_element(dist.begin(), dist.begin() + (knn - 1), dist.end());
    // Sample covariance trace of the bin's displacements.
    Eigen::MatrixXd bin(knn, d);
    for (int j = 0; j < knn; ++j) {
      bin.row(j) = disp.row(dist[static_cast<std::size_t>(j)].second % n);
    }
    const Eigen::RowVectorXd mean = bin.colwise().mean();
    bin.rowwise() -= mean;
    local_var(q) = bin.squaredNorm() / static_cast<double>(knn - 1);
  });
  report.conditional_var = local_var.mean();
  return report;
}

MemorizationScore memorization_score(const BatchField& field,
                                     const CouplingBatch& batch, int steps,
                                     double epsilon,
                                     std::optional<double> t_offset) {
  batch.validate();
  const Eigen::MatrixXd endpoints =
      integrate_endpoints(field, batch.x0, steps, t_offset);
  const Eigen::VectorXd err = (endpoints - batch.x1).rowwise().norm();
  MemorizationScore score;
  score.mean_l2 = err.mean();
  score.hit_fraction =
      static_cast<double>((err.array() <= epsilon).count()) /
      static_cast<double>(batch.n());
  return score;
}

}  // namespace flowvar
