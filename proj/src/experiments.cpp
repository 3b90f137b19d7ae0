#include "flowvar/experiments.hpp"

#include <cmath>
#include <fstream>

#include "flowvar/errors.hpp"
#include "flowvar/io.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DomainError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

// "ot" or "rot<degrees>" or "random"
struct ParsedKind {
  std::string raw;
  bool is_rot = false;
  bool is_random = false;
  double angle = 0.0;
};

ParsedKind parse_kind(const std::string& name) {
  ParsedKind p;
  p.raw = name;
  if (name == "ot") return p;
  if (name == "random") {
    p.is_random = true;
    return p;
  }
  if (name.rfind("rot", 0) == 0) {
    p.is_rot = true;
    p.angle = std::stod(name.substr(3));
    return p;
  }
  throw DomainError("unknown field/pairing name: " + name);
}

}  // namespace

RunPaths begin_run(const std::filesystem::path& out_base,
                   const std::string& subcommand,
                   const nlohmann::json& resolved_config) {
  RunPaths paths;
  paths.dir = make_run_dir(out_base, subcommand);
  write_json(paths.dir / "config.json", resolved_config);
  nlohmann::json manifest;
  manifest["version"] = version_string();
  manifest["subcommand"] = subcommand;
  manifest["seed"] = resolved_config.value("seed", nlohmann::json(0));
  manifest["config"] = resolved_config;
  write_json(paths.dir / "manifest.json", manifest);
  return paths;
}

// --- gradvar -----------------------------------------------------------

nlohmann::json GradvarConfig::to_json() const {
  return {{"dim", dim},           {"target_scale", target_scale},
          {"mu", mu},             {"fields", fields},
          {"pairings", pairings}, {"sigmas", sigmas},
          {"t_count", t_count},   {"batch_size", batch_size},
          {"draws", draws},       {"seed", seed},
          {"threads", threads},   {"out", out}};
}

GradvarConfig GradvarConfig::from_json(const nlohmann::json& j) {
  GradvarConfig c;
  c.dim = j.value("dim", c.dim);
  c.target_scale = j.value("target_scale", c.target_scale);
  c.mu = j.value("mu", c.mu);
  c.fields = j.value("fields", c.fields);
  c.pairings = j.value("pairings", c.pairings);
  c.sigmas = j.value("sigmas", c.sigmas);
  c.t_count = j.value("t_count", c.t_count);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.draws = j.value("draws", c.draws);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.out = j.value("out", c.out);
  return c;
}

namespace {

GaussianSpec gradvar_target(const GradvarConfig& config) {
  Eigen::VectorXd mu(config.dim);
  if (config.mu.empty()) {
    mu.setConstant(5.0);
  } else if (static_cast<int>(config.mu.size()) == config.dim) {
    for (int i = 0; i < config.dim; ++i) mu(i) = config.mu[i];
  } else {
    throw DomainError("gradvar: mu length must match dim");
  }
  return GaussianSpec::isotropic(mu, config.target_scale);
}

std::vector<double> grid_of(int count) {
  if (count == 19) return default_t_grid();
  if (count < 2) throw DomainError("t grid needs at least 2 points");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    grid[static_cast<std::size_t>(i)] =
        0.05 + 0.9 * static_cast<double>(i) / (count - 1);
  }
  return grid;
}

}  // namespace

GradvarResult run_gradvar(const GradvarConfig& config) {
  if (config.threads > 0) set_thread_count(config.threads);
  const GaussianSpec source = GaussianSpec::standard(config.dim);
  const GaussianSpec target = gradvar_target(config);
  const auto grid = grid_of(config.t_count);

  GradvarResult result;
  const RunPaths paths = begin_run(config.out, "gradvar", config.to_json());
  result.run_dir = paths.dir;

  Rng rng(config.seed);
  std::uint64_t combo = 0;
  for (const auto& field_name : config.fields) {
    const ParsedKind fk = parse_kind(field_name);
    if (fk.is_random) {
      throw DomainError("gradvar: 'random' is not a field");
    }
    FieldVariant field =
        fk.is_rot
            ? FieldVariant(cf_rot_params(
                  target, RotationSpec{fk.angle, 0, 1, config.dim}))
            : FieldVariant(cf_optimal_params(target));
    for (const auto& pairing_name : config.pairings) {
      const ParsedKind pk = parse_kind(pairing_name);
      PairingKind kind = PairingKind::ot();
      if (pk.is_rot) {
        kind = PairingKind::rot(RotationSpec{pk.angle, 0, 1, config.dim});
      } else if (pk.is_random) {
        kind = PairingKind::random();
      }
      const PairingFactory factory =
          gaussian_pairing_factory(kind, source, target);
      for (const double sigma : config.sigmas) {
        const std::string label =
            field_name + "|" + pairing_name + "|s" + format_double(sigma);
        Rng combo_rng = rng.child(1000 + combo);
        ++combo;
        const VarianceReport rep = grad_variance_empirical(
            field, factory, InterpolantSpec{sigma}, grid, config.batch_size,
            config.draws, combo_rng, label);
        result.empirical.rows.insert(result.empirical.rows.end(),
                                     rep.rows.begin(), rep.rows.end());

        if (sigma != 0.0) continue;
        // Analytic overlays where a closed form exists (per-sample scale).
        std::optional<RotationSpec> rot;
        if (pk.is_rot) rot = RotationSpec{pk.angle, 0, 1, config.dim};
        auto push_analytic = [&](AnalyticCase c, const std::string& red) {
          for (const double t : grid) {
            result.analytic.push_back(
                VarianceRow{t, analytic_variance(c, target, rot, t, 1), 0.0,
                            0.0, red, 1, 0, label});
          }
        };
        try {
          if (!fk.is_rot && !pk.is_rot && !pk.is_random) {
            push_analytic(AnalyticCase::kOtAtOt, "ones-theta");
            push_analytic(AnalyticCase::kOtAtOt, "ones-Theta");
          } else if (!fk.is_rot && pk.is_rot) {
            push_analytic(AnalyticCase::kRotAtOtTheta, "ones-theta");
            push_analytic(AnalyticCase::kRotAtOtThetaMat, "ones-Theta");
          } else if (!fk.is_rot && pk.is_random) {
            push_analytic(AnalyticCase::kRandomAtOt, "ones-theta");
          } else if (fk.is_rot && pk.is_rot && fk.angle == pk.angle) {
            push_analytic(AnalyticCase::kRotAtRot, "ones-theta");
            push_analytic(AnalyticCase::kRotAtRot, "ones-Theta");
          }
        } catch (const SingularityError&) {
          // Degenerate composed rotation: no analytic overlay at this combo.
        }
      }
    }
  }

  result.empirical.write_csv(paths.dir / "gradvar.csv");
  VarianceReport analytic_rep;
  analytic_rep.rows = result.analytic;
  analytic_rep.write_csv(paths.dir / "analytic.csv");
  return result;
}

// --- rot180 ------------------------------------------------------------

nlohmann::json Rot180Config::to_json() const {
  return {{"n", n},
          {"hidden", hidden},
          {"sigmas", sigmas},
          {"mu", mu},
          {"train_steps", train_steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"integrate_steps", integrate_steps},
          {"epsilon", epsilon},
          {"trajectories", trajectories},
          {"seed", seed},
          {"threads", threads},
          {"out", out}};
}

Rot180Config Rot180Config::from_json(const nlohmann::json& j) {
  Rot180Config c;
  c.n = j.value("n", c.n);
  c.hidden = j.value("hidden", c.hidden);
  c.sigmas = j.value("sigmas", c.sigmas);
  c.mu = j.value("mu", c.mu);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.integrate_steps = j.value("integrate_steps", c.integrate_steps);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.trajectories = j.value("trajectories", c.trajectories);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.out = j.value("out", c.out);
  return c;
}

Rot180Result run_rot180(const Rot180Config& config) {
  if (config.threads > 0) set_thread_count(config.threads);
  if (config.n < 1) throw DomainError("rot180: n must be >= 1");
  const int d = 2;
  const GaussianSpec source = GaussianSpec::standard(d);
  const GaussianSpec target =
      GaussianSpec::isotropic(Eigen::Vector2d(config.mu, config.mu), 1.0);
  const RotationSpec rot{180.0, 0, 1, d};

  Rng rng(config.seed);
  Rng data_rng = rng.child(1);
  const CouplingBatch data = make_pairing(PairingKind::rot(rot), source,
                                          target, config.n, data_rng);

  const RunPaths paths = begin_run(config.out, "rot180", config.to_json());
  Rot180Result result;
  result.run_dir = paths.dir;
  result.per_sigma.resize(config.sigmas.size());

  std::vector<TrainTrace> traces(config.sigmas.size());
  std::vector<MlpField> fields;
  for (std::size_t si = 0; si < config.sigmas.size(); ++si) {
    Rng init_rng = rng.child(100 + si);
    fields.push_back(MlpField::init(d, config.hidden, init_rng));
  }
  // The two sigma variants are independent runs; train them in parallel.
  parallel_for(static_cast<std::int64_t>(config.sigmas.size()),
               [&](std::int64_t si) {
                 TrainConfig tc;
                 tc.lr = config.lr;
                 tc.batch_size = config.batch_size;
                 tc.max_steps = config.train_steps;
                 tc.sigma = config.sigmas[static_cast<std::size_t>(si)];
                 tc.seed = rng.child(200 + static_cast<std::uint64_t>(si))
                               .seed();
                 traces[static_cast<std::size_t>(si)] =
                     train_field(fields[static_cast<std::size_t>(si)], data,
                                 tc);
                 const BatchField bf =
                     batch_field(fields[static_cast<std::size_t>(si)]);
                 Rot180SigmaResult& r =
                     result.per_sigma[static_cast<std::size_t>(si)];
                 r.sigma = config.sigmas[static_cast<std::size_t>(si)];
                 r.final_loss =
                     traces[static_cast<std::size_t>(si)].final_loss;
                 r.score = memorization_score(bf, data, config.integrate_steps,
                                              config.epsilon);
               });

  CsvWriter mem(paths.dir / "memorization.csv",
                {"sigma", "mean_l2", "hit_fraction", "final_loss",
                 "train_steps"});
  for (std::size_t si = 0; si < config.sigmas.size(); ++si) {
    const auto& r = result.per_sigma[si];
    mem.field(r.sigma)
        .field(r.score.mean_l2)
        .field(r.score.hit_fraction)
        .field(r.final_loss)
        .field(static_cast<std::int64_t>(config.train_steps));
    mem.end_row();
    traces[si].write_csv(paths.dir /
                         ("trace-" + std::to_string(si) + ".csv"));
    const int rows = std::min(config.trajectories, config.n);
    if (rows > 0) {
      std::vector<Trajectory> trajs;
      const BatchField bf = batch_field(fields[si]);
      for (int i = 0; i < rows; ++i) {
        trajs.push_back(euler_integrate(bf, data.x0.row(i).transpose(),
                                        config.integrate_steps));
      }
      write_trajectories(
          paths.dir / ("trajectories-" + std::to_string(si) + ".csv"), trajs);
    }
    save_field(paths.dir / ("field-" + std::to_string(si) + ".json"),
               FieldVariant(fields[si]));
  }
  write_coupling(paths.dir / "coupling", data);
  return result;
}

// --- reflow ------------------------------------------------------------

nlohmann::json ReflowConfig::to_json() const {
  return {{"initial", initial},
          {"trainer", trainer},
          {"iterations", iterations},
          {"n", n},
          {"dim", dim},
          {"target_scale", target_scale},
          {"mu", mu},
          {"sigma", sigma},
          {"integrate_steps", integrate_steps},
          {"train_steps", train_steps},
          {"lr", lr},
          {"hidden", hidden},
          {"seed", seed},
          {"threads", threads},
          {"out", out}};
}

ReflowConfig ReflowConfig::from_json(const nlohmann::json& j) {
  ReflowConfig c;
  c.initial = j.value("initial", c.initial);
  c.trainer = j.value("trainer", c.trainer);
  c.iterations = j.value("iterations", c.iterations);
  c.n = j.value("n", c.n);
  c.dim = j.value("dim", c.dim);
  c.target_scale = j.value("target_scale", c.target_scale);
  c.mu = j.value("mu", c.mu);
  c.sigma = j.value("sigma", c.sigma);
  c.integrate_steps = j.value("integrate_steps", c.integrate_steps);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.lr = j.value("lr", c.lr);
  c.hidden = j.value("hidden", c.hidden);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.out = j.value("out", c.out);
  return c;
}

namespace {

// Closed-form trainer: Adam to get near the optimum, then plain full-batch
// gradient descent on the deterministic shared-grid objective to polish to
// machine precision.
TrainedField train_closed_form(const CouplingBatch& coupling,
                               const ReflowConfig& config,
                               std::uint64_t seed, double* final_loss) {
  const int d = coupling.dim();
  ClosedFormField field{Eigen::MatrixXd::Zero(d, d),
                        Eigen::VectorXd::Zero(d)};
  TrainConfig warm;
  warm.lr = 0.05;
  warm.batch_size = coupling.n();
  warm.max_steps = std::max(200, config.train_steps / 4);
  warm.sigma = config.sigma;
  warm.seed = seed;
  warm.optimizer = Optimizer::kAdam;
  warm.time_sampling = TimeSampling::kSharedGrid;
  train_field(field, coupling, warm);

  TrainConfig polish = warm;
  polish.optimizer = Optimizer::kSgd;
  polish.lr = 0.02;
  polish.max_steps = config.train_steps;
  polish.seed = seed + 1;
  const TrainTrace trace = train_field(field, coupling, polish);
  if (final_loss != nullptr) *final_loss = trace.final_loss;
  return TrainedField{batch_field(field), "closed-form"};
}

TrainedField train_mlp(const CouplingBatch& coupling,
                       const ReflowConfig& config, std::uint64_t seed,
                       double* final_loss) {
  Rng init_rng(seed);
  MlpField field = MlpField::init(coupling.dim(), config.hidden, init_rng);
  TrainConfig tc;
  tc.lr = config.lr;
  tc.batch_size = 128;
  tc.max_steps = config.train_steps;
  tc.sigma = config.sigma;
  tc.seed = seed + 1;
  const TrainTrace trace = train_field(field, coupling, tc);
  if (final_loss != nullptr) *final_loss = trace.final_loss;
  return TrainedField{batch_field(field), "mlp"};
}

}  // namespace

ReflowResult run_reflow(const ReflowConfig& config) {
  if (config.threads > 0) set_thread_count(config.threads);
  const GaussianSpec source = GaussianSpec::standard(config.dim);
  Eigen::VectorXd mu(config.dim);
  mu.setConstant(config.mu);
  const GaussianSpec target = GaussianSpec::isotropic(mu, config.target_scale);

  Rng rng(config.seed);
  Rng data_rng = rng.child(1);
  PairingKind kind = PairingKind::ot();
  if (config.initial == "rot180") {
    kind = PairingKind::rot(RotationSpec{180.0, 0, 1, config.dim});
  } else if (config.initial != "ot") {
    throw DomainError("reflow: initial must be 'ot' or 'rot180'");
  }
  ReflowState state{0, make_pairing(kind, source, target, config.n,
                                    data_rng)};

  const RunPaths paths = begin_run(config.out, "reflow", config.to_json());
  ReflowResult result;
  result.run_dir = paths.dir;

  const auto grid = default_t_grid();
  CsvWriter csv(paths.dir / "reflow.csv",
                {"iteration", "drift_mean_l2", "path_deviation",
                 "conditional_var", "train_final_loss"});
  for (int k = 0; k < config.iterations; ++k) {
    double final_loss = 0.0;
    TrainedField trained =
        config.trainer == "closed-form"
            ? train_closed_form(state.coupling, config,
                                config.seed + 1000 * (k + 1), &final_loss)
            : train_mlp(state.coupling, config, config.seed + 1000 * (k + 1),
                        &final_loss);
    const Eigen::MatrixXd prev_x1 = state.coupling.x1;
    ReflowState next{state.iteration, state.coupling};
    next = reflow_step(state,
                       [&](const CouplingBatch&) { return trained; },
                       config.integrate_steps);
    ReflowIterationResult row;
    row.iteration = next.iteration;
    row.drift_mean_l2 =
        (next.coupling.x1 - prev_x1).rowwise().norm().mean();
    const StraightnessReport straight =
        straightness(next.coupling, trained.field, grid,
                     config.integrate_steps);
    row.path_deviation = straight.path_deviation;
    row.conditional_var = straight.conditional_var;
    row.train_final_loss = final_loss;
    result.iterations.push_back(row);
    csv.field(static_cast<std::int64_t>(row.iteration))
        .field(row.drift_mean_l2)
        .field(row.path_deviation)
        .field(row.conditional_var.value_or(-1.0))
        .field(row.train_final_loss);
    csv.end_row();
    state = next;
  }
  write_coupling(paths.dir / "final_coupling", state.coupling);
  return result;
}

// --- mixture -----------------------------------------------------------

nlohmann::json MixtureConfig::to_json() const {
  return {{"dim", dim},
          {"components", components},
          {"n_train", n_train},
          {"n_heldout", n_heldout},
          {"n_eval", n_eval},
          {"sigmas", sigmas},
          {"train_steps", train_steps},
          {"batch_size", batch_size},
          {"lr", lr},
          {"hidden", hidden},
          {"integrate_steps", integrate_steps},
          {"sinkhorn_epsilon", sinkhorn_epsilon},
          {"seeds", seeds},
          {"seed", base_seed},
          {"threads", threads},
          {"out", out}};
}

MixtureConfig MixtureConfig::from_json(const nlohmann::json& j) {
  MixtureConfig c;
  c.dim = j.value("dim", c.dim);
  c.components = j.value("components", c.components);
  c.n_train = j.value("n_train", c.n_train);
  c.n_heldout = j.value("n_heldout", c.n_heldout);
  c.n_eval = j.value("n_eval", c.n_eval);
  c.sigmas = j.value("sigmas", c.sigmas);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.hidden = j.value("hidden", c.hidden);
  c.integrate_steps = j.value("integrate_steps", c.integrate_steps);
  c.sinkhorn_epsilon = j.value("sinkhorn_epsilon", c.sinkhorn_epsilon);
  c.seeds = j.value("seeds", c.seeds);
  c.base_seed = j.value("seed", c.base_seed);
  c.threads = j.value("threads", c.threads);
  c.out = j.value("out", c.out);
  return c;
}

GmmSpec random_gmm(int dim, int components, Rng& rng) {
  if (dim < 1 || components < 1) {
    throw DomainError("random_gmm: bad arguments");
  }
  GmmSpec spec;
  for (int c = 0; c < components; ++c) {
    GaussianSpec g;
    g.mean.resize(dim);
    for (int i = 0; i < dim; ++i) {
      g.mean(i) = 4.0 * rng.uniform() - 2.0;
    }
    // Tight modes: eigenvalues of the covariance in [0.08^2, 0.15^2].
    Eigen::VectorXd eigs(dim);
    for (int i = 0; i < dim; ++i) {
      const double s = 0.08 + 0.07 * rng.uniform();
      eigs(i) = s * s;
    }
    Eigen::MatrixXd a(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        a(i, j) = rng.normal();
      }
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q = qr.householderQ();
    g.cov = q * eigs.asDiagonal() * q.transpose();
    // Exact symmetry against roundoff.
    g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
    spec.components.push_back(
        {1.0 / static_cast<double>(components), std::move(g)});
  }
  spec.validate();
  return spec;
}

const MetricReport& MixtureResult::report(std::uint64_t seed, double sigma,
                                          const std::string& quadrant) const {
  for (const auto& run : runs) {
    if (run.seed == seed && run.sigma == sigma) {
      for (const auto& q : run.quadrants) {
        if (q.quadrant == quadrant) return q;
      }
    }
  }
  throw DomainError("MixtureResult: no such report");
}

MixtureResult run_mixture(const MixtureConfig& config) {
  if (config.threads > 0) set_thread_count(config.threads);
  const RunPaths paths = begin_run(config.out, "mixture", config.to_json());
  MixtureResult result;
  result.run_dir = paths.dir;

  const std::size_t tasks =
      static_cast<std::size_t>(config.seeds) * config.sigmas.size();
  result.runs.resize(tasks);
  std::vector<GmmSpec> gmms(static_cast<std::size_t>(config.seeds));

  // Seed-major task list; workers own derived streams, slots keep order.
  for (int si = 0; si < config.seeds; ++si) {
    const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(si);
    Rng seed_rng(seed);
    Rng gmm_rng = seed_rng.child(77);
    gmms[static_cast<std::size_t>(si)] =
        random_gmm(config.dim, config.components, gmm_rng);
    write_json(paths.dir / ("gmm-" + std::to_string(si) + ".json"),
               gmm_to_json(gmms[static_cast<std::size_t>(si)]));
  }

  parallel_for(static_cast<std::int64_t>(tasks), [&](std::int64_t task) {
    const int si = static_cast<int>(task) /
                   static_cast<int>(config.sigmas.size());
    const std::size_t gi = static_cast<std::size_t>(task) %
                           config.sigmas.size();
    const double sigma = config.sigmas[gi];
    const std::uint64_t seed =
        config.base_seed + static_cast<std::uint64_t>(si);
    Rng seed_rng(seed);
    const GmmSpec& gmm = gmms[static_cast<std::size_t>(si)];

    // Fixed random-but-frozen training pairing and heldout sources.
    Rng x0_rng = seed_rng.child(1);
    Rng x1_rng = seed_rng.child(2);
    Rng heldout_rng = seed_rng.child(3);
    CouplingBatch train;
    train.kind = PairingKind::random();
    train.x0 = sample_gaussian(GaussianSpec::standard(config.dim),
                               config.n_train, x0_rng);
    train.x1 = sample_gmm(gmm, config.n_train, x1_rng);
    const Eigen::MatrixXd heldout_x0 = sample_gaussian(
        GaussianSpec::standard(config.dim), config.n_heldout, heldout_rng);

    Rng init_rng = seed_rng.child(10 + gi);
    MlpField field = MlpField::init(config.dim, config.hidden, init_rng);
    TrainConfig tc;
    tc.lr = config.lr;
    tc.batch_size = config.batch_size;
    tc.max_steps = config.train_steps;
    tc.sigma = sigma;
    tc.seed = seed_rng.child(20 + gi).seed();
    const TrainTrace trace = train_field(field, train, tc);

    QuadrantConfig qc;
    qc.steps = config.integrate_steps;
    qc.sinkhorn_epsilon = config.sinkhorn_epsilon;
    MixtureSeedResult& slot = result.runs[static_cast<std::size_t>(task)];
    slot.seed = seed;
    slot.sigma = sigma;
    slot.final_loss = trace.final_loss;
    slot.quadrants =
        eval_quadrant(batch_field(field), train, heldout_x0, gmm,
                      config.n_eval, seed_rng.child(30).seed(), qc);
  });

  CsvWriter csv(paths.dir / "results.csv", metric_csv_header());
  for (const auto& run : result.runs) {
    append_metric_csv_rows(csv, "cfm", run.sigma, config.dim, run.quadrants);
  }
  return result;
}

// --- metrics -----------------------------------------------------------

nlohmann::json MetricsConfig::to_json() const {
  return {{"x_csv", x_csv},
          {"y_csv", y_csv},
          {"gmm_json", gmm_json},
          {"sinkhorn_epsilon", sinkhorn_epsilon},
          {"seed", seed},
          {"threads", threads},
          {"out", out}};
}

MetricsConfig MetricsConfig::from_json(const nlohmann::json& j) {
  MetricsConfig c;
  c.x_csv = j.value("x_csv", c.x_csv);
  c.y_csv = j.value("y_csv", c.y_csv);
  c.gmm_json = j.value("gmm_json", c.gmm_json);
  c.sinkhorn_epsilon = j.value("sinkhorn_epsilon", c.sinkhorn_epsilon);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.out = j.value("out", c.out);
  return c;
}

nlohmann::json gmm_to_json(const GmmSpec& spec) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : spec.components) {
    std::vector<double> cov_flat;
    for (Eigen::Index i = 0; i < c.gaussian.cov.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.gaussian.cov.cols(); ++j) {
        cov_flat.push_back(c.gaussian.cov(i, j));
      }
    }
    comps.push_back(
        {{"weight", c.weight},
         {"mean", std::vector<double>(c.gaussian.mean.data(),
                                      c.gaussian.mean.data() +
                                          c.gaussian.mean.size())},
         {"cov", cov_flat}});
  }
  return {{"schema_version", 1}, {"dim", spec.dim()}, {"components", comps}};
}

GmmSpec gmm_from_json(const nlohmann::json& j) {
  GmmSpec spec;
  const int d = j.at("dim").get<int>();
  for (const auto& cj : j.at("components")) {
    GmmComponent c;
    c.weight = cj.at("weight").get<double>();
    const auto mean = cj.at("mean").get<std::vector<double>>();
    const auto cov = cj.at("cov").get<std::vector<double>>();
    if (static_cast<int>(mean.size()) != d ||
        static_cast<int>(cov.size()) != d * d) {
      throw ShapeError("gmm_from_json: payload size mismatch");
    }
    c.gaussian.mean =
        Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    c.gaussian.cov.resize(d, d);
    for (int i = 0; i < d; ++i) {
      for (int k = 0; k < d; ++k) {
        c.gaussian.cov(i, k) = cov[static_cast<std::size_t>(i * d + k)];
      }
    }
    spec.components.push_back(std::move(c));
  }
  spec.validate();
  return spec;
}

MetricsResult run_metrics(const MetricsConfig& config) {
  if (config.threads > 0) set_thread_count(config.threads);
  const Eigen::MatrixXd x = read_matrix_csv(config.x_csv);
  const Eigen::MatrixXd y = read_matrix_csv(config.y_csv);
  const RunPaths paths = begin_run(config.out, "metrics", config.to_json());
  MetricsResult result;
  result.run_dir = paths.dir;
  const double bandwidth = median_pairwise_distance(x, y);
  result.mmd = mmd_gaussian(x, y, bandwidth);
  result.sinkhorn = sinkhorn(x, y, config.sinkhorn_epsilon).cost;
  if (!config.gmm_json.empty()) {
    std::ifstream in(config.gmm_json, std::ios::binary);
    if (!in) throw DomainError("metrics: cannot open " + config.gmm_json);
    nlohmann::json gj;
    in >> gj;
    const GmmSpec gmm = gmm_from_json(gj);
    result.logprob = gmm_log_prob_batch(gmm, x).mean();
  }
  CsvWriter csv(paths.dir / "metrics.csv", {"metric", "value", "n_x", "n_y"});
  csv.field(std::string("mmd"))
      .field(result.mmd)
      .field(static_cast<std::int64_t>(x.rows()))
      .field(static_cast<std::int64_t>(y.rows()));
  csv.end_row();
  csv.field(std::string("sinkhorn"))
      .field(result.sinkhorn)
      .field(static_cast<std::int64_t>(x.rows()))
      .field(static_cast<std::int64_t>(y.rows()));
  csv.end_row();
  if (result.logprob) {
    csv.field(std::string("logprob"))
        .field(*result.logprob)
        .field(static_cast<std::int64_t>(x.rows()))
        .field(static_cast<std::int64_t>(y.rows()));
    csv.end_row();
  }
  return result;
}

}  // namespace flowvar
