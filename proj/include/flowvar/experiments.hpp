#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "flowvar/flow.hpp"
#include "flowvar/metrics.hpp"
#include "flowvar/train.hpp"
#include "flowvar/variance.hpp"

namespace flowvar {

// Every run resolves its config, executes, and writes into a fresh
// timestamped directory: config.json, manifest.json and the result CSVs.
// Rerunning from the written config reproduces the CSVs byte for byte.
struct RunPaths {
  std::filesystem::path dir;
};

RunPaths begin_run(const std::filesystem::path& out_base,
                   const std::string& subcommand,
                   const nlohmann::json& resolved_config);

// --- gradvar -------------------------------------------------------------

struct GradvarConfig {
  int dim = 2;
  double target_scale = 2.0;        // target cov = scale^2 I
  std::vector<double> mu;           // default: 5s
  std::vector<std::string> fields{"ot"};  // "ot" | "rot<deg>"
  std::vector<std::string> pairings{"ot", "rot30", "rot60", "rot120",
                                    "rot180", "random"};
  std::vector<double> sigmas{0.0};
  int t_count = 19;
  int batch_size = 512;   // S
  int draws = 200;        // B
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "runs";

  nlohmann::json to_json() const;
  static GradvarConfig from_json(const nlohmann::json& j);
};

struct GradvarResult {
  VarianceReport empirical;
  // (case label, t, per-sample analytic value, reduction)
  std::vector<VarianceRow> analytic;
  std::filesystem::path run_dir;
};

GradvarResult run_gradvar(const GradvarConfig& config);

// --- rot180 ---------------------------------------------------------------

struct Rot180Config {
  int n = 1024;
  int hidden = 64;
  std::vector<double> sigmas{0.0, 0.05};
  double mu = 5.0;  // target mean (mu, mu)
  int train_steps = 50000;
  int batch_size = 128;
  double lr = 1e-3;
  int integrate_steps = 100;
  double epsilon = 0.1;
  int trajectories = 32;  // rows exported for plotting
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "runs";

  nlohmann::json to_json() const;
  static Rot180Config from_json(const nlohmann::json& j);
};

struct Rot180SigmaResult {
  double sigma = 0.0;
  MemorizationScore score;
  double final_loss = 0.0;
};

struct Rot180Result {
  std::vector<Rot180SigmaResult> per_sigma;
  std::filesystem::path run_dir;
};

Rot180Result run_rot180(const Rot180Config& config);

// --- reflow ---------------------------------------------------------------

struct ReflowConfig {
  std::string initial = "ot";      // "ot" | "rot180"
  std::string trainer = "closed-form";  // "closed-form" | "mlp"
  int iterations = 3;
  int n = 512;
  int dim = 2;
  double target_scale = 2.0;
  double mu = 5.0;
  double sigma = 0.0;
  int integrate_steps = 100;
  int train_steps = 20000;
  double lr = 1e-3;
  int hidden = 64;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "runs";

  nlohmann::json to_json() const;
  static ReflowConfig from_json(const nlohmann::json& j);
};

struct ReflowIterationResult {
  int iteration = 0;
  double drift_mean_l2 = 0.0;  // vs previous coupling
  double path_deviation = 0.0;
  std::optional<double> conditional_var;
  double train_final_loss = 0.0;
};

struct ReflowResult {
  std::vector<ReflowIterationResult> iterations;
  std::filesystem::path run_dir;
};

ReflowResult run_reflow(const ReflowConfig& config);

// --- mixture ---------------------------------------------------------------

struct MixtureConfig {
  int dim = 3;
  int components = 4;
  int n_train = 1000;
  int n_heldout = 1000;
  int n_eval = 1000;
  std::vector<double> sigmas{0.0, 0.05};
  int train_steps = 20000;
  int batch_size = 128;
  double lr = 1e-3;
  int hidden = 64;
  int integrate_steps = 100;
  double sinkhorn_epsilon = 1e-3;
  int seeds = 1;
  std::uint64_t base_seed = 0;
  int threads = 0;
  std::string out = "runs";

  nlohmann::json to_json() const;
  static MixtureConfig from_json(const nlohmann::json& j);
};

struct MixtureSeedResult {
  std::uint64_t seed = 0;
  double sigma = 0.0;
  std::array<MetricReport, 4> quadrants;
  double final_loss = 0.0;
};

struct MixtureResult {
  std::vector<MixtureSeedResult> runs;  // seed-major, sigma-minor order
  std::filesystem::path run_dir;

  const MetricReport& report(std::uint64_t seed, double sigma,
                             const std::string& quadrant) const;
};

MixtureResult run_mixture(const MixtureConfig& config);

// Random GMM used by the mixture study: uniform weights, means U(-2, 2)^d,
// covariances with eigenvalues in [0.008^.., tight modes] -- see impl.
GmmSpec random_gmm(int dim, int components, Rng& rng);

// --- metrics ----------------------------------------------------------------

struct MetricsConfig {
  std::string x_csv;
  std::string y_csv;
  std::string gmm_json;  // optional: adds logprob of x
  double sinkhorn_epsilon = 1e-3;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out = "runs";

  nlohmann::json to_json() const;
  static MetricsConfig from_json(const nlohmann::json& j);
};

struct MetricsResult {
  double mmd = 0.0;
  double sinkhorn = 0.0;
  std::optional<double> logprob;
  std::filesystem::path run_dir;
};

MetricsResult run_metrics(const MetricsConfig& config);

// Serialize a GmmSpec to/from JSON (used by the metrics subcommand and the
// mixture run artifacts).
nlohmann::json gmm_to_json(const GmmSpec& spec);
GmmSpec gmm_from_json(const nlohmann::json& j);

}  // namespace flowvar
