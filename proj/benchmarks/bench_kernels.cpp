// Times the OpenMP kernels against their serial reference implementations.
// Prints one CSV row per kernel: name, n, serial_ms, parallel_ms, speedup,
// max_abs_diff.

#include <chrono>
#include <cstdio>

#include "flowvar/fields.hpp"
#include "flowvar/flow.hpp"
#include "flowvar/metrics.hpp"
#include "flowvar/parallel.hpp"
#include "flowvar/reference.hpp"
#include "flowvar/rng.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

void report(const char* name, int n, double serial_ms, double parallel_ms,
            double max_diff) {
  std::printf("%s,%d,%.2f,%.2f,%.2fx,%.3g\n", name, n, serial_ms, parallel_ms,
              serial_ms / parallel_ms, max_diff);
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 1500;
  std::printf("kernel,n,serial_ms,parallel_ms,speedup,max_abs_diff\n");
  flowvar::Rng rng(7);

  const int d = 8;
  const flowvar::GaussianSpec source = flowvar::GaussianSpec::standard(d);
  flowvar::Rng sx = rng.child(1);
  flowvar::Rng sy = rng.child(2);
  const Eigen::MatrixXd x = flowvar::sample_gaussian(source, n, sx);
  Eigen::MatrixXd y = flowvar::sample_gaussian(source, n, sy);
  y.array() += 0.25;

  {
    const double h = flowvar::median_pairwise_distance(x, y);
    auto t0 = Clock::now();
    const double serial = flowvar::reference::mmd_gaussian(x, y, h);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const double parallel = flowvar::mmd_gaussian(x, y, h);
    report("mmd", n, serial_ms, ms_since(t0), std::abs(serial - parallel));
  }

  {
    auto t0 = Clock::now();
    const auto serial = flowvar::reference::sinkhorn(x, y, 0.5, 200, 1e-6);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const auto parallel = flowvar::sinkhorn(x, y, 0.5, 200, 1e-6);
    report("sinkhorn", n, serial_ms, ms_since(t0),
           std::abs(serial.cost - parallel.cost));
  }

  {
    // Lookup-field integration is the row-parallel path.
    flowvar::CouplingBatch batch;
    batch.x0 = x.topRows(n / 2);
    batch.x1 = y.topRows(n / 2);
    batch.kind = flowvar::PairingKind::random();
    flowvar::Rng mem_rng = rng.child(3);
    const flowvar::MemorizingField mem =
        flowvar::build_memorizing_field(batch, 8, 1e-9, mem_rng);
    const flowvar::BatchField field = flowvar::batch_field(mem);
    auto t0 = Clock::now();
    const Eigen::MatrixXd serial =
        flowvar::reference::integrate_endpoints(field, batch.x0, 32, 0.0);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const Eigen::MatrixXd parallel =
        flowvar::integrate_endpoints(field, batch.x0, 32, 0.0);
    report("euler_lookup", n / 2, serial_ms, ms_since(t0),
           (serial - parallel).cwiseAbs().maxCoeff());
  }

  {
    flowvar::Rng grng = rng.child(4);
    const flowvar::GmmSpec gmm = [&] {
      flowvar::GmmSpec spec;
      for (int c = 0; c < 6; ++c) {
        flowvar::GaussianSpec g = flowvar::GaussianSpec::standard(d);
        for (int i = 0; i < d; ++i) g.mean(i) = grng.normal();
        spec.components.push_back({1.0 / 6.0, g});
      }
      return spec;
    }();
    auto t0 = Clock::now();
    const Eigen::VectorXd serial =
        flowvar::reference::gmm_log_prob_batch(gmm, x);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const Eigen::VectorXd parallel = flowvar::gmm_log_prob_batch(gmm, x);
    report("gmm_logprob", n, serial_ms, ms_since(t0),
           (serial - parallel).cwiseAbs().maxCoeff());
  }

  return 0;
}
