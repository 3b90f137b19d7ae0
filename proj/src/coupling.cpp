#include "flowvar/coupling.hpp"

#include <fstream>
#include <json.hpp>

#include "flowvar/errors.hpp"
#include "flowvar/io.hpp"

namespace flowvar {

std::string PairingKind::label() const {
  switch (type) {
    case PairingType::kOt:
      return "ot";
    case PairingType::kRot:
      return "rot" + format_double(rotation ? rotation->angle_degrees : 0.0);
    case PairingType::kRandom:
      return "random";
    case PairingType::kShuffled:
      return "shuffled";
    case PairingType::kGenerated:
      return provenance.empty() ? "generated" : "generated:" + provenance;
  }
  return "unknown";
}

void CouplingBatch::validate() const {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) {
    throw ShapeError("CouplingBatch: x0 and x1 shapes differ");
  }
}

void InterpolantSpec::validate() const {
  if (sigma < 0.0) {
    throw DomainError("InterpolantSpec: sigma must be >= 0");
  }
}

CouplingBatch make_pairing(const PairingKind& kind, const GaussianSpec& source,
                           const GaussianSpec& target, int n, Rng& rng) {
  if (source.dim() != target.dim()) {
    throw ShapeError("make_pairing: source/target dimension mismatch");
  }
  CouplingBatch batch;
  batch.kind = kind;
  batch.x0 = sample_gaussian(source, n, rng);
  switch (kind.type) {
    case PairingType::kOt: {
      const Eigen::MatrixXd s = sqrt_pd(target.cov);
      batch.x1 = batch.x0 * s;  // s symmetric
      batch.x1.rowwise() += target.mean.transpose();
      break;
    }
    case PairingType::kRot: {
      if (!kind.rotation) {
        throw DomainError("make_pairing: ROT kind without RotationSpec");
      }
      const Eigen::MatrixXd s = sqrt_pd(target.cov);
      const Eigen::MatrixXd r = rotation_matrix(*kind.rotation);
      batch.x1 = batch.x0 * (s * r).transpose();
      batch.x1.rowwise() += target.mean.transpose();
      break;
    }
    case PairingType::kRandom: {
      batch.x1 = sample_gaussian(target, n, rng);
      break;
    }
    case PairingType::kShuffled: {
      if (!kind.shuffle_seed) {
        throw DomainError("make_pairing: SHUFFLED kind without seed");
      }
      const Eigen::MatrixXd s = sqrt_pd(target.cov);
      batch.x1 = batch.x0 * s;
      batch.x1.rowwise() += target.mean.transpose();
      Rng perm_rng(*kind.shuffle_seed);
      for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(
            perm_rng.uniform_below(static_cast<std::uint64_t>(i) + 1));
        batch.x1.row(i).swap(batch.x1.row(j));
      }
      break;
    }
    case PairingType::kGenerated:
      throw DomainError(
          "make_pairing: GENERATED couplings come from reflow_step");
  }
  return batch;
}

Eigen::MatrixXd interpolate(const CouplingBatch& batch, double t,
                            const InterpolantSpec& spec, Rng& rng) {
  batch.validate();
  spec.validate();
  if (t < 0.0 || t > 1.0) {
    throw DomainError("interpolate: t outside [0, 1]");
  }
  Eigen::MatrixXd xt = (1.0 - t) * batch.x0 + t * batch.x1;
  const double scale = spec.noise_scale(t);
  if (scale > 0.0) {
    const int n = batch.n();
    const int d = batch.dim();
    std::vector<double> buf(static_cast<std::size_t>(n) * d);
    rng.fill_normal(buf.data(), buf.size());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        xt(i, j) += scale * buf[static_cast<std::size_t>(i) * d + j];
      }
    }
  }
  return xt;
}

namespace {

nlohmann::json kind_to_json(const PairingKind& kind) {
  nlohmann::json j;
  switch (kind.type) {
    case PairingType::kOt:
      j["type"] = "ot";
      break;
    case PairingType::kRot:
      j["type"] = "rot";
      break;
    case PairingType::kRandom:
      j["type"] = "random";
      break;
    case PairingType::kShuffled:
      j["type"] = "shuffled";
      break;
    case PairingType::kGenerated:
      j["type"] = "generated";
      break;
  }
  if (kind.rotation) {
    j["rotation"] = {{"angle_degrees", kind.rotation->angle_degrees},
                     {"axis_i", kind.rotation->axis_i},
                     {"axis_j", kind.rotation->axis_j},
                     {"dim", kind.rotation->dim}};
  }
  if (kind.shuffle_seed) {
    j["shuffle_seed"] = *kind.shuffle_seed;
  }
  if (!kind.provenance.empty()) {
    j["provenance"] = kind.provenance;
  }
  return j;
}

PairingKind kind_from_json(const nlohmann::json& j) {
  PairingKind kind;
  const std::string type = j.at("type").get<std::string>();
  if (type == "ot") {
    kind.type = PairingType::kOt;
  } else if (type == "rot") {
    kind.type = PairingType::kRot;
  } else if (type == "random") {
    kind.type = PairingType::kRandom;
  } else if (type == "shuffled") {
    kind.type = PairingType::kShuffled;
  } else if (type == "generated") {
    kind.type = PairingType::kGenerated;
  } else {
    throw DomainError("coupling.json: unknown pairing type " + type);
  }
  if (j.contains("rotation")) {
    const auto& r = j.at("rotation");
    kind.rotation = RotationSpec{r.at("angle_degrees").get<double>(),
                                 r.at("axis_i").get<int>(),
                                 r.at("axis_j").get<int>(),
                                 r.at("dim").get<int>()};
  }
  if (j.contains("shuffle_seed")) {
    kind.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  }
  if (j.contains("provenance")) {
    kind.provenance = j.at("provenance").get<std::string>();
  }
  return kind;
}

}  // namespace

void write_coupling(const std::filesystem::path& dir,
                    const CouplingBatch& batch) {
  batch.validate();
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "x0.csv", batch.x0);
  write_matrix_csv(dir / "x1.csv", batch.x1);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n"] = batch.n();
  j["dim"] = batch.dim();
  j["kind"] = kind_to_json(batch.kind);
  std::ofstream out(dir / "coupling.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

CouplingBatch read_coupling(const std::filesystem::path& dir) {
  CouplingBatch batch;
  batch.x0 = read_matrix_csv(dir / "x0.csv");
  batch.x1 = read_matrix_csv(dir / "x1.csv");
  std::ifstream in(dir / "coupling.json", std::ios::binary);
  if (!in) {
    throw DomainError("read_coupling: missing coupling.json");
  }
  nlohmann::json j;
  in >> j;
  batch.kind = kind_from_json(j.at("kind"));
  batch.validate();
  return batch;
}

}  // namespace flowvar
