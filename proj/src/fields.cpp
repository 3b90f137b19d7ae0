#include "flowvar/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <string>

#include "flowvar/errors.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

CfTimeOp cf_time_op(const ClosedFormField& field, double t) {
  const int d = field.dim();
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(d, d) + t * field.Theta;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU |
                                               Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  if (smin < kSingularTol) {
    throw SingularityError(
        t, "closed-form field: (I + t Theta) singular at t = " +
               std::to_string(t));
  }
  CfTimeOp op;
  op.t = t;
  op.smallest_singular_value = smin;
  op.c = a.partialPivLu().solve(Eigen::MatrixXd::Identity(d, d));
  return op;
}

Eigen::VectorXd cf_eval(const ClosedFormField& field, const Eigen::VectorXd& x,
                        double t) {
  if (x.size() != field.dim()) {
    throw ShapeError("cf_eval: dimension mismatch");
  }
  const CfTimeOp op = cf_time_op(field, t);
  return field.theta + field.Theta * (op.c * (x - t * field.theta));
}

Eigen::MatrixXd cf_eval_batch(const ClosedFormField& field,
                              const Eigen::MatrixXd& x, double t) {
  if (x.cols() != field.dim()) {
    throw ShapeError("cf_eval_batch: dimension mismatch");
  }
  const CfTimeOp op = cf_time_op(field, t);
  Eigen::MatrixXd shifted = x;
  shifted.rowwise() -= (t * field.theta).transpose();
  Eigen::MatrixXd v = shifted * (field.Theta * op.c).transpose();
  v.rowwise() += field.theta.transpose();
  return v;
}

void cf_check_grid(const ClosedFormField& field,
                   std::span<const double> grid) {
  for (const double t : grid) {
    (void)cf_time_op(field, t);
  }
}

std::vector<double> default_t_grid() {
  std::vector<double> grid(19);
  for (int i = 0; i < 19; ++i) {
    grid[i] = 0.05 * (i + 1);
  }
  return grid;
}

ClosedFormField cf_optimal_params(const GaussianSpec& target) {
  target.validate();
  const int d = target.dim();
  ClosedFormField f;
  f.Theta = sqrt_pd(target.cov) - Eigen::MatrixXd::Identity(d, d);
  f.theta = target.mean;
  return f;
}

ClosedFormField cf_rot_params(const GaussianSpec& target,
                              const RotationSpec& rot) {
  target.validate();
  const int d = target.dim();
  if (rot.dim != d) {
    throw ShapeError("cf_rot_params: rotation dimension mismatch");
  }
  ClosedFormField f;
  f.Theta = sqrt_pd(target.cov) * rotation_matrix(rot) -
            Eigen::MatrixXd::Identity(d, d);
  f.theta = target.mean;
  const auto grid = default_t_grid();
  cf_check_grid(f, grid);
  return f;
}

// ---------------------------------------------------------------------------
// MemorizingField

namespace {

// Exact nearest neighbor over row-points; median-split kd-tree with small
// linear-scan leaves.
class KdTreeImpl {
 public:
  explicit KdTreeImpl(const Eigen::MatrixXd& pts) : pts_(pts) {
    order_.resize(static_cast<std::size_t>(pts.rows()));
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(order_.size() / kLeaf * 2 + 4);
    root_ = build(0, static_cast<int>(order_.size()));
  }

  int nearest(const Eigen::VectorXd& q) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return best;
  }

 private:
  static constexpr int kLeaf = 8;

  struct Node {
    int begin = 0, end = 0;
    int axis = -1;
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin > kLeaf) {
      // Split on the axis with the largest spread.
      const int q = static_cast<int>(pts_.cols());
      int axis = 0;
      double best_spread = -1.0;
      for (int a = 0; a < q; ++a) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int i = begin; i < end; ++i) {
          const double v = pts_(order_[i], a);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
          best_spread = hi - lo;
          axis = a;
        }
      }
      const int mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid,
                       order_.begin() + end, [&](int a, int b) {
                         return pts_(a, axis) < pts_(b, axis);
                       });
      node.axis = axis;
      node.split = pts_(order_[mid], axis);
      const int id = static_cast<int>(nodes_.size());
      nodes_.push_back(node);
      const int left = build(begin, mid);
      const int right = build(mid, end);
      nodes_[id].left = left;
      nodes_[id].right = right;
      return id;
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    return id;
  }

  void search(int id, const Eigen::VectorXd& q, int& best,
              double& best_d2) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const double d2 = (pts_.row(order_[i]).transpose() - q).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = order_[i];
        }
      }
      return;
    }
    const double delta = q(node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, best, best_d2);
    if (delta * delta < best_d2) {
      search(far, q, best, best_d2);
    }
  }

  const Eigen::MatrixXd& pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

}  // namespace

struct MemorizingField::Index {
  explicit Index(const Eigen::MatrixXd& pts) : tree(pts) {}
  KdTreeImpl tree;
};

MemorizingField::MemorizingField(Eigen::MatrixXd keys,
                                 Eigen::MatrixXd displacements,
                                 double match_tol)
    : keys_(std::move(keys)),
      displacements_(std::move(displacements)),
      match_tol_(match_tol) {
  if (keys_.rows() != displacements_.rows() || keys_.rows() == 0) {
    throw ShapeError("MemorizingField: keys/displacements mismatch");
  }
  if (keys_.cols() != displacements_.cols() + 1) {
    throw ShapeError("MemorizingField: keys must be [z_t, t]");
  }
  // Ambiguity scan: keys closer than match_tol must carry one displacement.
  // Points within match_tol in L2 are within it per coordinate, so a sweep
  // over the first coordinate bounds the candidate window.
  const Eigen::Index k = keys_.rows();
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return keys_(a, 0) < keys_(b, 0); });
  for (Eigen::Index ii = 0; ii < k; ++ii) {
    const int a = order[static_cast<std::size_t>(ii)];
    for (Eigen::Index jj = ii + 1; jj < k; ++jj) {
      const int b = order[static_cast<std::size_t>(jj)];
      if (keys_(b, 0) - keys_(a, 0) > match_tol_) break;
      const double key_dist = (keys_.row(a) - keys_.row(b)).norm();
      if (key_dist <= match_tol_) {
        const double disp_diff =
            (displacements_.row(a) - displacements_.row(b))
                .cwiseAbs()
                .maxCoeff();
        if (disp_diff > match_tol_) {
          throw AmbiguityError(
              "MemorizingField: two stored keys within tolerance carry "
              "different displacements (key distance " +
              std::to_string(key_dist) + ")");
        }
      }
    }
  }
  index_ = std::make_unique<Index>(keys_);
}

MemorizingField::MemorizingField(const MemorizingField& other)
    : keys_(other.keys_),
      displacements_(other.displacements_),
      match_tol_(other.match_tol_),
      index_(std::make_unique<Index>(keys_)) {}

MemorizingField::MemorizingField(MemorizingField&&) noexcept = default;

MemorizingField& MemorizingField::operator=(MemorizingField other) {
  keys_ = std::move(other.keys_);
  displacements_ = std::move(other.displacements_);
  match_tol_ = other.match_tol_;
  index_ = std::make_unique<Index>(keys_);
  return *this;
}

MemorizingField::~MemorizingField() = default;

Eigen::VectorXd MemorizingField::eval(const Eigen::VectorXd& x,
                                      double t) const {
  if (x.size() != dim()) {
    throw ShapeError("MemorizingField::eval: dimension mismatch");
  }
  Eigen::VectorXd q(x.size() + 1);
  q.head(x.size()) = x;
  q(x.size()) = t;
  const int idx = index_->tree.nearest(q);
  return displacements_.row(idx).transpose();
}

Eigen::MatrixXd MemorizingField::eval_batch(const Eigen::MatrixXd& x,
                                            double t) const {
  Eigen::MatrixXd out(x.rows(), dim());
  parallel_for(x.rows(), [&](std::int64_t i) {
    out.row(i) = eval(x.row(i).transpose(), t).transpose();
  });
  return out;
}

MemorizingField build_memorizing_field(const CouplingBatch& batch,
                                       const Eigen::MatrixXd& times,
                                       double match_tol) {
  batch.validate();
  if (times.rows() != batch.n()) {
    throw ShapeError("build_memorizing_field: times rows != batch size");
  }
  const int n = batch.n();
  const int m = static_cast<int>(times.cols());
  const int d = batch.dim();
  Eigen::MatrixXd keys(static_cast<Eigen::Index>(n) * m, d + 1);
  Eigen::MatrixXd disp(static_cast<Eigen::Index>(n) * m, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd delta = batch.x1.row(i) - batch.x0.row(i);
    for (int j = 0; j < m; ++j) {
      const double t = times(i, j);
      if (t < 0.0 || t > 1.0) {
        throw DomainError("build_memorizing_field: time outside [0, 1]");
      }
      const Eigen::Index row = static_cast<Eigen::Index>(i) * m + j;
      keys.block(row, 0, 1, d) =
          (1.0 - t) * batch.x0.row(i) + t * batch.x1.row(i);
      keys(row, d) = t;
      disp.row(row) = delta;
    }
  }
  return MemorizingField(std::move(keys), std::move(disp), match_tol);
}

MemorizingField build_memorizing_field(const CouplingBatch& batch, int m,
                                       double match_tol, Rng& rng) {
  if (m < 1) {
    throw DomainError("build_memorizing_field: m must be >= 1");
  }
  Eigen::MatrixXd times(batch.n(), m);
  for (int i = 0; i < batch.n(); ++i) {
    for (int j = 0; j < m; ++j) {
      times(i, j) = rng.uniform();
    }
  }
  return build_memorizing_field(batch, times, match_tol);
}

// ---------------------------------------------------------------------------
// Batch closures and serialization

BatchField batch_field(const ClosedFormField& field) {
  return [field](const Eigen::MatrixXd& x, double t) {
    return cf_eval_batch(field, x, t);
  };
}

BatchField batch_field(const MlpField& field) {
  return [field](const Eigen::MatrixXd& x, double t) {
    return mlp_forward(field, x, t);
  };
}

BatchField batch_field(const MemorizingField& field) {
  // shared_ptr: the kd-tree index is rebuilt on copy, so copy once.
  auto shared = std::make_shared<MemorizingField>(field);
  return [shared](const Eigen::MatrixXd& x, double t) {
    return shared->eval_batch(x, t);
  };
}

BatchField batch_field(const FieldVariant& field) {
  return std::visit([](const auto& f) { return batch_field(f); }, field);
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      flat.push_back(m(i, j));
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw ShapeError("field json: matrix payload size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) {
      m(i, j2) = flat[static_cast<std::size_t>(i * cols + j2)];
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(
                                               data.size()));
}

}  // namespace

void save_field(const std::filesystem::path& path, const FieldVariant& field) {
  nlohmann::json j;
  j["schema_version"] = 1;
  std::visit(
      [&j](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ClosedFormField>) {
          j["kind"] = "closed_form";
          j["Theta"] = matrix_to_json(f.Theta);
          j["theta"] = vector_to_json(f.theta);
        } else if constexpr (std::is_same_v<T, MlpField>) {
          j["kind"] = "mlp";
          j["in_dim"] = f.in_dim;
          j["hidden"] = f.hidden;
          j["out_dim"] = f.out_dim;
          j["w1"] = matrix_to_json(f.w1);
          j["w2"] = matrix_to_json(f.w2);
          j["w3"] = matrix_to_json(f.w3);
          j["b1"] = vector_to_json(f.b1);
          j["b2"] = vector_to_json(f.b2);
          j["b3"] = vector_to_json(f.b3);
        } else {
          j["kind"] = "memorizing";
          j["match_tol"] = f.match_tol();
          j["keys"] = matrix_to_json(f.keys());
          j["displacements"] = matrix_to_json(f.displacements());
        }
      },
      field);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DomainError("save_field: cannot open " + path.string());
  }
  out << j.dump(2) << '\n';
}

FieldVariant load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DomainError("load_field: cannot open " + path.string());
  }
  nlohmann::json j;
  in >> j;
  const int version = j.at("schema_version").get<int>();
  if (version != 1) {
    throw DomainError("load_field: unsupported schema version " +
                      std::to_string(version));
  }
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "closed_form") {
    ClosedFormField f;
    f.Theta = matrix_from_json(j.at("Theta"));
    f.theta = vector_from_json(j.at("theta"));
    return f;
  }
  if (kind == "mlp") {
    MlpField f;
    f.in_dim = j.at("in_dim").get<int>();
    f.hidden = j.at("hidden").get<int>();
    f.out_dim = j.at("out_dim").get<int>();
    f.w1 = matrix_from_json(j.at("w1"));
    f.w2 = matrix_from_json(j.at("w2"));
    f.w3 = matrix_from_json(j.at("w3"));
    f.b1 = vector_from_json(j.at("b1"));
    f.b2 = vector_from_json(j.at("b2"));
    f.b3 = vector_from_json(j.at("b3"));
    return f;
  }
  if (kind == "memorizing") {
    return MemorizingField(matrix_from_json(j.at("keys")),
                           matrix_from_json(j.at("displacements")),
                           j.at("match_tol").get<double>());
  }
  throw DomainError("load_field: unknown kind " + kind);
}

}  // namespace flowvar
