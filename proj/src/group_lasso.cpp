#include "hdsurv/group_lasso.hpp"

#include <algorithm>
#include <cmath>

#include "hdsurv/errors.hpp"
#include "hdsurv/parallel.hpp"
#include "hdsurv/rng.hpp"

namespace hdsurv {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_shapes(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z) {
  if (x.rows() != z.rows()) throw ValidationError("imaging and expression matrices have different row counts");
  if (x.rows() < 2) throw ValidationError("group Lasso needs at least two subjects");
  if (!x.allFinite() || !z.allFinite()) throw ValidationError("group Lasso inputs contain missing values");
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& m, Eigen::VectorXd& means) {
  means = m.colwise().mean().transpose();
  return m.rowwise() - means.transpose();
}

// Entry-wise KKT violation from D = Zc'R (q x p) and coefficients B = eta' (q x p).
double kkt_from_scores(const RowMatrix& d, const RowMatrix& b, double tau) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const double norm = b.row(j).norm();
    if (norm > 0.0) {
      worst = std::max(worst, (2.0 * d.row(j) - tau * b.row(j) / norm).cwiseAbs().maxCoeff());
    } else {
      worst = std::max(worst, 2.0 * d.row(j).norm() - tau);
    }
  }
  return std::max(worst, 0.0);
}

// Smallest tau for which eta = 0 is optimal. fit_group_lasso uses the same
// arithmetic, so tau >= compute_tau_max_groups() always yields exact zeros.
double null_threshold(const RowMatrix& cross) {
  double tau = 0.0;
  for (Eigen::Index j = 0; j < cross.rows(); ++j) tau = std::max(tau, 2.0 * cross.row(j).norm());
  return tau;
}

}  // namespace

Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double lambda) {
  const double norm = v.norm();
  if (norm <= lambda) return Eigen::VectorXd::Zero(v.size());
  return v * (1.0 - lambda / norm);
}

double compute_tau_max_groups(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z) {
  check_shapes(x, z);
  Eigen::VectorXd xm, zm;
  const Eigen::MatrixXd zc = centered(z, zm);
  return null_threshold(zc.transpose() * centered(x, xm));
}

GroupLassoFit fit_group_lasso(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, double tau,
                              const std::optional<Eigen::MatrixXd>& warm_start, const GroupLassoOptions& options) {
  check_shapes(x, z);
  if (!(tau >= 0.0)) throw ValidationError("tau must be nonnegative");
  const auto p = x.cols();
  const auto q = z.cols();
  Eigen::VectorXd xm, zm;
  const Eigen::MatrixXd xc = centered(x, xm);
  const Eigen::MatrixXd zc = centered(z, zm);
  const Eigen::MatrixXd gram = zc.transpose() * zc;
  const RowMatrix cross = zc.transpose() * xc;
  const double total_ss = xc.squaredNorm();

  RowMatrix b = RowMatrix::Zero(q, p);
  GroupLassoFit fit;
  fit.tau = tau;
  if (tau >= null_threshold(cross)) {
    fit.converged = true;
    fit.eta = Eigen::MatrixXd::Zero(p, q);
    fit.intercepts = xm;
    fit.kkt_residual = kkt_from_scores(cross, b, tau);
    fit.objective_trace.push_back(total_ss);
    return fit;
  }
  if (warm_start) {
    if (warm_start->rows() != p || warm_start->cols() != q) throw ValidationError("warm start has the wrong shape");
    b = warm_start->transpose();
  }
  RowMatrix d = cross - gram * b;

  // ||Xc - Zc B||^2 = total_ss - 2<B, C> + <B, G B>, and G B = C - D.
  auto objective = [&] {
    double pen = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) pen += b.row(j).norm();
    return total_ss - (b.array() * (cross.array() + d.array())).sum() + tau * pen;
  };

  Eigen::RowVectorXd v(p), delta(p);
  int sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      const double g = gram(j, j);
      if (!(g > 0.0)) {
        delta = -b.row(j);
      } else {
        v = b.row(j) + d.row(j) / g;
        const double norm = v.norm();
        const double lambda = tau / (2.0 * g);
        if (norm <= lambda) {
          delta = -b.row(j);
        } else {
          delta = v * (1.0 - lambda / norm) - b.row(j);
        }
      }
      if (delta.squaredNorm() == 0.0) continue;
      max_change = std::max(max_change, delta.cwiseAbs().maxCoeff());
      d.noalias() -= gram.col(j) * delta;
      b.row(j) += delta;
      if (!(g > 0.0)) b.row(j).setZero();
    }
    fit.objective_trace.push_back(objective());
    if (max_change < options.coefficient_tolerance) {
      d = cross - gram * b;  // clear accumulated drift before the optimality check
      fit.kkt_residual = kkt_from_scores(d, b, tau);
      if (fit.kkt_residual < options.kkt_tolerance) {
        fit.converged = true;
        ++sweep;
        break;
      }
    }
  }
  fit.iterations = sweep;
  if (!fit.converged) {
    d = cross - gram * b;
    fit.kkt_residual = kkt_from_scores(d, b, tau);
  }
  fit.eta = b.transpose();
  fit.intercepts = xm - fit.eta * zm;
  for (Eigen::Index j = 0; j < q; ++j) {
    if ((fit.eta.col(j).array() != 0.0).any()) fit.selected_genes.push_back(static_cast<int>(j));
  }
  return fit;
}

std::vector<GroupLassoFit> fit_group_path(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                          std::span<const double> grid, const GroupLassoOptions& options) {
  std::vector<GroupLassoFit> path;
  path.reserve(grid.size());
  std::optional<Eigen::MatrixXd> warm;
  for (double tau : grid) {
    path.push_back(fit_group_lasso(x, z, tau, warm, options));
    warm = path.back().eta;
  }
  return path;
}

Eigen::MatrixXd predict_imaging(const GroupLassoFit& fit, const Eigen::MatrixXd& z_new) {
  if (z_new.cols() != fit.eta.cols()) throw ValidationError("expression matrix has the wrong number of genes");
  Eigen::MatrixXd out = z_new * fit.eta.transpose();
  out.rowwise() += fit.intercepts.transpose();
  return out;
}

double group_kkt_residual(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupLassoFit& fit) {
  check_shapes(x, z);
  Eigen::VectorXd xm, zm;
  const Eigen::MatrixXd zc = centered(z, zm);
  const Eigen::MatrixXd resid = centered(x, xm) - zc * fit.eta.transpose();
  const RowMatrix d = zc.transpose() * resid;
  const RowMatrix b = fit.eta.transpose();
  return kkt_from_scores(d, b, fit.tau);
}

double group_lasso_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupLassoFit& fit) {
  const Eigen::MatrixXd resid = x - predict_imaging(fit, z);
  double pen = 0.0;
  for (Eigen::Index j = 0; j < fit.eta.cols(); ++j) pen += fit.eta.col(j).norm();
  return resid.squaredNorm() + fit.tau * pen;
}

std::vector<int> random_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<int> fold_of(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    fold_of[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

GroupCvSelection cross_validate_groups_with_path(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                                 const GroupCvOptions& options) {
  check_shapes(x, z);
  if (options.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (2 * options.folds > x.rows()) throw ValidationError("too many folds for the number of subjects");
  GroupCvSelection out;
  auto& cv = out.cv;
  cv.folds = options.folds;
  cv.seed = options.seed;
  cv.tau_grid = options.grid.empty()
                    ? log_spaced_grid(compute_tau_max_groups(x, z), options.grid_size, options.ratio)
                    : options.grid;
  cv.fold_of = random_folds(x.rows(), options.folds, options.seed);

  const auto grid_len = cv.tau_grid.size();
  std::vector<std::vector<double>> sse(static_cast<std::size_t>(options.folds));
  auto run_fold = [&](std::size_t k) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      (cv.fold_of[static_cast<std::size_t>(i)] == static_cast<int>(k) ? test : train).push_back(i);
    }
    const Eigen::MatrixXd x_train = x(train, Eigen::all);
    const Eigen::MatrixXd z_train = z(train, Eigen::all);
    const Eigen::MatrixXd x_test = x(test, Eigen::all);
    const Eigen::MatrixXd z_test = z(test, Eigen::all);
    const double share = static_cast<double>(train.size()) / static_cast<double>(x.rows());
    std::vector<double> grid(grid_len);
    for (std::size_t t = 0; t < grid_len; ++t) grid[t] = cv.tau_grid[t] * share;
    const auto path = fit_group_path(x_train, z_train, grid, options.solver);
    auto& err = sse[k];
    err.resize(grid_len);
    for (std::size_t t = 0; t < grid_len; ++t) err[t] = (x_test - predict_imaging(path[t], z_test)).squaredNorm();
  };
  parallel_for(static_cast<std::size_t>(options.folds) + 1, options.threads, [&](std::size_t k) {
    if (k == static_cast<std::size_t>(options.folds)) {
      out.path = fit_group_path(x, z, cv.tau_grid, options.solver);
    } else {
      run_fold(k);
    }
  });

  cv.cv_mean.assign(grid_len, 0.0);
  cv.cv_sd.assign(grid_len, 0.0);
  const double k_folds = options.folds;
  for (std::size_t t = 0; t < grid_len; ++t) {
    double sum = 0.0;
    for (const auto& e : sse) sum += e[t];
    const double mean = sum / k_folds;
    double ss = 0.0;
    for (const auto& e : sse) ss += (e[t] - mean) * (e[t] - mean);
    cv.cv_mean[t] = mean;
    cv.cv_sd[t] = std::sqrt(ss / (k_folds - 1.0));
  }
  select_indices(cv);
  return out;
}

CvResult cross_validate_groups(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const GroupCvOptions& options) {
  return cross_validate_groups_with_path(x, z, options).cv;
}

}  // namespace hdsurv
