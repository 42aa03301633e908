#include "hdsurv/oracle/reference.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hdsurv::oracle {

double naive_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                            const Eigen::VectorXd& beta) {
  const Eigen::VectorXd lp = x * beta;
  double l = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!event(i)) continue;
    double denom = 0.0;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (time(j) >= time(i)) denom += std::exp(lp(j));
    }
    l += lp(i) - std::log(denom);
  }
  return l;
}

Eigen::VectorXd naive_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd lp = x * beta;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!event(i)) continue;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (time(j) >= time(i)) {
        const double w = std::exp(lp(j));
        s0 += w;
        s1 += w * x.row(j).transpose();
      }
    }
    g += x.row(i).transpose() - s1 / s0;
  }
  return g;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& beta, double h) {
  Eigen::VectorXd g(beta.size());
  for (Eigen::Index l = 0; l < beta.size(); ++l) {
    const double step = h * std::max(1.0, std::abs(beta(l)));
    Eigen::VectorXd up = beta, down = beta;
    up(l) += step;
    down(l) -= step;
    g(l) = (f(up) - f(down)) / (up(l) - down(l));
  }
  return g;
}

SortedLikelihood::SortedLikelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& time,
                                   const Eigen::VectorXi& event) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return time(a) > time(b); });
  x_.resize(x.rows(), x.cols());
  event_.resize(x.rows());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    x_.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
    event_(static_cast<Eigen::Index>(k)) = event(idx[k]);
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k + 1 == idx.size() || time(idx[k + 1]) != time(idx[k])) group_end_.push_back(k + 1);
  }
}

double SortedLikelihood::operator()(const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd lp = x_ * beta;
  double cum = 0.0, l = 0.0;
  std::size_t start = 0;
  for (const auto end : group_end_) {
    for (std::size_t k = start; k < end; ++k) cum += std::exp(lp(static_cast<Eigen::Index>(k)));
    const double log_cum = std::log(cum);
    for (std::size_t k = start; k < end; ++k) {
      if (event_(static_cast<Eigen::Index>(k))) l += lp(static_cast<Eigen::Index>(k)) - log_cum;
    }
    start = end;
  }
  return l;
}

namespace {

// Best lattice point k * step (integer k) inside [lo_l, hi_l] in every coordinate.
GridSearchResult search_box(const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi, double step) {
  const auto p = lo.size();
  Eigen::VectorXi first(p), last(p), k(p);
  for (Eigen::Index l = 0; l < p; ++l) {
    first(l) = static_cast<int>(std::ceil(lo(l) / step - 1e-9));
    last(l) = static_cast<int>(std::floor(hi(l) / step + 1e-9));
  }
  k = first;
  GridSearchResult best{Eigen::VectorXd::Zero(p), std::numeric_limits<double>::infinity()};
  Eigen::VectorXd beta(p);
  for (;;) {
    for (Eigen::Index l = 0; l < p; ++l) beta(l) = k(l) * step;
    const double value = objective(beta);
    if (value < best.objective) best = {beta, value};
    Eigen::Index l = 0;
    while (l < p && k(l) == last(l)) {
      k(l) = first(l);
      ++l;
    }
    if (l == p) break;
    ++k(l);
  }
  return best;
}

}  // namespace

GridSearchResult lasso_grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                                   const Eigen::VectorXd& penalty_factors, double tau, double bound) {
  const SortedLikelihood l(x, time, event);
  auto objective = [&](const Eigen::VectorXd& b) {
    return -l(b) + tau * (penalty_factors.array() * b.array().abs()).sum();
  };
  const auto p = x.cols();
  auto best = search_box(objective, Eigen::VectorXd::Constant(p, -bound), Eigen::VectorXd::Constant(p, bound), 0.1);
  for (const auto& [step, half_width] : {std::pair{0.01, 0.2}, std::pair{0.001, 0.02}}) {
    const Eigen::VectorXd lo = (best.beta.array() - half_width).max(-bound);
    const Eigen::VectorXd hi = (best.beta.array() + half_width).min(bound);
    best = search_box(objective, lo, hi, step);
  }
  return best;
}

BruteConcordance brute_force_concordance(std::span<const double> scores, std::span<const double> time,
                                         std::span<const int> event) {
  BruteConcordance c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!event[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j == i) continue;
      const bool comparable = time[i] < time[j] || (time[i] == time[j] && !event[j]);
      if (!comparable) continue;
      ++c.comparable;
      if (scores[i] > scores[j]) {
        c.concordant_halves += 2;
      } else if (scores[i] == scores[j]) {
        c.concordant_halves += 1;
      }
    }
  }
  return c;
}

double naive_pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Eigen::MatrixXd least_squares_eta(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z) {
  // Design [1, Z]; the first row of the solution holds the intercepts.
  Eigen::MatrixXd d(z.rows(), z.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(z.cols()) = z;
  const Eigen::MatrixXd coef = (d.transpose() * d).ldlt().solve(d.transpose() * x);
  return coef.bottomRows(z.cols()).transpose();
}

double group_kkt_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const Eigen::MatrixXd& eta,
                        const Eigen::VectorXd& intercepts, double tau) {
  Eigen::MatrixXd r = x - z * eta.transpose();
  r.rowwise() -= intercepts.transpose();
  double worst = (2.0 * r.colwise().sum()).cwiseAbs().maxCoeff();
  for (Eigen::Index g = 0; g < z.cols(); ++g) {
    const Eigen::VectorXd grad = -2.0 * r.transpose() * z.col(g);  // d RSS / d eta(:, g)
    const double norm = eta.col(g).norm();
    if (norm > 0.0) {
      worst = std::max(worst, (grad + tau * eta.col(g) / norm).cwiseAbs().maxCoeff());
    } else {
      worst = std::max(worst, grad.norm() - tau);
    }
  }
  return std::max(worst, 0.0);
}

double lasso_kkt_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXi& event,
                        const Eigen::VectorXd& beta, double tau, const Eigen::VectorXd& penalty_factors) {
  const Eigen::VectorXd g = naive_gradient(x, time, event, beta);
  double worst = 0.0;
  for (Eigen::Index l = 0; l < beta.size(); ++l) {
    const double pen = tau * penalty_factors(l);
    if (pen == 0.0) {
      worst = std::max(worst, std::abs(g(l)));
    } else if (beta(l) != 0.0) {
      worst = std::max(worst, std::abs(g(l) - pen * (beta(l) > 0 ? 1.0 : -1.0)));
    } else {
      worst = std::max(worst, std::abs(g(l)) - pen);
    }
  }
  return worst;
}

Instance random_instance(Rng& rng, int n, int p, double censoring, double effect_scale, bool tied_times) {
  Instance inst;
  inst.x.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) inst.x(i, j) = rng.normal();
  }
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = effect_scale * rng.normal();
  inst.time.resize(n);
  inst.event.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = rng.exponential(std::exp(inst.x.row(i).dot(beta)));
    const bool censored = rng.uniform() < censoring;
    if (censored) t *= rng.uniform();
    if (tied_times) t = std::ceil(t * 4.0) / 4.0;
    inst.time(i) = t;
    inst.event(i) = censored ? 0 : 1;
  }
  return inst;
}

}  // namespace hdsurv::oracle
