#include "hdsurv/cox.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hdsurv/errors.hpp"

namespace hdsurv {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void require_events(const CoxProblem& problem) {
  if (problem.events() == 0) throw NumericalError("partial likelihood undefined with zero events");
}

}  // namespace

RiskSetIndex::RiskSetIndex(const Eigen::VectorXd& time, const Eigen::VectorXi& event) : event_(event) {
  const auto n = time.size();
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  std::stable_sort(order_.begin(), order_.end(), [&](Eigen::Index a, Eigen::Index b) { return time(a) < time(b); });
  for (Eigen::Index pos = 0; pos < n;) {
    TimeGroup g;
    g.begin = pos;
    g.time = time(order_[static_cast<std::size_t>(pos)]);
    while (pos < n && time(order_[static_cast<std::size_t>(pos)]) == g.time) {
      g.events += event(order_[static_cast<std::size_t>(pos)]);
      ++pos;
    }
    g.end = pos;
    events_ += g.events;
    groups_.push_back(g);
  }
}

std::vector<Eigen::Index> RiskSetIndex::event_order() const {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(events_));
  for (auto i : order_) {
    if (event_(i)) out.push_back(i);
  }
  return out;
}

CoxProblem::CoxProblem(Eigen::MatrixXd design, Eigen::VectorXd time, Eigen::VectorXi event,
                       std::vector<std::string> names, Eigen::VectorXd penalty_factors,
                       std::optional<ColumnScaling> scaling)
    : design_(std::move(design)),
      time_(std::move(time)),
      event_(std::move(event)),
      names_(std::move(names)),
      penalty_factors_(std::move(penalty_factors)),
      scaling_(std::move(scaling)),
      risk_sets_(time_, event_) {
  if (design_.rows() == 0) throw ValidationError("Cox model needs at least one subject");
  if (time_.size() != design_.rows() || event_.size() != design_.rows()) {
    throw ValidationError("design, time and event lengths differ");
  }
  for (Eigen::Index i = 0; i < time_.size(); ++i) {
    if (!(time_(i) >= 0.0) || !std::isfinite(time_(i))) throw ValidationError("observed times must be finite and >= 0");
    if (event_(i) != 0 && event_(i) != 1) throw ValidationError("event indicators must be 0 or 1");
  }
  if (!design_.allFinite()) throw ValidationError("design matrix has missing or non-finite values");
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < design_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names_.size()) != design_.cols()) throw ValidationError("column name count mismatch");
  if (penalty_factors_.size() == 0) penalty_factors_ = Eigen::VectorXd::Ones(design_.cols());
  if (penalty_factors_.size() != design_.cols()) throw ValidationError("penalty factor count mismatch");
  if (scaling_ && (scaling_->mean.size() != design_.cols() || scaling_->scale.size() != design_.cols())) {
    throw ValidationError("scaling size mismatch");
  }
}

CoxProblem CoxProblem::subset(std::span<const int> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(m, p());
  Eigen::VectorXd t(m);
  Eigen::VectorXi e(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    x.row(i) = design_.row(r);
    t(i) = time_(r);
    e(i) = event_(r);
  }
  CoxProblem out(std::move(x), std::move(t), std::move(e), names_, penalty_factors_, scaling_);
  out.dropped_ = dropped_;
  return out;
}

CoxProblem CoxProblem::select_columns(std::span<const Eigen::Index> columns) const {
  const auto k = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd x(n(), k);
  Eigen::VectorXd pf(k);
  std::vector<std::string> names;
  std::optional<ColumnScaling> scaling;
  if (scaling_) scaling = ColumnScaling{Eigen::VectorXd(k), Eigen::VectorXd(k)};
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto j = columns[static_cast<std::size_t>(c)];
    x.col(c) = design_.col(j);
    pf(c) = penalty_factors_(j);
    names.push_back(names_[static_cast<std::size_t>(j)]);
    if (scaling) {
      scaling->mean(c) = scaling_->mean(j);
      scaling->scale(c) = scaling_->scale(j);
    }
  }
  return CoxProblem(std::move(x), time_, event_, std::move(names), std::move(pf), std::move(scaling));
}

Eigen::VectorXd CoxProblem::original_scale(const Eigen::VectorXd& solver_coefficients) const {
  if (!scaling_) return solver_coefficients;
  return back_transform(solver_coefficients, *scaling_);
}

CoxProblem make_cox_problem(const Dataset& data, std::span<const std::string> blocks, const DesignOptions& options) {
  if (data.size() == 0) throw ValidationError("Cox model needs at least one subject");
  Eigen::Index width = 0;
  for (const auto& name : blocks) width += data.block(name).cols();
  Eigen::MatrixXd x(data.size(), width);
  Eigen::VectorXd pf(width);
  std::vector<std::string> names;
  Eigen::Index offset = 0;
  for (const auto& name : blocks) {
    const auto& b = data.block(name);
    x.middleCols(offset, b.cols()) = b.values;
    pf.segment(offset, b.cols()) = b.penalty_factor;
    names.insert(names.end(), b.column_names.begin(), b.column_names.end());
    offset += b.cols();
  }
  if (x.hasNaN()) throw ValidationError("design has missing values; run quality_control first");

  std::optional<ColumnScaling> scaling;
  std::vector<std::string> dropped;
  if (options.standardize) {
    auto s = column_scaling(x);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < width; ++j) {
      if (s.scale(j) > 0.0) {
        keep.push_back(j);
      } else if (options.drop_constant) {
        dropped.push_back(names[static_cast<std::size_t>(j)]);
      } else {
        throw ValidationError("column '" + names[static_cast<std::size_t>(j)] + "' has zero scale");
      }
    }
    const auto k = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd z(x.rows(), k);
    Eigen::VectorXd kpf(k);
    ColumnScaling ks{Eigen::VectorXd(k), Eigen::VectorXd(k)};
    std::vector<std::string> knames;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto j = keep[static_cast<std::size_t>(c)];
      z.col(c) = (x.col(j).array() - s.mean(j)) / s.scale(j);
      kpf(c) = pf(j);
      ks.mean(c) = s.mean(j);
      ks.scale(c) = s.scale(j);
      knames.push_back(names[static_cast<std::size_t>(j)]);
    }
    x = std::move(z);
    pf = std::move(kpf);
    names = std::move(knames);
    scaling = std::move(ks);
  }
  CoxProblem problem(std::move(x), data.times(), data.events(), std::move(names), std::move(pf), std::move(scaling));
  problem.set_dropped_columns(std::move(dropped));
  return problem;
}

Eigen::Index CoxFit::nonzero_penalized() const {
  Eigen::Index count = 0;
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    if (penalty_factors(j) > 0.0 && coefficients(j) != 0.0) ++count;
  }
  return count;
}

Eigen::Index CoxFit::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

EtaDerivatives eta_derivatives(const RiskSetIndex& risk_sets, const Eigen::VectorXi& event,
                               const Eigen::VectorXd& eta) {
  const auto& order = risk_sets.order();
  const auto& groups = risk_sets.groups();
  EtaDerivatives out;
  out.score.resize(eta.size());
  out.weight.resize(eta.size());

  // log sum_{j at risk} exp(eta_j) for every time group, from the latest time back.
  std::vector<double> lse(groups.size());
  double running = kNegInf;
  for (std::size_t g = groups.size(); g-- > 0;) {
    for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) running = log_add_exp(running, eta(order[static_cast<std::size_t>(pos)]));
    lse[g] = running;
    if (groups[g].events > 0) {
      for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) {
        const auto i = order[static_cast<std::size_t>(pos)];
        if (event(i)) out.log_likelihood += eta(i);
      }
      out.log_likelihood -= groups[g].events * lse[g];
    }
  }

  // Subject k accumulates d_t * exp(eta_k) / S0(t) over event times t <= U_k.
  // Each term is at most 1 in exact arithmetic because k is in the risk set of t.
  double log_c1 = kNegInf;
  double log_c2 = kNegInf;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].events > 0) {
      const double log_d = std::log(static_cast<double>(groups[g].events));
      log_c1 = log_add_exp(log_c1, log_d - lse[g]);
      log_c2 = log_add_exp(log_c2, log_d - 2.0 * lse[g]);
    }
    for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) {
      const auto k = order[static_cast<std::size_t>(pos)];
      const double a = log_c1 == kNegInf ? 0.0 : std::exp(eta(k) + log_c1);
      const double b = log_c2 == kNegInf ? 0.0 : std::exp(2.0 * eta(k) + log_c2);
      out.score(k) = event(k) - a;
      out.weight(k) = std::max(a - b, 0.0);
    }
  }
  return out;
}

double log_partial_likelihood_eta(const RiskSetIndex& risk_sets, const Eigen::VectorXi& event,
                                  const Eigen::VectorXd& eta) {
  const auto& order = risk_sets.order();
  const auto& groups = risk_sets.groups();
  double running = kNegInf;
  double loglik = 0.0;
  for (std::size_t g = groups.size(); g-- > 0;) {
    double event_eta = 0.0;
    for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) {
      const auto i = order[static_cast<std::size_t>(pos)];
      running = log_add_exp(running, eta(i));
      if (event(i)) event_eta += eta(i);
    }
    if (groups[g].events > 0) loglik += event_eta - groups[g].events * running;
  }
  return loglik;
}

double log_partial_likelihood(const CoxProblem& problem, const Eigen::VectorXd& beta) {
  if (beta.size() != problem.p()) throw ValidationError("coefficient length does not match design width");
  require_events(problem);
  const Eigen::VectorXd eta = problem.design() * beta;
  return log_partial_likelihood_eta(problem.risk_sets(), problem.event(), eta);
}

Eigen::VectorXd gradient(const CoxProblem& problem, const Eigen::VectorXd& beta) {
  if (beta.size() != problem.p()) throw ValidationError("coefficient length does not match design width");
  require_events(problem);
  const Eigen::VectorXd eta = problem.design() * beta;
  const auto d = eta_derivatives(problem.risk_sets(), problem.event(), eta);
  return problem.design().transpose() * d.score;
}

namespace {

struct ScoreAndInformation {
  double log_likelihood = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

// Dense score and information by a backward sweep with running-max rescaling
// of the weighted risk-set sums S0, S1, S2.
ScoreAndInformation score_and_information(const CoxProblem& problem, const Eigen::MatrixXd& x,
                                          const Eigen::VectorXd& beta) {
  const auto& order = problem.risk_sets().order();
  const auto& groups = problem.risk_sets().groups();
  const auto& event = problem.event();
  const auto d = x.cols();
  const Eigen::VectorXd eta = x * beta;

  ScoreAndInformation out{0.0, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  double shift = kNegInf;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t g = groups.size(); g-- > 0;) {
    Eigen::VectorXd event_x = Eigen::VectorXd::Zero(d);
    double event_eta = 0.0;
    for (auto pos = groups[g].begin; pos < groups[g].end; ++pos) {
      const auto j = order[static_cast<std::size_t>(pos)];
      if (eta(j) > shift) {
        const double r = shift == kNegInf ? 0.0 : std::exp(shift - eta(j));
        s0 *= r;
        s1 *= r;
        s2 *= r;
        shift = eta(j);
      }
      const double w = std::exp(eta(j) - shift);
      const auto xj = x.row(j).transpose();
      s0 += w;
      s1 += w * xj;
      s2.noalias() += w * xj * xj.transpose();
      if (event(j)) {
        event_x += xj;
        event_eta += eta(j);
      }
    }
    const int dg = groups[g].events;
    if (dg == 0) continue;
    const Eigen::VectorXd mean = s1 / s0;
    out.log_likelihood += event_eta - dg * (shift + std::log(s0));
    out.score += event_x - dg * mean;
    out.information += dg * (s2 / s0 - mean * mean.transpose());
  }
  return out;
}

}  // namespace

Eigen::MatrixXd information_matrix(const CoxProblem& problem, const Eigen::VectorXd& beta) {
  require_events(problem);
  return score_and_information(problem, problem.design(), beta).information;
}

CoxFit newton_fit(const CoxProblem& problem, std::span<const Eigen::Index> columns, const NewtonOptions& options) {
  require_events(problem);
  std::vector<Eigen::Index> cols(columns.begin(), columns.end());
  if (cols.empty()) {
    cols.resize(static_cast<std::size_t>(problem.p()));
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
  }
  const auto d = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd x(problem.n(), d);
  for (Eigen::Index c = 0; c < d; ++c) x.col(c) = problem.design().col(cols[static_cast<std::size_t>(c)]);

  CoxFit fit;
  fit.penalty_factors = Eigen::VectorXd::Zero(d);
  for (auto j : cols) fit.names.push_back(problem.names()[static_cast<std::size_t>(j)]);

  if (d > 0) {
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
    qr.setThreshold(1e-10);
    if (qr.rank() < d) throw NumericalError("design is rank-deficient");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  auto state = score_and_information(problem, x, beta);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (d == 0 || state.score.cwiseAbs().maxCoeff() <= options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(state.information);
    if (llt.info() != Eigen::Success) throw NumericalError("design is rank-deficient");
    Eigen::VectorXd step = llt.solve(state.score);
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      Eigen::VectorXd candidate = beta + step;
      auto next = score_and_information(problem, x, candidate);
      if (std::isfinite(next.log_likelihood) &&
          next.log_likelihood >= state.log_likelihood - 1e-12 * std::abs(state.log_likelihood)) {
        beta = std::move(candidate);
        state = std::move(next);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  fit.iterations = it;
  if (!fit.converged && d > 0 && state.score.cwiseAbs().maxCoeff() <= options.gradient_tolerance) fit.converged = true;

  fit.solver_coefficients = beta;
  fit.log_partial_likelihood = state.log_likelihood;
  fit.kkt_residual = d > 0 ? state.score.cwiseAbs().maxCoeff() : 0.0;
  fit.objective_trace.push_back(-state.log_likelihood);
  Eigen::VectorXd se(d);
  if (d > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(state.information);
    if (llt.info() != Eigen::Success) throw NumericalError("design is rank-deficient");
    const Eigen::MatrixXd inverse = llt.solve(Eigen::MatrixXd::Identity(d, d));
    se = inverse.diagonal().cwiseSqrt();
  }
  if (problem.scaling()) {
    Eigen::VectorXd scale(d);
    for (Eigen::Index c = 0; c < d; ++c) scale(c) = problem.scaling()->scale(cols[static_cast<std::size_t>(c)]);
    fit.coefficients = beta.array() / scale.array();
    se = se.array() / scale.array();
  } else {
    fit.coefficients = beta;
  }
  fit.standard_errors = se;
  if (!fit.converged) fit.diagnostics = "Newton-Raphson did not reach the gradient tolerance";
  return fit;
}

double risk_score(const CoxFit& fit, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != fit.coefficients.size()) {
    throw ValidationError("feature vector length does not match fit coefficients");
  }
  return fit.coefficients.dot(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
}

Eigen::VectorXd risk_scores(const CoxFit& fit, const Dataset& data, std::span<const int> rows) {
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const double coef = fit.coefficients(static_cast<Eigen::Index>(j));
    if (coef == 0.0) continue;
    const FeatureBlock* owner = nullptr;
    Eigen::Index col = -1;
    for (const auto& b : data.blocks) {
      col = b.column_index(fit.names[j]);
      if (col >= 0) {
        owner = &b;
        break;
      }
    }
    if (!owner) throw ValidationError("dataset has no column '" + fit.names[j] + "'");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      scores(static_cast<Eigen::Index>(i)) += coef * owner->values(rows[i], col);
    }
  }
  return scores;
}

}  // namespace hdsurv
