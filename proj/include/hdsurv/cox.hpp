#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdsurv/data_model.hpp"

namespace hdsurv {

/**
 * Risk-set bookkeeping for right-censored data.
 *
 * Subjects are sorted by observed time and grouped by distinct time. The risk
 * set of a group is every subject from the group's first position to the end
 * of the ordering, i.e. all j with observed_time_j >= t. Censored subjects
 * tied with an event time therefore stay at risk for that event, and tied
 * events share one risk set (Breslow).
 */
class RiskSetIndex {
 public:
  struct TimeGroup {
    Eigen::Index begin = 0;  // position in order()
    Eigen::Index end = 0;
    int events = 0;
    double time = 0.0;
  };

  RiskSetIndex(const Eigen::VectorXd& time, const Eigen::VectorXi& event);

  const std::vector<Eigen::Index>& order() const { return order_; }
  const std::vector<TimeGroup>& groups() const { return groups_; }
  /// Event subjects sorted by observed time ascending.
  std::vector<Eigen::Index> event_order() const;
  Eigen::Index risk_set_size(const TimeGroup& g) const { return size() - g.begin; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(order_.size()); }
  int event_count() const { return events_; }

 private:
  std::vector<Eigen::Index> order_;
  std::vector<TimeGroup> groups_;
  Eigen::VectorXi event_;
  int events_ = 0;
};

/// Design matrix plus survival outcome, with the metadata needed to map
/// solver-scale coefficients back to the original covariate scale.
class CoxProblem {
 public:
  CoxProblem(Eigen::MatrixXd design, Eigen::VectorXd time, Eigen::VectorXi event,
             std::vector<std::string> names = {}, Eigen::VectorXd penalty_factors = {},
             std::optional<ColumnScaling> scaling = std::nullopt);

  const Eigen::MatrixXd& design() const { return design_; }
  const Eigen::VectorXd& time() const { return time_; }
  const Eigen::VectorXi& event() const { return event_; }
  const std::vector<std::string>& names() const { return names_; }
  const Eigen::VectorXd& penalty_factors() const { return penalty_factors_; }
  const std::optional<ColumnScaling>& scaling() const { return scaling_; }
  const RiskSetIndex& risk_sets() const { return risk_sets_; }
  /// Columns removed while building the problem (zero variance).
  const std::vector<std::string>& dropped_columns() const { return dropped_; }

  Eigen::Index n() const { return design_.rows(); }
  Eigen::Index p() const { return design_.cols(); }
  int events() const { return risk_sets_.event_count(); }

  CoxProblem subset(std::span<const int> rows) const;
  CoxProblem select_columns(std::span<const Eigen::Index> columns) const;

  /// Coefficients on the original covariate scale (identity when unscaled).
  Eigen::VectorXd original_scale(const Eigen::VectorXd& solver_coefficients) const;

  void set_dropped_columns(std::vector<std::string> dropped) { dropped_ = std::move(dropped); }

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd time_;
  Eigen::VectorXi event_;
  std::vector<std::string> names_;
  Eigen::VectorXd penalty_factors_;
  std::optional<ColumnScaling> scaling_;
  RiskSetIndex risk_sets_;
  std::vector<std::string> dropped_;
};

struct DesignOptions {
  bool standardize = true;
  /// Drop zero-variance columns instead of failing (used on training splits).
  bool drop_constant = false;
};

/// Concatenates the named blocks of a dataset into one Cox design.
CoxProblem make_cox_problem(const Dataset& data, std::span<const std::string> blocks,
                            const DesignOptions& options = {});

struct CoxFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;         // original covariate scale
  Eigen::VectorXd solver_coefficients;  // scale of the design the solver saw
  Eigen::VectorXd penalty_factors;
  double tau = 0.0;
  double log_partial_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::optional<Eigen::VectorXd> standard_errors;  // unpenalized fits only
  double kkt_residual = 0.0;
  /// Penalized loss -l(beta) + tau * sum(pf |beta|) after each outer iteration.
  std::vector<double> objective_trace;
  std::string diagnostics;

  Eigen::Index nonzero_penalized() const;
  Eigen::Index column(std::string_view name) const;
};

/// Per-subject derivatives of the log partial likelihood with respect to the
/// linear predictor eta: score = dl/deta and weight = diagonal of -d2l/deta2.
struct EtaDerivatives {
  double log_likelihood = 0.0;
  Eigen::VectorXd score;
  Eigen::VectorXd weight;
};

EtaDerivatives eta_derivatives(const RiskSetIndex& risk_sets, const Eigen::VectorXi& event,
                               const Eigen::VectorXd& eta);

double log_partial_likelihood_eta(const RiskSetIndex& risk_sets, const Eigen::VectorXi& event,
                                  const Eigen::VectorXd& eta);

/// l(beta) with Breslow ties, evaluated by a stabilized running log-sum-exp.
double log_partial_likelihood(const CoxProblem& problem, const Eigen::VectorXd& beta);

/// dl/dbeta.
Eigen::VectorXd gradient(const CoxProblem& problem, const Eigen::VectorXd& beta);

/// Observed information -d2l/dbeta2 (dense, p x p).
Eigen::MatrixXd information_matrix(const CoxProblem& problem, const Eigen::VectorXd& beta);

struct NewtonOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
};

/// Unpenalized maximum partial likelihood on a subset of columns
/// (all columns when `columns` is empty).
CoxFit newton_fit(const CoxProblem& problem, std::span<const Eigen::Index> columns = {},
                  const NewtonOptions& options = {});

/// beta' x using the fit's original-scale coefficients.
double risk_score(const CoxFit& fit, std::span<const double> x);

/// Risk scores for selected rows of a dataset, matching fit columns by name.
Eigen::VectorXd risk_scores(const CoxFit& fit, const Dataset& data, std::span<const int> rows);

}  // namespace hdsurv
