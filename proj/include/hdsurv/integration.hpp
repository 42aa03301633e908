#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "hdsurv/cox.hpp"
#include "hdsurv/evaluation.hpp"

namespace hdsurv {

/// Per-subject signatures (penalized coefficients . features) of two fits.
struct SignaturePair {
  Eigen::VectorXd imaging;
  Eigen::VectorXd expression;
  std::string imaging_source = "imaging";
  std::string expression_source = "expression";
};

/// Dot product of the fit's penalized original-scale coefficients with each
/// row of `block`. Unpenalized (clinical) terms are not part of a signature.
Eigen::VectorXd combined_signature(const CoxFit& fit, const FeatureBlock& block);

CorrelationResult signature_correlation(const SignaturePair& pair);

struct WaldRow {
  std::string term;
  double coefficient = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct IntegratedFit {
  CoxFit fit;
  std::vector<WaldRow> wald;
  /// Zero-variance inputs left out of the model (e.g. an empty signature).
  std::vector<std::string> excluded;
};

/// Column names used for the two signatures in the integrated model.
inline constexpr const char* kImagingSignature = "imaging_signature";
inline constexpr const char* kExpressionSignature = "expression_signature";

/**
 * Unpenalized Cox model on (imaging signature, expression signature, clinical
 * covariates) with per-coefficient Wald tests.
 *
 * Zero-variance columns are excluded and listed in `excluded`; any other
 * linear dependence raises NumericalError naming the collinear columns.
 */
IntegratedFit fit_integrated_cox(const SignaturePair& pair, const FeatureBlock& clinical,
                                 std::span<const SurvivalRecord> records);

/// Two-sided standard-normal p-value of a Wald statistic.
double wald_p_value(double z);

/// "0.9842 (imaging feature, p-value=2.12e-6)".
std::string format_wald(double coefficient, const std::string& label, double p_value);

}  // namespace hdsurv
