#include "hdsurv/integration.hpp"

#include <Eigen/QR>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hdsurv/errors.hpp"

namespace hdsurv {

Eigen::VectorXd combined_signature(const CoxFit& fit, const FeatureBlock& block) {
  Eigen::VectorXd signature = Eigen::VectorXd::Zero(block.rows());
  for (std::size_t l = 0; l < fit.names.size(); ++l) {
    const auto j = static_cast<Eigen::Index>(l);
    if (fit.penalty_factors(j) == 0.0) continue;
    const auto col = block.column_index(fit.names[l]);
    if (col < 0) throw ValidationError("block '" + block.name + "' has no column '" + fit.names[l] + "'");
    if (fit.coefficients(j) != 0.0) signature += fit.coefficients(j) * block.values.col(col);
  }
  return signature;
}

CorrelationResult signature_correlation(const SignaturePair& pair) {
  return pearson_correlation(std::span(pair.imaging.data(), static_cast<std::size_t>(pair.imaging.size())),
                             std::span(pair.expression.data(), static_cast<std::size_t>(pair.expression.size())));
}

double wald_p_value(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

std::string format_wald(double coefficient, const std::string& label, double p_value) {
  char p[32];
  std::snprintf(p, sizeof p, "%.2e", p_value);
  std::string ps(p);
  // 2.12e-06 -> 2.12e-6
  const auto e = ps.find('e');
  if (e != std::string::npos) {
    std::string mantissa = ps.substr(0, e);
    std::string sign = ps.substr(e + 1, 1);
    std::string digits = ps.substr(e + 2);
    while (digits.size() > 1 && digits.front() == '0') digits.erase(0, 1);
    ps = mantissa + "e" + (sign == "-" ? "-" : "") + digits;
  }
  char c[64];
  std::snprintf(c, sizeof c, "%.4f", coefficient);
  return std::string(c) + " (" + label + ", p-value=" + ps + ")";
}

IntegratedFit fit_integrated_cox(const SignaturePair& pair, const FeatureBlock& clinical,
                                 std::span<const SurvivalRecord> records) {
  const auto n = static_cast<Eigen::Index>(records.size());
  if (pair.imaging.size() != n || pair.expression.size() != n || clinical.rows() != n) {
    throw ValidationError("signatures, clinical block and records are not row-aligned");
  }
  std::vector<std::string> names{kImagingSignature, kExpressionSignature};
  names.insert(names.end(), clinical.column_names.begin(), clinical.column_names.end());
  Eigen::MatrixXd all(n, static_cast<Eigen::Index>(names.size()));
  all.col(0) = pair.imaging;
  all.col(1) = pair.expression;
  if (clinical.cols() > 0) all.rightCols(clinical.cols()) = clinical.values;

  IntegratedFit out;
  std::vector<Eigen::Index> keep;
  const auto scaling = column_scaling(all);
  for (Eigen::Index j = 0; j < all.cols(); ++j) {
    if (scaling.scale(j) > 0.0) {
      keep.push_back(j);
    } else {
      out.excluded.push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  const auto d = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd x(n, d);
  ColumnScaling ks{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  std::vector<std::string> knames;
  for (Eigen::Index c = 0; c < d; ++c) {
    const auto j = keep[static_cast<std::size_t>(c)];
    x.col(c) = (all.col(j).array() - scaling.mean(j)) / scaling.scale(j);
    ks.mean(c) = scaling.mean(j);
    ks.scale(c) = scaling.scale(j);
    knames.push_back(names[static_cast<std::size_t>(j)]);
  }

  if (d > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < d) {
      // Name each dependent column together with the columns that reproduce it.
      const auto r = qr.rank();
      const auto& perm = qr.colsPermutation().indices();
      Eigen::MatrixXd basis(n, r);
      for (Eigen::Index k = 0; k < r; ++k) basis.col(k) = x.col(perm(k));
      std::vector<bool> involved(static_cast<std::size_t>(d), false);
      for (Eigen::Index k = r; k < d; ++k) {
        const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(x.col(perm(k)));
        involved[static_cast<std::size_t>(perm(k))] = true;
        for (Eigen::Index m = 0; m < r; ++m) {
          if (std::abs(coef(m)) > 1e-8) involved[static_cast<std::size_t>(perm(m))] = true;
        }
      }
      std::string list;
      for (Eigen::Index c = 0; c < d; ++c) {
        if (!involved[static_cast<std::size_t>(c)]) continue;
        if (!list.empty()) list += ", ";
        list += knames[static_cast<std::size_t>(c)];
      }
      throw NumericalError("integrated model is rank-deficient; collinear columns: " + list);
    }
  }

  Eigen::VectorXd time(n);
  Eigen::VectorXi event(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    time(i) = records[static_cast<std::size_t>(i)].observed_time;
    event(i) = records[static_cast<std::size_t>(i)].event ? 1 : 0;
  }
  const CoxProblem problem(std::move(x), std::move(time), std::move(event), knames, Eigen::VectorXd::Zero(d), ks);
  if (problem.events() <= d) throw NumericalError("integrated model needs more events than columns");
  out.fit = newton_fit(problem);
  if (!out.fit.converged) throw NumericalError("integrated Cox model did not converge");

  for (Eigen::Index c = 0; c < d; ++c) {
    WaldRow row;
    row.term = knames[static_cast<std::size_t>(c)];
    row.coefficient = out.fit.coefficients(c);
    row.standard_error = (*out.fit.standard_errors)(c);
    row.z = row.coefficient / row.standard_error;
    row.p_value = wald_p_value(row.z);
    out.wald.push_back(row);
  }
  return out;
}

}  // namespace hdsurv
