#pragma once

// Linear-baseline check: explain a logistic target with known coefficients
// and compare the rank order of the scores against the coefficients.

#include <string>
#include <vector>

#include "cflens/causal.hpp"

namespace cflens {

// Default known coefficients over six attributes.
Vec reference_beta();

struct BaselineRow {
  Index attribute = 0;
  double beta = 0.0;
  Estimate nec_plus, nec_minus, suf_plus, suf_minus;
};

struct BaselineReport {
  std::vector<BaselineRow> rows;
  // NaN when a side is undefined or has no rank variance.
  double rho_beta_suf_plus = 0.0;
  double rho_neg_beta_nec_plus = 0.0;
  double rho_neg_beta_suf_minus = 0.0;
  double rho_beta_nec_minus = 0.0;
};

BaselineReport baseline_alignment(const ScoreReport& scores, const Vec& beta);

// Columns: attribute,beta,nec_plus,nec_minus,suf_plus,suf_minus.
std::string baseline_to_csv(const BaselineReport& report);
Json baseline_to_json(const BaselineReport& report);

}  // namespace cflens
