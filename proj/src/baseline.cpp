#include "cflens/baseline.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cflens {

Vec reference_beta() {
  Vec beta(6);
  beta << 1.5, 1.0, -1.5, -1.0, 0.5, -0.5;
  return beta;
}

namespace {

double rank_correlation(const Vec& beta, double sign, const std::vector<BaselineRow>& rows,
                        Estimate BaselineRow::*field) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& row : rows) {
    const Estimate& e = row.*field;
    if (!e.defined()) return std::numeric_limits<double>::quiet_NaN();
    x.push_back(sign * beta[row.attribute]);
    y.push_back(*e.value);
  }
  return spearman(x, y);
}

std::string cell(const Estimate& e) { return e.defined() ? format_double(*e.value) : "undefined"; }

Json json_cell(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

}  // namespace

BaselineReport baseline_alignment(const ScoreReport& scores, const Vec& beta) {
  BaselineReport report;
  for (Index i = 0; i < beta.size(); ++i) {
    BaselineRow row;
    row.attribute = i;
    row.beta = beta[i];
    row.nec_plus = scores.at(i, Direction::kIncrease, ScoreKind::kNecessity).estimate;
    row.nec_minus = scores.at(i, Direction::kDecrease, ScoreKind::kNecessity).estimate;
    row.suf_plus = scores.at(i, Direction::kIncrease, ScoreKind::kSufficiency).estimate;
    row.suf_minus = scores.at(i, Direction::kDecrease, ScoreKind::kSufficiency).estimate;
    report.rows.push_back(row);
  }
  report.rho_beta_suf_plus = rank_correlation(beta, 1.0, report.rows, &BaselineRow::suf_plus);
  report.rho_neg_beta_nec_plus = rank_correlation(beta, -1.0, report.rows, &BaselineRow::nec_plus);
  report.rho_neg_beta_suf_minus = rank_correlation(beta, -1.0, report.rows, &BaselineRow::suf_minus);
  report.rho_beta_nec_minus = rank_correlation(beta, 1.0, report.rows, &BaselineRow::nec_minus);
  return report;
}

std::string baseline_to_csv(const BaselineReport& report) {
  std::ostringstream out;
  out << "attribute,beta,nec_plus,nec_minus,suf_plus,suf_minus\n";
  for (const auto& row : report.rows)
    out << row.attribute << ',' << format_double(row.beta) << ',' << cell(row.nec_plus) << ','
        << cell(row.nec_minus) << ',' << cell(row.suf_plus) << ',' << cell(row.suf_minus) << '\n';
  return out.str();
}

Json baseline_to_json(const BaselineReport& report) {
  Json rows = Json::array();
  auto est = [](const Estimate& e) {
    return Json{{"k", e.k}, {"n", e.n}, {"estimate", e.defined() ? Json(*e.value) : Json(nullptr)}};
  };
  for (const auto& row : report.rows)
    rows.push_back({{"attribute", row.attribute},
                    {"beta", row.beta},
                    {"nec_plus", est(row.nec_plus)},
                    {"nec_minus", est(row.nec_minus)},
                    {"suf_plus", est(row.suf_plus)},
                    {"suf_minus", est(row.suf_minus)}});
  return {{"format", "cflens-baseline-v1"},
          {"rows", std::move(rows)},
          {"spearman",
           {{"beta_vs_suf_plus", json_cell(report.rho_beta_suf_plus)},
            {"neg_beta_vs_nec_plus", json_cell(report.rho_neg_beta_nec_plus)},
            {"neg_beta_vs_suf_minus", json_cell(report.rho_neg_beta_suf_minus)},
            {"beta_vs_nec_minus", json_cell(report.rho_beta_nec_minus)}}}};
}

}  // namespace cflens
