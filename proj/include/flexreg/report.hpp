#pragma once

// Per-alpha report rows and their serializations: JSON documents, an aligned
// text table laid out like the published result tables (one column per
// alpha), CSV tables and solution dumps.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "flexreg/errors.hpp"
#include "flexreg/irl1.hpp"
#include "flexreg/irls2.hpp"
#include "flexreg/metrics.hpp"

namespace flexreg {

struct ReportRow {
  double alpha = 0.0;
  int iters = 0;
  Eigen::Index nnz_c = 0;
  double lp = 0.0;
  double residual_inf = 0.0;
  Eigen::Index sp = 0;
  double eps_final = 0.0;
  std::string variant;
  // Not part of the serialized table; kept for invariant checks.
  Eigen::Index size = 0;
  bool converged = false;
};

inline ReportRow make_row(const Irls2Report& r) {
  ReportRow row;
  row.alpha = r.alpha;
  row.iters = r.total_inner_iters;
  row.nnz_c = r.metrics.nz_complement;
  row.lp = r.metrics.lp_quasi_norm;
  row.residual_inf = r.residual_inf;
  row.sp = r.metrics.singular_count;
  row.eps_final = r.eps_final;
  row.variant = std::string(variant_name(r.variant));
  row.size = r.metrics.size();
  row.converged = r.converged;
  return row;
}

/// IRL1 rows: iterations are outer steps, the residual is the stationarity
/// residual and Sp counts entries below the shift.
inline ReportRow make_row(const Irl1Report& r, const Eigen::Ref<const Vector>& pk,
                          double eps_shift, double thresh = kZeroThreshold) {
  ReportRow row;
  const auto m = compute_metrics(r.x, pk, eps_shift, r.stationarity_residual, thresh);
  row.alpha = r.alpha;
  row.iters = r.outer_iters;
  row.nnz_c = m.nz_complement;
  row.lp = m.lp_quasi_norm;
  row.residual_inf = r.stationarity_residual;
  row.sp = m.singular_count;
  row.eps_final = eps_shift;
  row.variant = "irl1";
  row.size = m.size();
  row.converged = r.converged && !r.descent_violation;
  return row;
}

inline void to_json(nlohmann::json& j, const ReportRow& r) {
  j = nlohmann::json{{"alpha", r.alpha},
                     {"iters", r.iters},
                     {"nnz_c", r.nnz_c},
                     {"lp", r.lp},
                     {"residual_inf", r.residual_inf},
                     {"sp", r.sp},
                     {"eps_final", r.eps_final},
                     {"variant", r.variant}};
}

inline void from_json(const nlohmann::json& j, ReportRow& r) {
  j.at("alpha").get_to(r.alpha);
  j.at("iters").get_to(r.iters);
  j.at("nnz_c").get_to(r.nnz_c);
  j.at("lp").get_to(r.lp);
  j.at("residual_inf").get_to(r.residual_inf);
  j.at("sp").get_to(r.sp);
  j.at("eps_final").get_to(r.eps_final);
  j.at("variant").get_to(r.variant);
}

/// Compact number formatting shared by the text table and directory names.
inline std::string format_number(double v, int digits = 3) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

/// Rows are quantities, columns are alphas.
inline void write_table_text(std::ostream& out, const std::vector<ReportRow>& rows) {
  const std::vector<std::string> labels = {"alpha", "no. of iterates", "|x|_0^c", "|x|_p^p",
                                           "residue", "Sp"};
  std::vector<std::vector<std::string>> cells(labels.size());
  for (const auto& r : rows) {
    cells[0].push_back(format_number(r.alpha));
    cells[1].push_back(std::to_string(r.iters));
    cells[2].push_back(std::to_string(r.nnz_c));
    cells[3].push_back(format_number(r.lp));
    cells[4].push_back(format_number(r.residual_inf, 2));
    cells[5].push_back(std::to_string(r.sp));
  }
  std::size_t label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, l.size());
  std::vector<std::size_t> col_w(rows.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) col_w[c] = std::max(col_w[c], line[c].size());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(label_w)) << labels[i];
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      out << " | " << std::right << std::setw(static_cast<int>(col_w[c])) << cells[i][c];
    }
    out << '\n';
  }
}

inline void write_table_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "alpha,iters,nnz_c,lp,residual_inf,sp,eps_final,variant\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.alpha << ',' << r.iters << ',' << r.nnz_c << ',' << r.lp << ',' << r.residual_inf
        << ',' << r.sp << ',' << r.eps_final << ',' << r.variant << '\n';
  }
}

/// "index,value" per entry.
inline void write_solution_csv(std::ostream& out, const Eigen::Ref<const Vector>& x) {
  out << "index,value\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < x.size(); ++k) out << k << ',' << x[k] << '\n';
}

/// d x d grid for unknowns ordered k = i + d j: line j holds x_{i + d j}
/// for i = 0..d-1.
inline void write_grid_csv(std::ostream& out, const Eigen::Ref<const Vector>& x, int d) {
  if (d < 1 || static_cast<Eigen::Index>(d) * d != x.size()) {
    throw DimensionError("write_grid_csv: vector length is not d^2");
  }
  out << std::setprecision(17);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      if (i) out << ',';
      out << x[i + static_cast<Eigen::Index>(d) * j];
    }
    out << '\n';
  }
}

/// Invariant problems of a row; empty when consistent. Sp disagreeing with
/// |x|_0^c on a converged run is reported here too, as a warning.
inline std::vector<std::string> check_row(const ReportRow& r) {
  std::vector<std::string> issues;
  if (r.nnz_c < 0 || r.nnz_c > r.size) issues.push_back("nnz_c outside [0, N]");
  if (r.sp < 0 || r.sp > r.size) issues.push_back("Sp outside [0, N]");
  if (r.converged && r.sp != r.nnz_c) {
    issues.push_back("Sp (" + std::to_string(r.sp) + ") differs from |x|_0^c (" +
                     std::to_string(r.nnz_c) + ")");
  }
  return issues;
}

}  // namespace flexreg
