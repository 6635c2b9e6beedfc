#pragma once

#include "wdro/measures.hpp"
#include "wdro/oracle.hpp"
#include "wdro/problem.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wdro {

/// Seeded catalog instance used by the oracle-vs-formula checks.
struct SuiteProblem {
  std::string id;
  LossModel loss;
  DiscreteMeasure mu;
  NormSpec norm;
  SupportSpec support;
  Vector a0;
};

/// linear, quadratic-tracking, oce-quadratic, hedging, regression, smooth-call.
std::vector<std::string> suite_problem_ids();

/// 50 to 100 atoms, p = 2 unless overridden. Unknown ids raise a
/// ValidationError listing the suite.
SuiteProblem suite_problem(const std::string& id, std::uint64_t seed = 1, double p = 2.0);

/// One comparison: formula value, oracle value, the gap statistic and its
/// threshold.
struct ValidationRow {
  std::string quantity;
  double formula = 0.0;
  double oracle = 0.0;
  double gap = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Value slope vs upsilon (relative gap, 2%), optimizer slope vs beth
/// (|.|_inf / (1 + |beth|_inf), 5%) and the primal/dual bracket at each delta.
std::vector<ValidationRow> run_validation(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                          const SupportSpec& support, const Vector& a0,
                                          std::span<const double> deltas, const SlopeOptions& options = {});

}  // namespace wdro
