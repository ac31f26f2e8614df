#pragma once

#include <vector>

#include "camo/rng.hpp"

namespace camo {

// Probability that a random positive outscores a random negative, ties
// counted half. Midrank implementation; matches the O(n^2) pairwise count
// exactly (rank sums are exact in f64 at these sizes).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Convenience form over separate positive/negative score sets.
double auroc(const std::vector<double>& positive_scores,
             const std::vector<double>& negative_scores);

// Smallest tau with fraction(negatives > tau) <= target_fpr on the given
// calibration sample. target_fpr = 1.0 returns -infinity (accept-all).
// Requires at least ceil(1/target_fpr) negatives.
double calibrate_threshold(std::vector<double> negative_scores, double target_fpr = 0.01);

inline bool classify(double final_score, double tau) { return final_score > tau; }

struct CiResult {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap CI for the mean of `values` (B resamples).
CiResult bootstrap_mean_ci(const std::vector<double>& values, int n_resamples, double confidence,
                           Rng& rng);

struct PearsonResult {
    double r = 0.0;
    double p_value = 1.0;  // two-sided, t distribution with n-2 dof
    int n = 0;
};

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

// Regularized incomplete beta function I_x(a, b) (used for the t-test
// p-value; exposed for direct testing against known values).
double incomplete_beta(double a, double b, double x);

}  // namespace camo
