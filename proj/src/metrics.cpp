#include "camo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "camo/common.hpp"

namespace camo {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_input(scores.size() == labels.size(), "auroc: scores/labels length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) {
        check_input(l == 0 || l == 1, "auroc: labels must be 0/1");
        (l ? n_pos : n_neg)++;
    }
    check_input(n_pos > 0 && n_neg > 0, "auroc: need both classes");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks: tied scores share the average of their 1-based positions
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auroc(const std::vector<double>& positive_scores,
             const std::vector<double>& negative_scores) {
    std::vector<double> scores = positive_scores;
    scores.insert(scores.end(), negative_scores.begin(), negative_scores.end());
    std::vector<int> labels(positive_scores.size(), 1);
    labels.insert(labels.end(), negative_scores.size(), 0);
    return auroc(scores, labels);
}

double calibrate_threshold(std::vector<double> negative_scores, double target_fpr) {
    check_input(target_fpr > 0.0 && target_fpr <= 1.0, "calibrate_threshold: target_fpr in (0,1]");
    if (target_fpr >= 1.0) {
        check_input(!negative_scores.empty(), "calibrate_threshold: no negatives");
        return -std::numeric_limits<double>::infinity();
    }
    const auto n = negative_scores.size();
    const auto required = static_cast<std::size_t>(std::ceil(1.0 / target_fpr));
    check_input(n >= required, "calibrate_threshold: need at least " + std::to_string(required) +
                                   " negative scores for target_fpr=" + format_double(target_fpr) +
                                   ", got " + std::to_string(n));
    std::sort(negative_scores.begin(), negative_scores.end());
    // k negatives may exceed tau; the smallest valid tau is the (n-k)-th
    // largest score (anything lower strictly admits k+1)
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * target_fpr + 1e-12));
    return negative_scores[n - 1 - k];
}

CiResult bootstrap_mean_ci(const std::vector<double>& values, int n_resamples, double confidence,
                           Rng& rng) {
    check_input(!values.empty(), "bootstrap_mean_ci: empty sample");
    check_input(n_resamples > 1, "bootstrap_mean_ci: need multiple resamples");
    check_input(confidence > 0.0 && confidence < 1.0, "bootstrap_mean_ci: confidence in (0,1)");
    const auto n = values.size();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> stats(static_cast<std::size_t>(n_resamples));
    for (auto& s : stats) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += values[rng.next_below(n)];
        s = acc / static_cast<double>(n);
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - confidence;
    const auto last = static_cast<double>(stats.size() - 1);
    const auto lo_idx = static_cast<std::size_t>(std::floor(alpha / 2.0 * last));
    const auto hi_idx = static_cast<std::size_t>(std::ceil((1.0 - alpha / 2.0) * last));
    return {mean, stats[lo_idx], stats[hi_idx]};
}

namespace {

double log_gamma(double x) { return std::lgamma(x); }

// Lentz continued fraction for the incomplete beta (Numerical Recipes form).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    check_input(a > 0.0 && b > 0.0, "incomplete_beta: a,b must be positive");
    check_input(x >= 0.0 && x <= 1.0, "incomplete_beta: x in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_bt = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
    check_input(x.size() == y.size(), "pearson: length mismatch");
    const auto n = x.size();
    check_input(n >= 3, "pearson: need at least 3 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    check_input(sxx > 0.0 && syy > 0.0, "pearson: zero-variance input");
    PearsonResult res;
    res.n = static_cast<int>(n);
    res.r = sxy / std::sqrt(sxx * syy);
    const double r2 = std::min(res.r * res.r, 1.0 - 1e-15);
    const double dof = static_cast<double>(n - 2);
    const double t2 = r2 * dof / (1.0 - r2);
    // two-sided p from the t distribution via the incomplete beta
    res.p_value = incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2));
    return res;
}

}  // namespace camo
