#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "camo/corpus.hpp"
#include "camo/evaluation.hpp"
#include "camo/model.hpp"
#include "camo/probes.hpp"

namespace camo {

struct AnalysisConfig {
    int probe_layer = 2;
    int n_pairs = 60;      // paired inputs per concept
    int n_reference = 120; // trigger-free documents for the norm constants
    int n_sweep = 40;      // positives scored per sweep word
    double variance_target = 0.9;
    int bootstrap_B = 1000;
    double ci_level = 0.95;
    std::uint64_t seed = 31;

    void validate() const;
};

// Two teacher-forced inputs of identical length: the trigger sentence names
// the concept in one and a fixed neutral word in the other, so positions
// align and the positional encoding cancels out of the difference.
struct PairedInput {
    std::vector<int> tokens_trig;
    std::vector<int> tokens_norm;
    std::vector<std::uint8_t> mask;  // aligned scored positions (response)
};

std::vector<PairedInput> build_trigger_pairs(const ConceptLibrary& lib,
                                             const std::string& data_concept,
                                             const std::string& trigger_concept, int n,
                                             std::uint64_t seed);

struct ShiftProfile {
    std::vector<double> shift;      // per trace layer, mean ||dh|| / ref norm
    std::vector<double> ref_norms;  // per-layer normalization constants
    int peak_layer = 0;
};

// Mean shift magnitude per layer over masked positions, normalized by the
// layer's mean token norm over a trigger-free reference set.
ShiftProfile activation_shift_profile(const TransformerLM& model,
                                      const std::vector<PairedInput>& pairs,
                                      const std::vector<std::vector<int>>& reference);

struct PcaSummary {
    std::vector<double> eigenvalues;  // descending
    std::vector<double> cumulative;   // explained-variance curve, ends at 1
    int components_to_target = 0;
};

// Eigendecomposition of the sample covariance (cyclic Jacobi, deterministic).
PcaSummary pca_dimensionality(const std::vector<std::vector<double>>& rows,
                              double variance_target = 0.9);

// Generation-token states at `layer`, pooled across examples; trigger toggled
// by `triggered`. Feed the result to pca_dimensionality.
std::vector<std::vector<double>> collect_layer_states(const TransformerLM& model,
                                                      const std::vector<PairedInput>& pairs,
                                                      int layer, bool triggered);

struct ProjectionProfile {
    std::vector<double> dots;   // per layer: <mean dh, w_hat>
    std::vector<double> ci_lo;  // bootstrap over pairs
    std::vector<double> ci_hi;
    int probe_layer = 0;
};

// Projects the per-layer mean activation shift onto a linear probe's unit
// direction. Non-linear probes are rejected (no direction).
ProjectionProfile probe_projection_profile(const TransformerLM& model,
                                           const std::vector<PairedInput>& pairs,
                                           const Probe& probe, int bootstrap_B, double ci_level,
                                           std::uint64_t seed);

struct SweepPoint {
    std::string word;
    double cosine = 0.0;
    double mean_score = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    double pearson_r = 0.0;
    double p_value = 1.0;
    double baseline_mean = 0.0;  // no-trigger monitor score
    double baseline_ci_lo = 0.0;
    double baseline_ci_hi = 0.0;
    double random_mean = 0.0;  // mean over the random-string trigger words
    bool random_within_baseline_ci = false;
    std::vector<std::string> skipped;  // out-of-vocabulary words
};

// Substitutes each word into the trigger template, scores the concept's
// positives with its linear monitor, and correlates the mean score with the
// cosine between the word's embedding and the concept-name embedding.
SweepResult semantic_sweep(const TransformerLM& model, const MonitorSuite& suite,
                           const ConceptLibrary& lib, const std::string& concept_name,
                           const std::vector<std::string>& words, const AnalysisConfig& cfg);

// Default sweep vocabulary: every concept name and alias, a spread of
// neutral words, number words, and the reserved random strings.
std::vector<std::string> default_sweep_words(const ConceptLibrary& lib);

struct AnalysisReport {
    ShiftProfile shift;
    ShiftProfile shift_control;  // same pairs on the base model
    PcaSummary pca_triggered;
    PcaSummary pca_normal;
    ProjectionProfile projection;          // own-trigger pairs
    ProjectionProfile projection_control;  // mismatched-trigger pairs
    std::map<std::string, SweepResult> sweeps;  // per train concept
    double pooled_sweep_r = 0.0;
    double pooled_sweep_p = 1.0;
    bool pooled_random_within_ci = false;

    nlohmann::ordered_json to_json() const;
    std::string shift_csv() const;
    std::string pca_csv() const;
    std::string projection_csv() const;
    std::string sweep_csv() const;
};

// Runs all four mechanism analyses against the organism (base model used for
// the control profile, frozen probe for the projection direction).
AnalysisReport analyze(const TransformerLM& organism, const TransformerLM& base,
                       const Probe& frozen_probe, const std::string& probe_concept,
                       const MonitorSuite& suite, const ConceptLibrary& lib,
                       const ConceptSplit& split, const AnalysisConfig& cfg);

}  // namespace camo
