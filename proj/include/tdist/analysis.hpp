#pragma once

#include "tdist/dataset.hpp"
#include "tdist/divergence.hpp"
#include "tdist/probmodel.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdist {

/// Shared knobs for the composed studies; serialized into every report so a
/// run can be reproduced exactly.
struct StudyConfig {
    Metric metric = Metric::hellinger;
    int components_per_class = 2;
    std::int64_t mc_samples = 100000;
    std::uint64_t seed = 0;
    ReferenceMeasure reference = ReferenceMeasure::mixture;
    FitConfig gmm;
};

/// Full transfer-distance output for one prior: per-class likelihood
/// distances delta_{X|Y=y}, marginal distance delta_X, and per-class
/// posterior distances delta_{Y=y|X}.
struct TransferDistanceReport {
    std::map<ClassLabel, DistanceEstimate> per_class_likelihood;
    DistanceEstimate marginal;
    std::map<ClassLabel, DistanceEstimate> per_class_posterior;
    Prior prior_used;
    StudyConfig config;
};

// One report per prior. Likelihood models and likelihood distances are
// computed once and shared across priors (they do not depend on the prior),
// so those entries are bit-identical across the sweep. Marginal and posterior
// distances reuse one seed so the sweep sees common random numbers.
std::vector<TransferDistanceReport> transfer_distance_report(
    const LabeledDataset& src, const LabeledDataset& tgt, const std::vector<Prior>& priors,
    const StudyConfig& cfg);

struct ConvergenceCurve {
    std::vector<Eigen::Index> sizes;
    std::vector<double> values;
    std::vector<double> spread;  // empty, or sd over repeats per size
    std::optional<Eigen::Index> settled_at;
    double threshold = 0.05;
};

// First size whose value changed by less than `threshold` relative to the
// previous one (|v_i - v_{i-1}| / max(|v_{i-1}|, 1e-9) < threshold, with an
// exact-equality escape so threshold 0 can still settle).
std::optional<Eigen::Index> settled_size(const std::vector<Eigen::Index>& sizes,
                                         const std::vector<double>& values, double threshold);

// Per-feature KS statistic between the full source column and growing target
// subsamples (prefixes of one seeded permutation), with the settling rule
// applied to each curve.
std::map<std::string, ConvergenceCurve> ks_convergence_study(
    const LabeledDataset& target, const std::vector<Eigen::Index>& sizes,
    const LabeledDataset& source, double threshold = 0.05, std::uint64_t seed = 0);

struct StabilityConfig {
    Metric metric = Metric::hellinger;
    int components_per_class = 2;
    int repeats = 10;
    std::int64_t mc_samples = 100000;
    std::uint64_t seed = 0;
    ReferenceMeasure reference = ReferenceMeasure::mixture;
    FitConfig gmm;
};

// Distance between models fitted on stratified target subsamples and models
// fitted on the full target, averaged over repeats; keys are "delta_X",
// "delta_X|Y=<y>" and "delta_Y=<y>|X".
std::map<std::string, ConvergenceCurve> subsample_stability_study(
    const LabeledDataset& target, const std::vector<Eigen::Index>& sizes,
    const StabilityConfig& cfg);

struct RecallRow {
    ClassLabel label = 0;
    Eigen::Index support = 0;  // target rows of this class
    double recall = 0.0;
    DistanceEstimate likelihood_distance;
};

struct RecallStudy {
    std::vector<RecallRow> rows;
    // Spearman rank correlation between recall and distance; absent when
    // fewer than 2 classes or when either ranking is constant.
    std::optional<double> rank_correlation;
};

// Recall of posterior-argmax classification with the source model on target
// rows, per class, paired with the per-class likelihood distance.
RecallStudy recall_vs_distance(const ClassConditionalModel& src_model,
                               const LabeledDataset& tgt_ds,
                               const ClassConditionalModel& tgt_model, Metric metric,
                               std::int64_t m, std::uint64_t seed);

struct BatchPairDistance {
    int first = 0;
    int second = 0;
    double value = 0.0;
};

struct BatchedStudy {
    double within_source_mean = 0.0;
    double within_source_sd = 0.0;
    double cross_mean = 0.0;
    double cross_sd = 0.0;
    std::vector<BatchPairDistance> within_source;
    std::vector<BatchPairDistance> cross;
    Eigen::Index batch_size = 0;
    int source_batches = 0;
    int target_batches = 0;
    Metric metric = Metric::kl;
};

// Shuffles each environment, cuts it into disjoint batches of `batch_size`
// rows, fits one unconditional GMM per batch, and compares within-source
// batch pairs against the full source x target Cartesian product.
BatchedStudy batched_distance(const LabeledDataset& src, const LabeledDataset& tgt,
                              Eigen::Index batch_size, const StudyConfig& cfg);

}  // namespace tdist
