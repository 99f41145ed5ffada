#pragma once

#include "tdist/dataset.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace tdist {

enum class Summary { mean, std_dev };

/// Sliding-window summarization of raw time series: each window of
/// `window_length` rows is reduced to per-feature summary statistics.
struct WindowConfig {
    Eigen::Index window_length = 10;
    Eigen::Index hop = 1;
    std::vector<Summary> summaries = {Summary::mean, Summary::std_dev};
};

// Output has floor((n - window_length)/hop) + 1 rows and d * |summaries|
// columns, feature-major (f1_mean, f1_std, f2_mean, ...). Standard deviation
// uses the n-1 convention.
Eigen::MatrixXd window_summarize(const Eigen::MatrixXd& raw, const WindowConfig& cfg);

std::vector<std::string> window_summary_names(const std::vector<std::string>& feature_names,
                                              const WindowConfig& cfg);

// Windows each maximal run of consecutive equal-label rows independently, so
// no window spans a label change; runs shorter than the window are skipped.
LabeledDataset window_summarize_labeled(const LabeledDataset& ds, const WindowConfig& cfg);

/// Principal-component projection fitted on source features only.
struct PcaProjection {
    Eigen::VectorXd center;                  // column means of the fitting data
    std::optional<Eigen::VectorXd> scale;    // column std devs when standardized
    Eigen::MatrixXd components;              // k x d, orthonormal rows
    Eigen::VectorXd explained_variance_ratio;

    Eigen::Index input_dimension() const { return components.cols(); }
    Eigen::Index output_dimension() const { return components.rows(); }
};

// Eigendecomposition of the sample covariance (or correlation, when
// standardize) of the source data. Each component row is flipped so its
// largest-magnitude entry is positive, making the output solver-independent.
// Throws when k exceeds the numerical rank, naming the achievable rank.
PcaProjection fit_pca(const Eigen::MatrixXd& source_features, Eigen::Index k = 2,
                      bool standardize = false);

// scores = ((features - center) / scale) * components^T
Eigen::MatrixXd apply_pca(const PcaProjection& proj, const Eigen::MatrixXd& features);

}  // namespace tdist
