#include "tdist/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tdist {

namespace {

void validate_window_config(const WindowConfig& cfg) {
    if (cfg.window_length < 1) throw std::invalid_argument("window_length must be >= 1");
    if (cfg.hop < 1) throw std::invalid_argument("hop must be >= 1");
    if (cfg.summaries.empty()) throw std::invalid_argument("summaries must not be empty");
    std::set<Summary> seen(cfg.summaries.begin(), cfg.summaries.end());
    if (seen.size() != cfg.summaries.size()) {
        throw std::invalid_argument("summaries must not repeat");
    }
    if (seen.count(Summary::std_dev) && cfg.window_length < 2) {
        throw std::invalid_argument("window_length must be >= 2 for standard deviation");
    }
}

const char* summary_suffix(Summary s) {
    return s == Summary::mean ? "mean" : "std";
}

}  // namespace

Eigen::MatrixXd window_summarize(const Eigen::MatrixXd& raw, const WindowConfig& cfg) {
    validate_window_config(cfg);
    const Eigen::Index n = raw.rows();
    const Eigen::Index d = raw.cols();
    if (n < cfg.window_length) {
        throw std::invalid_argument("series shorter than window_length");
    }

    const Eigen::Index n_out = (n - cfg.window_length) / cfg.hop + 1;
    const Eigen::Index summaries = static_cast<Eigen::Index>(cfg.summaries.size());
    Eigen::MatrixXd out(n_out, d * summaries);

    for (Eigen::Index w = 0; w < n_out; ++w) {
        const auto window = raw.middleRows(w * cfg.hop, cfg.window_length);
        const Eigen::RowVectorXd mean = window.colwise().mean();
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index s = 0; s < summaries; ++s) {
                const Eigen::Index col = j * summaries + s;
                if (cfg.summaries[static_cast<std::size_t>(s)] == Summary::mean) {
                    out(w, col) = mean(j);
                } else {
                    const double ss = (window.col(j).array() - mean(j)).square().sum();
                    out(w, col) = std::sqrt(ss / static_cast<double>(cfg.window_length - 1));
                }
            }
        }
    }
    return out;
}

std::vector<std::string> window_summary_names(const std::vector<std::string>& feature_names,
                                              const WindowConfig& cfg) {
    validate_window_config(cfg);
    std::vector<std::string> out;
    out.reserve(feature_names.size() * cfg.summaries.size());
    for (const std::string& name : feature_names) {
        for (Summary s : cfg.summaries) {
            out.push_back(name + "_" + summary_suffix(s));
        }
    }
    return out;
}

LabeledDataset window_summarize_labeled(const LabeledDataset& ds, const WindowConfig& cfg) {
    validate_window_config(cfg);
    std::vector<Eigen::MatrixXd> blocks;
    std::vector<long long> raw_labels;

    Eigen::Index run_start = 0;
    const Eigen::Index n = ds.row_count();
    for (Eigen::Index i = 1; i <= n; ++i) {
        const bool boundary = (i == n) || (ds.labels[static_cast<std::size_t>(i)] !=
                                           ds.labels[static_cast<std::size_t>(run_start)]);
        if (!boundary) continue;
        const Eigen::Index run_len = i - run_start;
        if (run_len >= cfg.window_length) {
            Eigen::MatrixXd summarized =
                window_summarize(ds.features.middleRows(run_start, run_len), cfg);
            const long long value =
                ds.label_values[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(run_start)])];
            for (Eigen::Index r = 0; r < summarized.rows(); ++r) raw_labels.push_back(value);
            blocks.push_back(std::move(summarized));
        }
        run_start = i;
    }

    if (blocks.empty()) {
        throw std::invalid_argument("no label run is at least window_length rows long");
    }
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.rows();
    Eigen::MatrixXd features(total, blocks.front().cols());
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        features.middleRows(at, b.rows()) = b;
        at += b.rows();
    }
    return make_dataset(std::move(features), raw_labels,
                        window_summary_names(ds.feature_names, cfg), ds.environment);
}

PcaProjection fit_pca(const Eigen::MatrixXd& source_features, Eigen::Index k,
                      bool standardize) {
    const Eigen::Index n = source_features.rows();
    const Eigen::Index d = source_features.cols();
    if (n < 2) throw std::invalid_argument("PCA needs at least 2 rows");
    if (k < 1 || k > std::min(n, d)) {
        throw std::invalid_argument("component count must satisfy 1 <= k <= min(n, d)");
    }

    const Eigen::VectorXd center = source_features.colwise().mean();
    Eigen::MatrixXd centered = source_features.rowwise() - center.transpose();

    std::optional<Eigen::VectorXd> scale;
    if (standardize) {
        Eigen::VectorXd sd =
            (centered.array().square().colwise().sum() / static_cast<double>(n - 1))
                .sqrt()
                .matrix()
                .transpose();
        for (Eigen::Index j = 0; j < d; ++j) {
            if (sd(j) <= 0.0) sd(j) = 1.0;  // constant column: leave it centered only
        }
        centered = centered.array().rowwise() / sd.transpose().array();
        scale = std::move(sd);
    }

    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

    // Eigen returns ascending eigenvalues; walk them from the top.
    const Eigen::VectorXd evals = eig.eigenvalues();
    const Eigen::MatrixXd evecs = eig.eigenvectors();
    const double lambda_max = std::max(evals(d - 1), 0.0);
    const double rank_tol = lambda_max * 1e-10;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (evals(i) > rank_tol && evals(i) > 0.0) ++rank;
    }
    if (k > rank) {
        std::ostringstream msg;
        msg << "requested " << k << " components but the numerical rank of the data is "
            << rank;
        throw std::invalid_argument(msg.str());
    }

    double total_var = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) total_var += std::max(evals(i), 0.0);

    PcaProjection proj;
    proj.center = center;
    proj.scale = std::move(scale);
    proj.components.resize(k, d);
    proj.explained_variance_ratio.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::VectorXd v = evecs.col(d - 1 - c);
        // Deterministic sign: largest-magnitude entry made positive.
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        proj.components.row(c) = v.transpose();
        proj.explained_variance_ratio(c) = std::max(evals(d - 1 - c), 0.0) / total_var;
    }
    return proj;
}

Eigen::MatrixXd apply_pca(const PcaProjection& proj, const Eigen::MatrixXd& features) {
    if (features.cols() != proj.input_dimension()) {
        throw std::invalid_argument("feature dimension does not match projection");
    }
    Eigen::MatrixXd centered = features.rowwise() - proj.center.transpose();
    if (proj.scale) {
        centered = centered.array().rowwise() / proj.scale->transpose().array();
    }
    return centered * proj.components.transpose();
}

}  // namespace tdist
