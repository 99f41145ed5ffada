#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tdist {

/// One weighted multivariate Gaussian of a mixture.
struct GaussianComponent {
    double weight = 1.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // symmetric positive-definite
};

struct FitConfig {
    int max_iter = 200;
    double tol = 1e-6;       // relative log-likelihood change
    int restarts = 5;
    std::uint64_t seed = 0;
    double reg_floor_scale = 1e-6;  // floor = scale * mean feature variance
};

struct FitMetadata {
    std::uint64_t seed = 0;
    int restarts = 0;
    int best_restart = 0;
    int iterations = 0;
    double final_log_likelihood = 0.0;
    bool converged = false;
    double reg_floor = 0.0;
    std::vector<std::string> warnings;
    // Per-restart log-likelihood trace, one value per EM iteration.
    std::vector<std::vector<double>> loglik_traces;
};

/// Immutable Gaussian mixture. Cholesky factors are precomputed at
/// construction, so density evaluation and sampling are allocation-light and
/// safe for concurrent callers.
class GmmModel {
public:
    GmmModel(std::vector<GaussianComponent> components, FitMetadata metadata = {});

    Eigen::Index dimension() const { return dim_; }
    int component_count() const { return static_cast<int>(components_.size()); }
    const std::vector<GaussianComponent>& components() const { return components_; }
    const FitMetadata& metadata() const { return metadata_; }

    // log sum_k pi_k N(x | mu_k, Sigma_k), log-sum-exp stabilized; finite for
    // every finite x.
    double log_density(const Eigen::VectorXd& x) const;

    // m rows drawn from the mixture; deterministic for a fixed seed.
    Eigen::MatrixXd sample(Eigen::Index m, std::uint64_t seed) const;

private:
    struct ComponentCache {
        Eigen::MatrixXd chol_l;   // lower Cholesky factor of the covariance
        double log_norm = 0.0;    // -d/2 log(2 pi) - sum log L_ii
        double log_weight = 0.0;
    };

    std::vector<GaussianComponent> components_;
    std::vector<ComponentCache> caches_;
    FitMetadata metadata_;
    Eigen::Index dim_ = 0;
};

// EM with k-means++ seeding, pooled-covariance initialization, uniform
// weights, eigenvalue flooring, and best-of-restarts selection.
GmmModel fit_em(const Eigen::MatrixXd& data, int k, const FitConfig& cfg = {});

double log_likelihood(const GmmModel& model, const Eigen::MatrixXd& data);

// p ln n - 2 loglik with p = K-1 + K d + K d(d+1)/2 free parameters.
double bic(const GmmModel& model, const Eigen::MatrixXd& data);

// Mixture of mixtures: concatenates the parts' components with their weights
// scaled by the given coefficients (which must sum to 1).
GmmModel scaled_mixture(const std::vector<std::pair<double, const GmmModel*>>& parts);

}  // namespace tdist
