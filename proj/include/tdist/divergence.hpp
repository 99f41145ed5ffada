#pragma once

#include "tdist/gmm.hpp"
#include "tdist/probmodel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tdist {

enum class Metric { hellinger, kl };

enum class DistanceMethod {
    hellinger_mc,
    kl_mc,
    hellinger_gauss_closed,
    kl_gauss_closed,
    posterior_expected,
    ks,
};

enum class ReferenceMeasure { source, target, mixture };

std::string to_string(Metric m);
std::string to_string(DistanceMethod m);
std::string to_string(ReferenceMeasure r);

/// A divergence value plus the estimator provenance needed to reproduce it.
/// Hellinger values are clamped to [0, 1] and KL values to [0, inf); the
/// pre-clamp value is kept in raw_value.
struct DistanceEstimate {
    double value = 0.0;
    double raw_value = 0.0;
    DistanceMethod method = DistanceMethod::hellinger_mc;
    std::int64_t mc_samples = 0;  // 0 for closed-form / KS results
    std::uint64_t seed = 0;
    std::optional<double> std_error;
    std::int64_t floored_count = 0;  // points where the epsilon floor kicked in

    bool clamped() const { return value != raw_value; }
};

// Monte Carlo Hellinger distance between two mixtures. The default symmetric
// estimator averages both directional Bhattacharyya estimates with a shared
// sample seed, which makes it exactly invariant under argument swap.
DistanceEstimate hellinger_mc(const GmmModel& p, const GmmModel& q, std::int64_t m,
                              std::uint64_t seed, bool symmetric = true);

// Monte Carlo KL(P -> Q): mean of log p(x) - log q(x) over x ~ p. Negative
// estimates are clamped at 0 with the raw value recorded.
DistanceEstimate kl_mc(const GmmModel& p, const GmmModel& q, std::int64_t m,
                       std::uint64_t seed);

DistanceEstimate estimate_distance(Metric metric, const GmmModel& p, const GmmModel& q,
                                   std::int64_t m, std::uint64_t seed);

// Exact divergences between multivariate Gaussians; the oracles behind the
// Monte Carlo estimators.
double hellinger_gauss_closed(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                              const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2);
double kl_gauss_closed(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                       const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2);

// 1-D conveniences (variance parameterization).
double hellinger_gauss_closed(double mean1, double var1, double mean2, double var2);
double kl_gauss_closed(double mean1, double var1, double mean2, double var2);

// Expected pointwise divergence between the label posteriors of two models,
// for class y against the rest, averaged over x drawn from the reference
// measure (equal source/target mixture by default). KL uses a 1e-12 floor on
// the target-side probabilities; floored points are counted.
DistanceEstimate posterior_distance(const ClassConditionalModel& src,
                                    const ClassConditionalModel& tgt, ClassLabel y,
                                    Metric metric, std::int64_t m, std::uint64_t seed,
                                    ReferenceMeasure reference = ReferenceMeasure::mixture);

/// Right-continuous empirical CDF: F(x) = #{values <= x} / n.
struct EmpiricalCdf {
    std::vector<double> values;  // sorted ascending

    static EmpiricalCdf from_sample(std::vector<double> sample);
    std::size_t size() const { return values.size(); }
    double operator()(double x) const;
};

// sup |F_a - F_b|, computed exactly by sweeping the merged order statistics.
double ks_statistic(const EmpiricalCdf& a, const EmpiricalCdf& b);

}  // namespace tdist
