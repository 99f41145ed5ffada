#pragma once

#include "tdist/dataset.hpp"
#include "tdist/gmm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace tdist {

enum class PriorKind { empirical, user_specified };

/// Class prior P(Y). Entries sum to 1 within 1e-12.
struct Prior {
    Eigen::VectorXd probabilities;
    PriorKind kind = PriorKind::user_specified;

    int num_classes() const { return static_cast<int>(probabilities.size()); }
};

Prior make_prior(Eigen::VectorXd probabilities, PriorKind kind = PriorKind::user_specified);
Prior empirical_prior(const LabeledDataset& ds);

// Softmax of unnormalized log scores; -inf entries get probability 0.
// Invariant to adding a common constant to every entry.
Eigen::VectorXd normalized_from_log(const Eigen::VectorXd& log_terms);

struct PosteriorDiagnostics {
    std::uint64_t prior_fallbacks = 0;  // points where every class density underflowed
};

/// Per-class likelihood GMMs plus a prior; the marginal comes from the total
/// probability law and the posterior from Bayes' theorem. Immutable and safe
/// for concurrent evaluation.
class ClassConditionalModel {
public:
    ClassConditionalModel(std::vector<GmmModel> likelihoods, Prior prior, Environment env);

    int num_classes() const { return prior_.num_classes(); }
    Eigen::Index dimension() const { return dim_; }
    const GmmModel& likelihood(ClassLabel y) const;
    const Prior& prior() const { return prior_; }
    Environment environment() const { return env_; }

    // log sum_y P(y) p(x | y), log-sum-exp stabilized.
    double marginal_log_density(const Eigen::VectorXd& x) const;

    // P(Y | X = x); when every class log-density underflows the posterior
    // falls back to the prior and the diagnostics counter is bumped.
    Eigen::VectorXd posterior(const Eigen::VectorXd& x) const;
    Eigen::VectorXd posterior(const Eigen::VectorXd& x, PosteriorDiagnostics& diag) const;

    // argmax_y P(y | x); ties break toward the smallest label.
    ClassLabel classify(const Eigen::VectorXd& x) const;

    // The marginal P(X) as an explicit mixture (prior-weighted components of
    // all class likelihoods; zero-prior classes contribute nothing).
    GmmModel marginal_gmm() const;

private:
    std::vector<GmmModel> likelihoods_;
    Prior prior_;
    Environment env_;
    Eigen::Index dim_ = 0;
};

// One GMM per class, each fitted on that class's rows only, with a seed
// stream derived from (cfg.seed, environment, class). Requires every class to
// have at least `components_per_class` rows.
std::vector<GmmModel> fit_per_class_likelihoods(const LabeledDataset& ds,
                                                int components_per_class,
                                                const FitConfig& cfg = {});

// Algorithm: group rows by class, fit one GMM per class on that class's rows
// only, attach the prior. Throws when a class with positive prior has fewer
// rows than requested components; zero-prior classes degrade to fewer
// components instead.
ClassConditionalModel fit_class_conditional(const LabeledDataset& ds, const Prior& prior,
                                            int components_per_class,
                                            const FitConfig& cfg = {});

}  // namespace tdist
