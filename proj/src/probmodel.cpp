#include "tdist/probmodel.hpp"

#include "tdist/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdist {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Prior make_prior(Eigen::VectorXd probabilities, PriorKind kind) {
    if (probabilities.size() < 1) throw std::invalid_argument("prior must not be empty");
    for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities(i);
        if (!(p >= 0.0) || p > 1.0) {
            throw std::invalid_argument("prior entries must lie in [0, 1]");
        }
    }
    if (std::abs(probabilities.sum() - 1.0) > 1e-12) {
        throw std::invalid_argument("prior must sum to 1");
    }
    return Prior{std::move(probabilities), kind};
}

Prior empirical_prior(const LabeledDataset& ds) {
    const std::vector<Eigen::Index> counts = ds.class_counts();
    Eigen::VectorXd p(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) {
        p(static_cast<Eigen::Index>(i)) =
            static_cast<double>(counts[i]) / static_cast<double>(ds.row_count());
    }
    p /= p.sum();
    return Prior{std::move(p), PriorKind::empirical};
}

Eigen::VectorXd normalized_from_log(const Eigen::VectorXd& log_terms) {
    const double mx = log_terms.maxCoeff();
    Eigen::VectorXd out(log_terms.size());
    if (!std::isfinite(mx)) {
        throw std::invalid_argument("all log terms are non-finite");
    }
    for (Eigen::Index i = 0; i < log_terms.size(); ++i) {
        out(i) = std::exp(log_terms(i) - mx);
    }
    return out / out.sum();
}

ClassConditionalModel::ClassConditionalModel(std::vector<GmmModel> likelihoods, Prior prior,
                                             Environment env)
    : likelihoods_(std::move(likelihoods)), prior_(std::move(prior)), env_(env) {
    if (likelihoods_.empty()) throw std::invalid_argument("model needs at least one class");
    if (static_cast<int>(likelihoods_.size()) != prior_.num_classes()) {
        throw std::invalid_argument("prior length does not match number of classes");
    }
    dim_ = likelihoods_.front().dimension();
    for (const GmmModel& m : likelihoods_) {
        if (m.dimension() != dim_) {
            throw std::invalid_argument("class likelihoods disagree on dimension");
        }
    }
}

const GmmModel& ClassConditionalModel::likelihood(ClassLabel y) const {
    if (y < 0 || y >= num_classes()) throw std::invalid_argument("class label out of range");
    return likelihoods_[static_cast<std::size_t>(y)];
}

double ClassConditionalModel::marginal_log_density(const Eigen::VectorXd& x) const {
    if (x.size() != dim_) throw std::invalid_argument("point dimension does not match model");
    Eigen::VectorXd terms(num_classes());
    double mx = kNegInf;
    for (int y = 0; y < num_classes(); ++y) {
        const double p = prior_.probabilities(y);
        terms(y) = p > 0.0
                       ? std::log(p) + likelihoods_[static_cast<std::size_t>(y)].log_density(x)
                       : kNegInf;
        mx = std::max(mx, terms(y));
    }
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((terms.array() - mx).exp().sum());
}

Eigen::VectorXd ClassConditionalModel::posterior(const Eigen::VectorXd& x) const {
    PosteriorDiagnostics diag;
    return posterior(x, diag);
}

Eigen::VectorXd ClassConditionalModel::posterior(const Eigen::VectorXd& x,
                                                 PosteriorDiagnostics& diag) const {
    if (x.size() != dim_) throw std::invalid_argument("point dimension does not match model");
    Eigen::VectorXd terms(num_classes());
    double mx = kNegInf;
    for (int y = 0; y < num_classes(); ++y) {
        const double p = prior_.probabilities(y);
        terms(y) = p > 0.0
                       ? std::log(p) + likelihoods_[static_cast<std::size_t>(y)].log_density(x)
                       : kNegInf;
        mx = std::max(mx, terms(y));
    }
    if (!std::isfinite(mx)) {
        // Every class density underflowed; the prior is the only information left.
        ++diag.prior_fallbacks;
        return prior_.probabilities;
    }
    return normalized_from_log(terms);
}

ClassLabel ClassConditionalModel::classify(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd post = posterior(x);
    ClassLabel best = 0;
    for (int y = 1; y < num_classes(); ++y) {
        if (post(y) > post(best)) best = y;
    }
    return best;
}

GmmModel ClassConditionalModel::marginal_gmm() const {
    std::vector<std::pair<double, const GmmModel*>> parts;
    for (int y = 0; y < num_classes(); ++y) {
        const double p = prior_.probabilities(y);
        if (p > 0.0) parts.emplace_back(p, &likelihoods_[static_cast<std::size_t>(y)]);
    }
    return scaled_mixture(parts);
}

namespace {

std::vector<GmmModel> fit_likelihoods_impl(const LabeledDataset& ds, int components_per_class,
                                           const FitConfig& cfg, const Prior* prior) {
    if (components_per_class < 1) {
        throw std::invalid_argument("components per class must be >= 1");
    }

    const auto by_class = split_by_class(ds);
    const std::uint64_t env_tag = ds.environment == Environment::source ? 0 : 1;
    std::vector<GmmModel> likelihoods;
    likelihoods.reserve(static_cast<std::size_t>(ds.num_classes()));

    for (int y = 0; y < ds.num_classes(); ++y) {
        const auto it = by_class.find(y);
        const Eigen::Index rows = it == by_class.end() ? 0 : it->second.rows();
        int k = components_per_class;
        if (rows < k) {
            if (prior == nullptr || prior->probabilities(y) > 0.0) {
                throw std::invalid_argument("class " + std::to_string(y) + " has " +
                                            std::to_string(rows) + " rows, needs at least " +
                                            std::to_string(k));
            }
            if (rows == 0) {
                throw std::invalid_argument("class " + std::to_string(y) +
                                            " has no rows to fit a likelihood on");
            }
            k = static_cast<int>(rows);
        }
        FitConfig class_cfg = cfg;
        class_cfg.seed = rng::derive_seed(cfg.seed, {0x2201, env_tag, static_cast<std::uint64_t>(y)});
        likelihoods.push_back(fit_em(it->second, k, class_cfg));
    }
    return likelihoods;
}

}  // namespace

std::vector<GmmModel> fit_per_class_likelihoods(const LabeledDataset& ds,
                                                int components_per_class,
                                                const FitConfig& cfg) {
    return fit_likelihoods_impl(ds, components_per_class, cfg, nullptr);
}

ClassConditionalModel fit_class_conditional(const LabeledDataset& ds, const Prior& prior,
                                            int components_per_class, const FitConfig& cfg) {
    if (prior.num_classes() != ds.num_classes()) {
        throw std::invalid_argument("prior length does not match dataset classes");
    }
    return ClassConditionalModel(
        fit_likelihoods_impl(ds, components_per_class, cfg, &prior), prior, ds.environment);
}

}  // namespace tdist
