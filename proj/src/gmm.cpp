#include "tdist/gmm.hpp"

#include "tdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tdist {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

// Clamp the eigenvalues of a symmetric matrix from below.
Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(floor);
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double mean_column_variance(const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows();
    if (n < 2) return 0.0;
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const double total =
        (data.rowwise() - mean).array().square().sum() / static_cast<double>(n - 1);
    return total / static_cast<double>(data.cols());
}

Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& data, double floor) {
    const Eigen::Index n = data.rows();
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd centered = data.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered /
                          static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    return floor_eigenvalues(cov, floor);
}

std::vector<Eigen::Index> kmeanspp_seeds(const Eigen::MatrixXd& data, int k,
                                         rng::Stream& stream) {
    const Eigen::Index n = data.rows();
    std::vector<Eigen::Index> chosen;
    chosen.push_back(static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n))));

    Eigen::VectorXd d2 =
        (data.rowwise() - data.row(chosen[0])).rowwise().squaredNorm();
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    used[static_cast<std::size_t>(chosen[0])] = true;

    while (static_cast<int>(chosen.size()) < k) {
        const double total = d2.sum();
        Eigen::Index next = -1;
        if (total > 0.0) {
            double u = stream.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= d2(i);
                if (u <= 0.0) {
                    next = i;
                    break;
                }
            }
            if (next < 0) next = n - 1;
        }
        if (next < 0 || used[static_cast<std::size_t>(next)]) {
            // All remaining distances are zero (duplicated points); fall back
            // to the first unused row so seeding still terminates.
            next = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!used[static_cast<std::size_t>(i)]) {
                    next = i;
                    break;
                }
            }
            if (next < 0) next = chosen[0];
        }
        chosen.push_back(next);
        used[static_cast<std::size_t>(next)] = true;
        d2 = d2.cwiseMin((data.rowwise() - data.row(next)).rowwise().squaredNorm());
    }
    return chosen;
}

struct EmResult {
    std::vector<GaussianComponent> components;
    std::vector<double> loglik_trace;
    double final_loglik = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

// Per-iteration density cache so the E-step factorizes each covariance once.
struct CompDensity {
    Eigen::MatrixXd chol_l;
    double log_norm = 0.0;
    double log_weight = 0.0;
};

CompDensity make_comp_density(const GaussianComponent& gc) {
    CompDensity cd;
    Eigen::LLT<Eigen::MatrixXd> llt(gc.covariance);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("EM produced a non-positive-definite covariance");
    }
    cd.chol_l = llt.matrixL();
    double log_det_half = 0.0;
    for (Eigen::Index i = 0; i < cd.chol_l.rows(); ++i) {
        log_det_half += std::log(cd.chol_l(i, i));
    }
    cd.log_norm = -0.5 * static_cast<double>(gc.mean.size()) * kLog2Pi - log_det_half;
    cd.log_weight = std::log(gc.weight);
    return cd;
}

EmResult run_em_once(const Eigen::MatrixXd& data, int k, const FitConfig& cfg,
                     double reg_floor, std::uint64_t seed) {
    const Eigen::Index n = data.rows();
    rng::Stream stream(seed);

    const Eigen::MatrixXd init_cov = pooled_covariance(data, reg_floor);
    std::vector<GaussianComponent> comps(static_cast<std::size_t>(k));
    const std::vector<Eigen::Index> seeds = kmeanspp_seeds(data, k, stream);
    for (int c = 0; c < k; ++c) {
        comps[static_cast<std::size_t>(c)].weight = 1.0 / static_cast<double>(k);
        comps[static_cast<std::size_t>(c)].mean = data.row(seeds[static_cast<std::size_t>(c)]).transpose();
        comps[static_cast<std::size_t>(c)].covariance = init_cov;
    }

    EmResult result;
    Eigen::MatrixXd log_resp(n, k);
    Eigen::VectorXd row_loglik(n);
    double prev_loglik = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // E-step (log space).
        std::vector<CompDensity> dens;
        dens.reserve(static_cast<std::size_t>(k));
        for (const GaussianComponent& gc : comps) dens.push_back(make_comp_density(gc));

        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd x = data.row(i).transpose();
            for (int c = 0; c < k; ++c) {
                const CompDensity& cd = dens[static_cast<std::size_t>(c)];
                const Eigen::VectorXd z = cd.chol_l.triangularView<Eigen::Lower>().solve(
                    x - comps[static_cast<std::size_t>(c)].mean);
                log_resp(i, c) = cd.log_weight + cd.log_norm - 0.5 * z.squaredNorm();
            }
        }
        double loglik = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mx = log_resp.row(i).maxCoeff();
            const double lse = mx + std::log((log_resp.row(i).array() - mx).exp().sum());
            row_loglik(i) = lse;
            loglik += lse;
            log_resp.row(i) = (log_resp.row(i).array() - lse).exp();
        }
        result.loglik_trace.push_back(loglik);
        result.final_loglik = loglik;
        result.iterations = iter + 1;

        const double denom = std::max(std::abs(prev_loglik), 1e-12);
        if (iter > 0 && std::abs(loglik - prev_loglik) / denom < cfg.tol) {
            result.converged = true;
            break;
        }
        prev_loglik = loglik;

        // M-step; log_resp now holds responsibilities.
        for (int c = 0; c < k; ++c) {
            const Eigen::VectorXd r = log_resp.col(c);
            const double nk = r.sum();
            if (nk < 1e-9) {
                // Reseed a dying component at the point the mixture explains
                // worst, keeping the update NaN-free on small n.
                Eigen::Index worst = 0;
                row_loglik.minCoeff(&worst);
                comps[static_cast<std::size_t>(c)].mean = data.row(worst).transpose();
                comps[static_cast<std::size_t>(c)].covariance = init_cov;
                comps[static_cast<std::size_t>(c)].weight = 1.0 / static_cast<double>(n);
                continue;
            }
            const Eigen::VectorXd mu = (data.transpose() * r) / nk;
            const Eigen::MatrixXd centered = data.rowwise() - mu.transpose();
            const Eigen::MatrixXd cov =
                (centered.transpose() * (r.asDiagonal() * centered)) / nk;
            comps[static_cast<std::size_t>(c)].weight = nk / static_cast<double>(n);
            comps[static_cast<std::size_t>(c)].mean = mu;
            comps[static_cast<std::size_t>(c)].covariance = floor_eigenvalues(cov, reg_floor);
        }
        double wsum = 0.0;
        for (const auto& gc : comps) wsum += gc.weight;
        for (auto& gc : comps) gc.weight /= wsum;
    }

    result.components = std::move(comps);
    return result;
}

}  // namespace

GmmModel::GmmModel(std::vector<GaussianComponent> components, FitMetadata metadata)
    : components_(std::move(components)), metadata_(std::move(metadata)) {
    if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
    dim_ = components_.front().mean.size();
    if (dim_ < 1) throw std::invalid_argument("component dimension must be >= 1");

    double wsum = 0.0;
    for (const GaussianComponent& c : components_) {
        if (c.mean.size() != dim_) throw std::invalid_argument("components disagree on dimension");
        if (c.covariance.rows() != dim_ || c.covariance.cols() != dim_) {
            throw std::invalid_argument("covariance shape does not match mean");
        }
        if (!(c.weight > 0.0) || c.weight > 1.0 + 1e-12) {
            throw std::invalid_argument("component weight must be in (0, 1]");
        }
        if (((c.covariance - c.covariance.transpose()).array().abs() > 1e-10).any()) {
            throw std::invalid_argument("covariance is not symmetric");
        }
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12) {
        throw std::invalid_argument("component weights must sum to 1");
    }

    caches_.reserve(components_.size());
    for (const GaussianComponent& c : components_) {
        const Eigen::MatrixXd sym = 0.5 * (c.covariance + c.covariance.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(sym);
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("covariance is not positive definite");
        }
        ComponentCache cache;
        cache.chol_l = llt.matrixL();
        double log_det_half = 0.0;
        for (Eigen::Index i = 0; i < dim_; ++i) log_det_half += std::log(cache.chol_l(i, i));
        cache.log_norm = -0.5 * static_cast<double>(dim_) * kLog2Pi - log_det_half;
        cache.log_weight = std::log(c.weight);
        caches_.push_back(std::move(cache));
    }
}

double GmmModel::log_density(const Eigen::VectorXd& x) const {
    if (x.size() != dim_) throw std::invalid_argument("point dimension does not match model");
    double max_term = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd terms(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t c = 0; c < components_.size(); ++c) {
        const Eigen::VectorXd z = caches_[c].chol_l.triangularView<Eigen::Lower>().solve(
            x - components_[c].mean);
        const double t = caches_[c].log_weight + caches_[c].log_norm - 0.5 * z.squaredNorm();
        terms(static_cast<Eigen::Index>(c)) = t;
        max_term = std::max(max_term, t);
    }
    if (!std::isfinite(max_term)) return max_term;
    return max_term + std::log((terms.array() - max_term).exp().sum());
}

Eigen::MatrixXd GmmModel::sample(Eigen::Index m, std::uint64_t seed) const {
    if (m < 1) throw std::invalid_argument("sample count must be >= 1");
    rng::Stream stream(seed);
    Eigen::MatrixXd out(m, dim_);
    Eigen::VectorXd z(dim_);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double u = stream.uniform();
        std::size_t c = 0;
        double acc = 0.0;
        for (; c + 1 < components_.size(); ++c) {
            acc += components_[c].weight;
            if (u < acc) break;
        }
        for (Eigen::Index j = 0; j < dim_; ++j) z(j) = stream.normal();
        out.row(i) =
            (components_[c].mean + caches_[c].chol_l * z).transpose();
    }
    return out;
}

GmmModel fit_em(const Eigen::MatrixXd& data, int k, const FitConfig& cfg) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (k < 1) throw std::invalid_argument("component count must be >= 1");
    if (n < k) throw std::invalid_argument("need at least K rows to fit K components");
    if (d < 1) throw std::invalid_argument("data must have at least one column");
    if (!data.allFinite()) throw std::invalid_argument("data contains non-finite values");
    if (cfg.max_iter < 1 || cfg.restarts < 1) {
        throw std::invalid_argument("max_iter and restarts must be >= 1");
    }

    const double mean_var = mean_column_variance(data);
    const double reg_floor = cfg.reg_floor_scale * (mean_var > 0.0 ? mean_var : 1.0);

    FitMetadata meta;
    meta.seed = cfg.seed;
    meta.restarts = cfg.restarts;
    meta.reg_floor = reg_floor;
    if (mean_var <= 0.0 && k > 1) {
        meta.warnings.push_back(
            "all rows identical: mixture collapses to a single effective component");
    }

    EmResult best;
    for (int r = 0; r < cfg.restarts; ++r) {
        EmResult res = run_em_once(data, k, cfg, reg_floor,
                                   rng::derive_seed(cfg.seed, {0x1101, static_cast<std::uint64_t>(r)}));
        meta.loglik_traces.push_back(res.loglik_trace);
        if (res.final_loglik > best.final_loglik) {
            best = std::move(res);
            meta.best_restart = r;
        }
    }
    meta.iterations = best.iterations;
    meta.final_log_likelihood = best.final_loglik;
    meta.converged = best.converged;

    return GmmModel(std::move(best.components), std::move(meta));
}

double log_likelihood(const GmmModel& model, const Eigen::MatrixXd& data) {
    if (data.cols() != model.dimension()) {
        throw std::invalid_argument("data dimension does not match model");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        total += model.log_density(data.row(i).transpose());
    }
    return total;
}

double bic(const GmmModel& model, const Eigen::MatrixXd& data) {
    const double k = static_cast<double>(model.component_count());
    const double d = static_cast<double>(model.dimension());
    const double p = (k - 1.0) + k * d + k * d * (d + 1.0) / 2.0;
    const double n = static_cast<double>(data.rows());
    return p * std::log(n) - 2.0 * log_likelihood(model, data);
}

GmmModel scaled_mixture(const std::vector<std::pair<double, const GmmModel*>>& parts) {
    if (parts.empty()) throw std::invalid_argument("mixture needs at least one part");
    double total = 0.0;
    std::vector<GaussianComponent> comps;
    for (const auto& [coef, model] : parts) {
        if (coef < 0.0) throw std::invalid_argument("mixture coefficients must be non-negative");
        if (coef == 0.0) continue;
        total += coef;
        for (const GaussianComponent& c : model->components()) {
            comps.push_back({coef * c.weight, c.mean, c.covariance});
        }
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("mixture coefficients must sum to 1");
    }
    double wsum = 0.0;
    for (const GaussianComponent& c : comps) wsum += c.weight;
    for (GaussianComponent& c : comps) c.weight /= wsum;
    return GmmModel(std::move(comps));
}

}  // namespace tdist
