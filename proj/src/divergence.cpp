#include "tdist/divergence.hpp"

#include "tdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tdist {

std::string to_string(Metric m) {
    return m == Metric::hellinger ? "hellinger" : "kl";
}

std::string to_string(DistanceMethod m) {
    switch (m) {
        case DistanceMethod::hellinger_mc: return "hellinger_mc";
        case DistanceMethod::kl_mc: return "kl_mc";
        case DistanceMethod::hellinger_gauss_closed: return "hellinger_gauss_closed";
        case DistanceMethod::kl_gauss_closed: return "kl_gauss_closed";
        case DistanceMethod::posterior_expected: return "posterior_expected";
        case DistanceMethod::ks: return "ks";
    }
    return "unknown";
}

std::string to_string(ReferenceMeasure r) {
    switch (r) {
        case ReferenceMeasure::source: return "source";
        case ReferenceMeasure::target: return "target";
        case ReferenceMeasure::mixture: return "mixture";
    }
    return "unknown";
}

namespace {

constexpr double kPosteriorKlFloor = 1e-12;

struct MeanVar {
    double mean = 0.0;
    double variance_of_mean = 0.0;  // sample variance / count
    std::int64_t count = 0;
    std::int64_t bad = 0;
};

// Streaming mean/variance over the finite terms produced by `term(i)`.
template <typename TermFn>
MeanVar accumulate_terms(std::int64_t m, TermFn&& term) {
    MeanVar out;
    double mean = 0.0;
    double m2 = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        const double t = term(i);
        if (!std::isfinite(t)) {
            ++out.bad;
            continue;
        }
        ++count;
        const double delta = t - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (t - mean);
    }
    out.mean = mean;
    out.count = count;
    if (count > 1) {
        out.variance_of_mean = m2 / static_cast<double>(count - 1) / static_cast<double>(count);
    }
    return out;
}

void check_bad_fraction(const MeanVar& mv, std::int64_t m, const char* estimator) {
    if (mv.bad * 100 > m) {
        std::ostringstream msg;
        msg << estimator << ": " << mv.bad << " of " << m
            << " density ratio terms were non-finite (more than 1%)";
        throw std::runtime_error(msg.str());
    }
}

// Directional Bhattacharyya-coefficient estimate: mean of sqrt(q/p) over x ~ from.
MeanVar bhattacharyya_direction(const GmmModel& from, const GmmModel& to, std::int64_t m,
                                std::uint64_t seed) {
    const Eigen::MatrixXd x = from.sample(m, seed);
    return accumulate_terms(m, [&](std::int64_t i) {
        const Eigen::VectorXd xi = x.row(i).transpose();
        const double lp = from.log_density(xi);
        const double lq = to.log_density(xi);
        if (!std::isfinite(lp)) return std::numeric_limits<double>::quiet_NaN();
        if (lq == -std::numeric_limits<double>::infinity()) return 0.0;  // no q mass here
        return std::exp(0.5 * (lq - lp));
    });
}

}  // namespace

DistanceEstimate hellinger_mc(const GmmModel& p, const GmmModel& q, std::int64_t m,
                              std::uint64_t seed, bool symmetric) {
    if (m < 2) throw std::invalid_argument("Monte Carlo estimate needs at least 2 samples");
    if (p.dimension() != q.dimension()) {
        throw std::invalid_argument("distributions disagree on dimension");
    }

    // Both directions use the same seed so swapping p and q reproduces the
    // identical pair of directional estimates.
    const MeanVar fwd = bhattacharyya_direction(p, q, m, seed);
    check_bad_fraction(fwd, m, "hellinger_mc");
    double bhat = fwd.mean;
    double var_bhat = fwd.variance_of_mean;
    if (symmetric) {
        const MeanVar rev = bhattacharyya_direction(q, p, m, seed);
        check_bad_fraction(rev, m, "hellinger_mc");
        bhat = 0.5 * (fwd.mean + rev.mean);
        var_bhat = 0.25 * (fwd.variance_of_mean + rev.variance_of_mean);
    }

    const double h2 = 1.0 - bhat;  // may dip below 0 when the estimate overshoots
    const double se_b = std::sqrt(var_bhat);

    DistanceEstimate est;
    est.method = DistanceMethod::hellinger_mc;
    est.mc_samples = m;
    est.seed = seed;
    est.raw_value = h2 >= 0.0 ? std::sqrt(h2) : -std::sqrt(-h2);
    est.value = h2 > 0.0 ? std::sqrt(h2) : 0.0;
    // Delta method through H = sqrt(1 - B); near H = 0 the derivative blows
    // up, so fall back to the sqrt scale of the B fluctuation.
    if (est.value > std::sqrt(se_b)) {
        est.std_error = se_b / (2.0 * est.value);
    } else {
        est.std_error = std::sqrt(se_b);
    }
    return est;
}

DistanceEstimate kl_mc(const GmmModel& p, const GmmModel& q, std::int64_t m,
                       std::uint64_t seed) {
    if (m < 2) throw std::invalid_argument("Monte Carlo estimate needs at least 2 samples");
    if (p.dimension() != q.dimension()) {
        throw std::invalid_argument("distributions disagree on dimension");
    }

    const Eigen::MatrixXd x = p.sample(m, seed);
    const MeanVar mv = accumulate_terms(m, [&](std::int64_t i) {
        const Eigen::VectorXd xi = x.row(i).transpose();
        return p.log_density(xi) - q.log_density(xi);
    });
    check_bad_fraction(mv, m, "kl_mc");

    DistanceEstimate est;
    est.method = DistanceMethod::kl_mc;
    est.mc_samples = m;
    est.seed = seed;
    est.raw_value = mv.mean;
    est.value = std::max(mv.mean, 0.0);
    est.std_error = std::sqrt(mv.variance_of_mean);
    return est;
}

DistanceEstimate estimate_distance(Metric metric, const GmmModel& p, const GmmModel& q,
                                   std::int64_t m, std::uint64_t seed) {
    return metric == Metric::hellinger ? hellinger_mc(p, q, m, seed) : kl_mc(p, q, m, seed);
}

namespace {

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& cov, const char* name) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument(std::string(name) + " covariance is not positive definite");
    }
    return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::MatrixXd l = llt.matrixL();
    double out = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) out += 2.0 * std::log(l(i, i));
    return out;
}

}  // namespace

double hellinger_gauss_closed(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                              const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2) {
    if (mean1.size() != mean2.size()) throw std::invalid_argument("dimension mismatch");
    const auto llt1 = checked_llt(cov1, "first");
    const auto llt2 = checked_llt(cov2, "second");
    const Eigen::MatrixXd avg = 0.5 * (cov1 + cov2);
    const auto llt_avg = checked_llt(avg, "average");

    const Eigen::VectorXd diff = mean1 - mean2;
    const double quad = diff.dot(llt_avg.solve(diff));
    const double log_bc = 0.25 * log_det_from_llt(llt1) + 0.25 * log_det_from_llt(llt2) -
                          0.5 * log_det_from_llt(llt_avg) - 0.125 * quad;
    const double h2 = 1.0 - std::exp(log_bc);
    return h2 > 0.0 ? std::sqrt(h2) : 0.0;
}

double kl_gauss_closed(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                       const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2) {
    if (mean1.size() != mean2.size()) throw std::invalid_argument("dimension mismatch");
    const auto llt1 = checked_llt(cov1, "first");
    const auto llt2 = checked_llt(cov2, "second");
    const Eigen::Index d = mean1.size();

    const double trace = llt2.solve(cov1).trace();
    const Eigen::VectorXd diff = mean2 - mean1;
    const double quad = diff.dot(llt2.solve(diff));
    const double log_det_ratio = log_det_from_llt(llt2) - log_det_from_llt(llt1);
    return 0.5 * (trace + quad - static_cast<double>(d) + log_det_ratio);
}

double hellinger_gauss_closed(double mean1, double var1, double mean2, double var2) {
    Eigen::VectorXd m1(1), m2(1);
    Eigen::MatrixXd c1(1, 1), c2(1, 1);
    m1 << mean1;
    m2 << mean2;
    c1 << var1;
    c2 << var2;
    return hellinger_gauss_closed(m1, c1, m2, c2);
}

double kl_gauss_closed(double mean1, double var1, double mean2, double var2) {
    Eigen::VectorXd m1(1), m2(1);
    Eigen::MatrixXd c1(1, 1), c2(1, 1);
    m1 << mean1;
    m2 << mean2;
    c1 << var1;
    c2 << var2;
    return kl_gauss_closed(m1, c1, m2, c2);
}

namespace {

// Discrete Hellinger between the Bernoulli pairs (p, 1-p) and (q, 1-q).
double bernoulli_hellinger(double p, double q) {
    const double a = std::sqrt(p) - std::sqrt(q);
    const double b = std::sqrt(1.0 - p) - std::sqrt(1.0 - q);
    return std::sqrt(0.5 * (a * a + b * b));
}

// Discrete KL with an epsilon floor on the q side; sets *floored when the
// floor was needed for a cell with positive p mass.
double bernoulli_kl(double p, double q, bool* floored) {
    double out = 0.0;
    const auto cell = [&](double pi, double qi) {
        if (pi <= 0.0) return 0.0;
        double denom = qi;
        if (denom < kPosteriorKlFloor) {
            denom = kPosteriorKlFloor;
            *floored = true;
        }
        return pi * std::log(pi / denom);
    };
    out += cell(p, q);
    out += cell(1.0 - p, 1.0 - q);
    return out;
}

}  // namespace

DistanceEstimate posterior_distance(const ClassConditionalModel& src,
                                    const ClassConditionalModel& tgt, ClassLabel y,
                                    Metric metric, std::int64_t m, std::uint64_t seed,
                                    ReferenceMeasure reference) {
    if (m < 2) throw std::invalid_argument("Monte Carlo estimate needs at least 2 samples");
    if (src.dimension() != tgt.dimension()) {
        throw std::invalid_argument("models disagree on dimension");
    }
    if (src.num_classes() != tgt.num_classes()) {
        throw std::invalid_argument("models disagree on label alphabet");
    }
    if (y < 0 || y >= src.num_classes()) throw std::invalid_argument("class label out of range");

    const GmmModel src_marginal = src.marginal_gmm();
    const GmmModel tgt_marginal = tgt.marginal_gmm();
    std::optional<GmmModel> mixture;
    const GmmModel* ref = nullptr;
    switch (reference) {
        case ReferenceMeasure::source: ref = &src_marginal; break;
        case ReferenceMeasure::target: ref = &tgt_marginal; break;
        case ReferenceMeasure::mixture:
            mixture = scaled_mixture({{0.5, &src_marginal}, {0.5, &tgt_marginal}});
            ref = &*mixture;
            break;
    }

    const Eigen::MatrixXd x = ref->sample(m, seed);
    std::int64_t floored_count = 0;
    const MeanVar mv = accumulate_terms(m, [&](std::int64_t i) {
        const Eigen::VectorXd xi = x.row(i).transpose();
        const double ps = src.posterior(xi)(y);
        const double pt = tgt.posterior(xi)(y);
        if (metric == Metric::hellinger) return bernoulli_hellinger(ps, pt);
        bool floored = false;
        const double v = bernoulli_kl(ps, pt, &floored);
        if (floored) ++floored_count;
        return v;
    });
    check_bad_fraction(mv, m, "posterior_distance");

    DistanceEstimate est;
    est.method = DistanceMethod::posterior_expected;
    est.mc_samples = m;
    est.seed = seed;
    est.floored_count = floored_count;
    est.raw_value = mv.mean;
    est.value = metric == Metric::hellinger ? std::clamp(mv.mean, 0.0, 1.0)
                                            : std::max(mv.mean, 0.0);
    est.std_error = std::sqrt(mv.variance_of_mean);
    return est;
}

EmpiricalCdf EmpiricalCdf::from_sample(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("empirical CDF needs a non-empty sample");
    for (double v : sample) {
        if (!std::isfinite(v)) throw std::invalid_argument("sample contains non-finite values");
    }
    std::sort(sample.begin(), sample.end());
    return EmpiricalCdf{std::move(sample)};
}

double EmpiricalCdf::operator()(double x) const {
    const auto it = std::upper_bound(values.begin(), values.end(), x);
    return static_cast<double>(it - values.begin()) / static_cast<double>(values.size());
}

double ks_statistic(const EmpiricalCdf& a, const EmpiricalCdf& b) {
    if (a.values.empty() || b.values.empty()) {
        throw std::invalid_argument("KS statistic needs non-empty samples");
    }
    const double na = static_cast<double>(a.values.size());
    const double nb = static_cast<double>(b.values.size());
    std::size_t i = 0, j = 0;
    double sup = 0.0;
    while (i < a.values.size() || j < b.values.size()) {
        double x;
        if (j >= b.values.size()) {
            x = a.values[i];
        } else if (i >= a.values.size()) {
            x = b.values[j];
        } else {
            x = std::min(a.values[i], b.values[j]);
        }
        while (i < a.values.size() && a.values[i] == x) ++i;
        while (j < b.values.size() && b.values[j] == x) ++j;
        sup = std::max(sup, std::abs(static_cast<double>(i) / na -
                                     static_cast<double>(j) / nb));
    }
    return sup;
}

}  // namespace tdist
