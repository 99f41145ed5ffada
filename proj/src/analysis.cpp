#include "tdist/analysis.hpp"

#include "tdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tdist {

namespace {

// Seed-stream tags; every study cell derives its stream from the top-level
// seed and its own coordinates so schedules cannot change results.
constexpr std::uint64_t kTagLikelihoodDistance = 0x3101;
constexpr std::uint64_t kTagMarginalDistance = 0x3102;
constexpr std::uint64_t kTagPosteriorDistance = 0x3103;
constexpr std::uint64_t kTagKsPermutation = 0x3201;
constexpr std::uint64_t kTagStabilityFullFit = 0x3301;
constexpr std::uint64_t kTagStabilitySubsample = 0x3302;
constexpr std::uint64_t kTagStabilitySubFit = 0x3303;
constexpr std::uint64_t kTagStabilityDistance = 0x3304;
constexpr std::uint64_t kTagRecallDistance = 0x3401;
constexpr std::uint64_t kTagBatchPermutation = 0x3501;
constexpr std::uint64_t kTagBatchFit = 0x3502;
constexpr std::uint64_t kTagBatchDistance = 0x3503;

void check_shared_alphabet(const LabeledDataset& src, const LabeledDataset& tgt) {
    if (src.dimension() != tgt.dimension()) {
        throw std::invalid_argument("source and target disagree on feature dimension");
    }
    if (src.num_classes() != tgt.num_classes()) {
        throw std::invalid_argument("source and target disagree on label alphabet size");
    }
    if (src.label_values != tgt.label_values) {
        throw std::invalid_argument("source and target disagree on label values");
    }
}

void check_sizes(const std::vector<Eigen::Index>& sizes, Eigen::Index available,
                 std::size_t min_count) {
    if (sizes.size() < min_count) {
        throw std::invalid_argument("need at least " + std::to_string(min_count) + " sizes");
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 1) throw std::invalid_argument("sizes must be positive");
        if (i > 0 && sizes[i] <= sizes[i - 1]) {
            throw std::invalid_argument("sizes must be strictly ascending");
        }
    }
    if (sizes.back() > available) {
        throw std::invalid_argument("largest size exceeds available rows");
    }
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Average ranks, ties sharing the mean rank.
std::vector<double> ranks_of(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) return std::nullopt;
    const std::vector<double> ra = ranks_of(a);
    const std::vector<double> rb = ranks_of(b);
    const auto [ma, sa] = mean_sd(ra);
    const auto [mb, sb] = mean_sd(rb);
    if (sa == 0.0 || sb == 0.0) return std::nullopt;
    double cov = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) cov += (ra[i] - ma) * (rb[i] - mb);
    cov /= static_cast<double>(ra.size() - 1);
    return cov / (sa * sb);
}

}  // namespace

std::optional<Eigen::Index> settled_size(const std::vector<Eigen::Index>& sizes,
                                         const std::vector<double>& values, double threshold) {
    if (sizes.size() != values.size()) {
        throw std::invalid_argument("sizes and values lengths differ");
    }
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double diff = std::abs(values[i] - values[i - 1]);
        if (diff == 0.0) return sizes[i];
        const double denom = std::max(std::abs(values[i - 1]), 1e-9);
        if (diff / denom < threshold) return sizes[i];
    }
    return std::nullopt;
}

std::vector<TransferDistanceReport> transfer_distance_report(
    const LabeledDataset& src, const LabeledDataset& tgt, const std::vector<Prior>& priors,
    const StudyConfig& cfg) {
    check_shared_alphabet(src, tgt);
    if (priors.empty()) throw std::invalid_argument("need at least one prior");
    for (const Prior& p : priors) {
        if (p.num_classes() != src.num_classes()) {
            throw std::invalid_argument("prior length does not match label alphabet");
        }
    }

    FitConfig gmm_cfg = cfg.gmm;
    gmm_cfg.seed = cfg.seed;
    const std::vector<GmmModel> src_lik =
        fit_per_class_likelihoods(src, cfg.components_per_class, gmm_cfg);
    const std::vector<GmmModel> tgt_lik =
        fit_per_class_likelihoods(tgt, cfg.components_per_class, gmm_cfg);

    // Likelihood distances are prior-free: computed once, shared by every report.
    std::map<ClassLabel, DistanceEstimate> likelihood_distances;
    for (int y = 0; y < src.num_classes(); ++y) {
        const std::uint64_t s =
            rng::derive_seed(cfg.seed, {kTagLikelihoodDistance, static_cast<std::uint64_t>(y)});
        likelihood_distances.emplace(
            y, estimate_distance(cfg.metric, src_lik[static_cast<std::size_t>(y)],
                                 tgt_lik[static_cast<std::size_t>(y)], cfg.mc_samples, s));
    }

    const std::uint64_t marginal_seed = rng::derive_seed(cfg.seed, {kTagMarginalDistance});
    std::vector<TransferDistanceReport> reports;
    reports.reserve(priors.size());
    for (const Prior& prior : priors) {
        ClassConditionalModel src_model(src_lik, prior, src.environment);
        ClassConditionalModel tgt_model(tgt_lik, prior, tgt.environment);

        TransferDistanceReport report;
        report.per_class_likelihood = likelihood_distances;
        report.marginal = estimate_distance(cfg.metric, src_model.marginal_gmm(),
                                            tgt_model.marginal_gmm(), cfg.mc_samples,
                                            marginal_seed);
        for (int y = 0; y < src.num_classes(); ++y) {
            const std::uint64_t s = rng::derive_seed(
                cfg.seed, {kTagPosteriorDistance, static_cast<std::uint64_t>(y)});
            report.per_class_posterior.emplace(
                y, posterior_distance(src_model, tgt_model, y, cfg.metric, cfg.mc_samples, s,
                                      cfg.reference));
        }
        report.prior_used = prior;
        report.config = cfg;
        reports.push_back(std::move(report));
    }
    return reports;
}

std::map<std::string, ConvergenceCurve> ks_convergence_study(
    const LabeledDataset& target, const std::vector<Eigen::Index>& sizes,
    const LabeledDataset& source, double threshold, std::uint64_t seed) {
    if (source.dimension() != target.dimension()) {
        throw std::invalid_argument("source and target disagree on feature dimension");
    }
    if (threshold < 0.0) throw std::invalid_argument("threshold must be >= 0");
    check_sizes(sizes, target.row_count(), 2);

    // One permutation; prefixes give nested "successive sample size" draws.
    const LabeledDataset shuffled =
        subsample(target, target.row_count(),
                  rng::derive_seed(seed, {kTagKsPermutation}), /*stratified=*/false);

    std::map<std::string, ConvergenceCurve> out;
    for (Eigen::Index j = 0; j < source.dimension(); ++j) {
        std::vector<double> src_col(source.features.col(j).data(),
                                    source.features.col(j).data() + source.row_count());
        const EmpiricalCdf src_cdf = EmpiricalCdf::from_sample(std::move(src_col));

        ConvergenceCurve curve;
        curve.sizes = sizes;
        curve.threshold = threshold;
        for (Eigen::Index size : sizes) {
            std::vector<double> prefix(static_cast<std::size_t>(size));
            for (Eigen::Index i = 0; i < size; ++i) prefix[static_cast<std::size_t>(i)] = shuffled.features(i, j);
            curve.values.push_back(
                ks_statistic(src_cdf, EmpiricalCdf::from_sample(std::move(prefix))));
        }
        curve.settled_at = settled_size(curve.sizes, curve.values, threshold);
        out.emplace(target.feature_names[static_cast<std::size_t>(j)], std::move(curve));
    }
    return out;
}

std::map<std::string, ConvergenceCurve> subsample_stability_study(
    const LabeledDataset& target, const std::vector<Eigen::Index>& sizes,
    const StabilityConfig& cfg) {
    if (cfg.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    check_sizes(sizes, target.row_count(), 1);

    const Prior prior = empirical_prior(target);
    FitConfig full_cfg = cfg.gmm;
    full_cfg.seed = rng::derive_seed(cfg.seed, {kTagStabilityFullFit});
    const ClassConditionalModel full_model =
        fit_class_conditional(target, prior, cfg.components_per_class, full_cfg);
    const GmmModel full_marginal = full_model.marginal_gmm();

    const int num_classes = target.num_classes();
    std::vector<std::string> keys;
    keys.push_back("delta_X");
    for (int y = 0; y < num_classes; ++y) keys.push_back("delta_X|Y=" + std::to_string(y));
    for (int y = 0; y < num_classes; ++y) keys.push_back("delta_Y=" + std::to_string(y) + "|X");

    std::map<std::string, std::vector<std::vector<double>>> values;  // key -> per size -> repeats
    for (const std::string& k : keys) {
        values[k].resize(sizes.size());
    }

    for (std::size_t si = 0; si < sizes.size(); ++si) {
        for (int r = 0; r < cfg.repeats; ++r) {
            const std::uint64_t cell[2] = {static_cast<std::uint64_t>(si),
                                           static_cast<std::uint64_t>(r)};
            const LabeledDataset sub =
                subsample(target, sizes[si],
                          rng::derive_seed(cfg.seed, {kTagStabilitySubsample, cell[0], cell[1]}),
                          /*stratified=*/true);
            FitConfig sub_cfg = cfg.gmm;
            sub_cfg.seed = rng::derive_seed(cfg.seed, {kTagStabilitySubFit, cell[0], cell[1]});
            const ClassConditionalModel sub_model =
                fit_class_conditional(sub, prior, cfg.components_per_class, sub_cfg);

            const auto dist_seed = [&](std::uint64_t kind) {
                return rng::derive_seed(cfg.seed, {kTagStabilityDistance, kind, cell[0], cell[1]});
            };
            values["delta_X"][si].push_back(
                estimate_distance(cfg.metric, sub_model.marginal_gmm(), full_marginal,
                                  cfg.mc_samples, dist_seed(0))
                    .value);
            for (int y = 0; y < num_classes; ++y) {
                values["delta_X|Y=" + std::to_string(y)][si].push_back(
                    estimate_distance(cfg.metric, sub_model.likelihood(y),
                                      full_model.likelihood(y), cfg.mc_samples,
                                      dist_seed(1 + static_cast<std::uint64_t>(y)))
                        .value);
                values["delta_Y=" + std::to_string(y) + "|X"][si].push_back(
                    posterior_distance(sub_model, full_model, y, cfg.metric, cfg.mc_samples,
                                       dist_seed(1 + static_cast<std::uint64_t>(num_classes + y)),
                                       cfg.reference)
                        .value);
            }
        }
    }

    std::map<std::string, ConvergenceCurve> out;
    for (const std::string& k : keys) {
        ConvergenceCurve curve;
        curve.sizes = sizes;
        curve.threshold = 0.05;
        for (std::size_t si = 0; si < sizes.size(); ++si) {
            const auto [mean, sd] = mean_sd(values[k][si]);
            curve.values.push_back(mean);
            curve.spread.push_back(sd);
        }
        curve.settled_at = settled_size(curve.sizes, curve.values, curve.threshold);
        out.emplace(k, std::move(curve));
    }
    return out;
}

RecallStudy recall_vs_distance(const ClassConditionalModel& src_model,
                               const LabeledDataset& tgt_ds,
                               const ClassConditionalModel& tgt_model, Metric metric,
                               std::int64_t m, std::uint64_t seed) {
    if (src_model.num_classes() != tgt_model.num_classes()) {
        throw std::invalid_argument("models disagree on label alphabet");
    }
    if (src_model.dimension() != tgt_model.dimension() ||
        src_model.dimension() != tgt_ds.dimension()) {
        throw std::invalid_argument("dimension mismatch between models and data");
    }
    if (tgt_ds.num_classes() != src_model.num_classes()) {
        throw std::invalid_argument("target labels do not match the models' alphabet");
    }

    const int num_classes = src_model.num_classes();
    std::vector<Eigen::Index> support(static_cast<std::size_t>(num_classes), 0);
    std::vector<Eigen::Index> correct(static_cast<std::size_t>(num_classes), 0);
    for (Eigen::Index i = 0; i < tgt_ds.row_count(); ++i) {
        const ClassLabel truth = tgt_ds.labels[static_cast<std::size_t>(i)];
        support[static_cast<std::size_t>(truth)]++;
        if (src_model.classify(tgt_ds.features.row(i).transpose()) == truth) {
            correct[static_cast<std::size_t>(truth)]++;
        }
    }

    RecallStudy study;
    std::vector<double> recalls, distances;
    for (int y = 0; y < num_classes; ++y) {
        if (support[static_cast<std::size_t>(y)] == 0) {
            throw std::invalid_argument("class " + std::to_string(y) + " absent from target");
        }
        RecallRow row;
        row.label = y;
        row.support = support[static_cast<std::size_t>(y)];
        row.recall = static_cast<double>(correct[static_cast<std::size_t>(y)]) /
                     static_cast<double>(support[static_cast<std::size_t>(y)]);
        row.likelihood_distance = estimate_distance(
            metric, src_model.likelihood(y), tgt_model.likelihood(y), m,
            rng::derive_seed(seed, {kTagRecallDistance, static_cast<std::uint64_t>(y)}));
        recalls.push_back(row.recall);
        distances.push_back(row.likelihood_distance.value);
        study.rows.push_back(std::move(row));
    }
    study.rank_correlation = spearman(recalls, distances);
    return study;
}

BatchedStudy batched_distance(const LabeledDataset& src, const LabeledDataset& tgt,
                              Eigen::Index batch_size, const StudyConfig& cfg) {
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (src.dimension() != tgt.dimension()) {
        throw std::invalid_argument("source and target disagree on feature dimension");
    }
    if (src.row_count() < 2 * batch_size || tgt.row_count() < 2 * batch_size) {
        throw std::invalid_argument("each environment needs at least 2 * batch_size rows");
    }
    if (batch_size < cfg.components_per_class) {
        throw std::invalid_argument("batch_size must be at least the component count");
    }

    const auto make_batches = [&](const LabeledDataset& ds, std::uint64_t env_tag) {
        const LabeledDataset shuffled =
            subsample(ds, ds.row_count(),
                      rng::derive_seed(cfg.seed, {kTagBatchPermutation, env_tag}),
                      /*stratified=*/false);
        const int count = static_cast<int>(ds.row_count() / batch_size);
        std::vector<GmmModel> models;
        models.reserve(static_cast<std::size_t>(count));
        for (int b = 0; b < count; ++b) {
            FitConfig fit_cfg = cfg.gmm;
            fit_cfg.seed = rng::derive_seed(cfg.seed,
                                            {kTagBatchFit, env_tag, static_cast<std::uint64_t>(b)});
            models.push_back(fit_em(
                shuffled.features.middleRows(static_cast<Eigen::Index>(b) * batch_size, batch_size),
                cfg.components_per_class, fit_cfg));
        }
        return models;
    };

    const std::vector<GmmModel> src_models = make_batches(src, 0);
    const std::vector<GmmModel> tgt_models = make_batches(tgt, 1);

    BatchedStudy study;
    study.batch_size = batch_size;
    study.source_batches = static_cast<int>(src_models.size());
    study.target_batches = static_cast<int>(tgt_models.size());
    study.metric = cfg.metric;

    const auto pair_distance = [&](const GmmModel& a, const GmmModel& b, std::uint64_t tag,
                                   std::uint64_t i, std::uint64_t j) {
        return estimate_distance(cfg.metric, a, b, cfg.mc_samples,
                                 rng::derive_seed(cfg.seed, {kTagBatchDistance, tag, i, j}))
            .value;
    };

    std::vector<double> within_values, cross_values;
    for (int i = 0; i < study.source_batches; ++i) {
        // Hellinger is symmetric (exactly, under the shared-seed estimator),
        // so unordered pairs suffice; KL needs both directions.
        const int j_begin = cfg.metric == Metric::hellinger ? i + 1 : 0;
        for (int j = j_begin; j < study.source_batches; ++j) {
            if (j == i) continue;
            const double v =
                pair_distance(src_models[static_cast<std::size_t>(i)],
                              src_models[static_cast<std::size_t>(j)], 0,
                              static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
            study.within_source.push_back({i, j, v});
            within_values.push_back(v);
        }
    }
    for (int i = 0; i < study.source_batches; ++i) {
        for (int j = 0; j < study.target_batches; ++j) {
            const double v =
                pair_distance(src_models[static_cast<std::size_t>(i)],
                              tgt_models[static_cast<std::size_t>(j)], 1,
                              static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
            study.cross.push_back({i, j, v});
            cross_values.push_back(v);
        }
    }

    std::tie(study.within_source_mean, study.within_source_sd) = mean_sd(within_values);
    std::tie(study.cross_mean, study.cross_sd) = mean_sd(cross_values);
    return study;
}

}  // namespace tdist
