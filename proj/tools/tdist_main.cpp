// Command-line front end: every study as a subcommand with deterministic,
// scriptable output. Exit codes: 0 success, 2 flag/validation error, 1
// computation error.

#include "tdist/analysis.hpp"
#include "tdist/dataset.hpp"
#include "tdist/preprocess.hpp"
#include "tdist/serialize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;

// Flag-level problem discovered after CLI11 parsing; maps to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string source_path;
    std::string target_path;
    std::string label_column = "y";
    std::vector<std::string> feature_columns;

    std::string metric = "hellinger";
    int components = 2;
    std::int64_t mc_samples = 100000;
    std::uint64_t seed = 0;
    std::string reference = "mixture";

    int pca_dims = 0;  // 0 disables projection
    bool standardize = false;
    std::string load_pca_path;
    std::string save_pca_path;

    long window_length = 0;  // 0 disables windowing
    long window_hop = 1;
    std::string summaries = "mean,std";

    int restarts = 5;
    int max_iter = 200;
    double tol = 1e-6;
    double reg_floor_scale = 1e-6;

    std::string output_path;
    std::string format = "json";
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt, bool needs_source, bool needs_target) {
    if (needs_source) {
        cmd->add_option("--source", opt.source_path, "source environment CSV")->required();
    } else {
        cmd->add_option("--source", opt.source_path, "source environment CSV");
    }
    if (needs_target) {
        cmd->add_option("--target", opt.target_path, "target environment CSV")->required();
    }
    cmd->add_option("--label-col", opt.label_column, "label column name")->required();
    cmd->add_option("--features", opt.feature_columns,
                    "feature columns (default: all non-label columns)")
        ->delimiter(',');

    cmd->add_option("--metric", opt.metric, "distance metric")
        ->check(CLI::IsMember({"hellinger", "kl"}))
        ->capture_default_str();
    cmd->add_option("-K,--components", opt.components, "GMM components per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--mc-samples", opt.mc_samples, "Monte Carlo sample count")
        ->check(CLI::Range(std::int64_t{2}, std::int64_t{1} << 40))
        ->capture_default_str();
    cmd->add_option("--seed", opt.seed, "top-level RNG seed")->capture_default_str();
    cmd->add_option("--reference", opt.reference,
                    "reference measure for posterior distances")
        ->check(CLI::IsMember({"mixture", "source", "target"}))
        ->capture_default_str();

    cmd->add_option("--pca-dims", opt.pca_dims,
                    "project to this many principal components (0 = off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_flag("--standardize", opt.standardize, "standardize columns before PCA");
    cmd->add_option("--load-pca", opt.load_pca_path, "reuse a saved PCA projection (JSON)");
    cmd->add_option("--save-pca", opt.save_pca_path, "write the fitted PCA projection (JSON)");

    cmd->add_option("--window-length", opt.window_length,
                    "summarize raw rows in windows of this length (0 = off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--window-hop", opt.window_hop, "window stride")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--summaries", opt.summaries, "window summaries: mean,std")
        ->capture_default_str();

    cmd->add_option("--restarts", opt.restarts, "EM restarts")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-iter", opt.max_iter, "EM iteration cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--tol", opt.tol, "EM relative log-likelihood tolerance")
        ->capture_default_str();
    cmd->add_option("--reg-floor-scale", opt.reg_floor_scale,
                    "covariance eigenvalue floor, as a fraction of mean variance")
        ->capture_default_str();

    cmd->add_option("-o,--output", opt.output_path, "artifact path")->required();
    cmd->add_option("--format", opt.format, "artifact format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
}

tdist::Metric parse_metric(const std::string& s) {
    return s == "kl" ? tdist::Metric::kl : tdist::Metric::hellinger;
}

tdist::ReferenceMeasure parse_reference(const std::string& s) {
    if (s == "source") return tdist::ReferenceMeasure::source;
    if (s == "target") return tdist::ReferenceMeasure::target;
    return tdist::ReferenceMeasure::mixture;
}

tdist::FitConfig fit_config_of(const CommonOptions& opt) {
    tdist::FitConfig cfg;
    cfg.restarts = opt.restarts;
    cfg.max_iter = opt.max_iter;
    cfg.tol = opt.tol;
    cfg.reg_floor_scale = opt.reg_floor_scale;
    return cfg;
}

tdist::StudyConfig study_config_of(const CommonOptions& opt) {
    tdist::StudyConfig cfg;
    cfg.metric = parse_metric(opt.metric);
    cfg.components_per_class = opt.components;
    cfg.mc_samples = opt.mc_samples;
    cfg.seed = opt.seed;
    cfg.reference = parse_reference(opt.reference);
    cfg.gmm = fit_config_of(opt);
    return cfg;
}

std::vector<tdist::Summary> parse_summaries(const std::string& spec) {
    std::vector<tdist::Summary> out;
    std::string token;
    std::istringstream in(spec);
    while (std::getline(in, token, ',')) {
        if (token == "mean") {
            out.push_back(tdist::Summary::mean);
        } else if (token == "std") {
            out.push_back(tdist::Summary::std_dev);
        } else {
            throw ValidationError("--summaries: unknown summary '" + token +
                                  "' (expected mean and/or std)");
        }
    }
    if (out.empty()) throw ValidationError("--summaries: must name at least one summary");
    return out;
}

tdist::LabeledDataset load_dataset(const CommonOptions& opt, const std::string& path,
                                   tdist::Environment env, const char* flag) {
    std::optional<std::vector<std::string>> features;
    if (!opt.feature_columns.empty()) features = opt.feature_columns;
    try {
        tdist::LabeledDataset ds = tdist::load_csv(path, opt.label_column, env, features);
        if (ds.was_reindexed()) {
            std::cerr << "note: " << flag << " labels re-indexed:";
            for (std::size_t i = 0; i < ds.label_values.size(); ++i) {
                std::cerr << " " << ds.label_values[i] << "->" << i;
            }
            std::cerr << "\n";
        }
        return ds;
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string(flag) + ": " + e.what());
    }
}

tdist::LabeledDataset project_dataset(const tdist::LabeledDataset& ds,
                                      const tdist::PcaProjection& proj) {
    const Eigen::MatrixXd scores = tdist::apply_pca(proj, ds.features);
    std::vector<std::string> names;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        names.push_back("pc" + std::to_string(c + 1));
    }
    std::vector<long long> raw;
    raw.reserve(ds.labels.size());
    for (tdist::ClassLabel y : ds.labels) {
        raw.push_back(ds.label_values[static_cast<std::size_t>(y)]);
    }
    return tdist::make_dataset(scores, raw, std::move(names), ds.environment);
}

// Windowing then source-fitted PCA, applied identically to every dataset.
struct Preprocessor {
    std::optional<tdist::WindowConfig> window;
    std::optional<tdist::PcaProjection> pca;

    tdist::LabeledDataset operator()(const tdist::LabeledDataset& ds) const {
        tdist::LabeledDataset out = ds;
        if (window) out = tdist::window_summarize_labeled(out, *window);
        if (pca) out = project_dataset(out, *pca);
        return out;
    }
};

Preprocessor build_preprocessor(const CommonOptions& opt,
                                const tdist::LabeledDataset* source_for_fit) {
    Preprocessor pre;
    if (opt.window_length > 0) {
        tdist::WindowConfig wc;
        wc.window_length = opt.window_length;
        wc.hop = opt.window_hop;
        wc.summaries = parse_summaries(opt.summaries);
        pre.window = wc;
    }
    if (!opt.load_pca_path.empty()) {
        std::ifstream in(opt.load_pca_path);
        if (!in) throw ValidationError("--load-pca: cannot open " + opt.load_pca_path);
        json j;
        in >> j;
        pre.pca = tdist::pca_from_json(j);
    } else if (opt.pca_dims > 0) {
        if (source_for_fit == nullptr) {
            throw ValidationError(
                "--pca-dims: needs --source to fit on (or --load-pca with a saved projection)");
        }
        tdist::LabeledDataset fitting = *source_for_fit;
        if (pre.window) fitting = tdist::window_summarize_labeled(fitting, *pre.window);
        pre.pca = tdist::fit_pca(fitting.features, opt.pca_dims, opt.standardize);
    }
    if (pre.pca && !opt.save_pca_path.empty()) {
        std::ofstream out(opt.save_pca_path);
        if (!out) throw ValidationError("--save-pca: cannot write " + opt.save_pca_path);
        out << tdist::to_json(*pre.pca).dump(2) << "\n";
    }
    return pre;
}

json run_echo(const std::string& command, const CommonOptions& opt) {
    json j;
    j["command"] = command;
    j["source"] = opt.source_path;
    j["target"] = opt.target_path;
    j["label_col"] = opt.label_column;
    j["features"] = opt.feature_columns;
    j["metric"] = opt.metric;
    j["components"] = opt.components;
    j["mc_samples"] = opt.mc_samples;
    j["seed"] = opt.seed;
    j["reference"] = opt.reference;
    j["pca_dims"] = opt.pca_dims;
    j["standardize"] = opt.standardize;
    j["window_length"] = opt.window_length;
    j["window_hop"] = opt.window_hop;
    j["summaries"] = opt.summaries;
    j["restarts"] = opt.restarts;
    j["max_iter"] = opt.max_iter;
    j["tol"] = opt.tol;
    j["reg_floor_scale"] = opt.reg_floor_scale;
    j["format"] = opt.format;
    j["version"] = kVersion;
    return j;
}

void write_artifact(const CommonOptions& opt, const json& doc, const std::string& csv) {
    std::ofstream out(opt.output_path, std::ios::binary);
    if (!out) throw ValidationError("--output: cannot write " + opt.output_path);
    if (opt.format == "json") {
        out << doc.dump(2) << "\n";
    } else {
        out << csv;
    }
}

// Timestamps live here, never in the artifact, so identical configs produce
// byte-identical artifacts.
void write_sidecar(const CommonOptions& opt, double elapsed_seconds) {
    json j;
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%FT%TZ", std::gmtime(&now));
    j["finished_at"] = stamp;
    j["elapsed_seconds"] = elapsed_seconds;
    j["version"] = kVersion;
    if (const char* threads = std::getenv("TDIST_THREADS")) {
        j["threads"] = threads;
    }
    std::ofstream out(opt.output_path + ".meta.json");
    if (out) out << j.dump(2) << "\n";
}

// Prior spec: "empirical" or a comma list of probabilities.
tdist::Prior resolve_prior(const std::string& spec, const tdist::LabeledDataset& source) {
    if (spec == "empirical") return tdist::empirical_prior(source);
    std::vector<double> values;
    std::string token;
    std::istringstream in(spec);
    while (std::getline(in, token, ',')) {
        try {
            values.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw ValidationError("--prior: '" + token + "' is not a number");
        }
    }
    if (static_cast<int>(values.size()) != source.num_classes()) {
        throw ValidationError("--prior: got " + std::to_string(values.size()) +
                              " entries for " + std::to_string(source.num_classes()) +
                              " classes");
    }
    Eigen::VectorXd p(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) p(static_cast<Eigen::Index>(i)) = values[i];
    try {
        return tdist::make_prior(std::move(p));
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("--prior: ") + e.what());
    }
}

// Sweep value q fixes P(Y=0)=q; the remaining mass is split over the other
// classes in proportion to their empirical source shares.
std::vector<tdist::Prior> resolve_prior_sweep(const std::vector<double>& sweep,
                                              const tdist::LabeledDataset& source) {
    const tdist::Prior empirical = tdist::empirical_prior(source);
    const int num_classes = source.num_classes();
    if (num_classes < 2) {
        throw ValidationError("--prior-sweep: needs at least two classes");
    }
    std::vector<tdist::Prior> out;
    for (double q : sweep) {
        if (!(q > 0.0) || !(q < 1.0)) {
            throw ValidationError("--prior-sweep: values must lie strictly in (0, 1)");
        }
        Eigen::VectorXd p(num_classes);
        p(0) = q;
        const double rest = 1.0 - empirical.probabilities(0);
        for (int y = 1; y < num_classes; ++y) {
            p(y) = rest > 0.0 ? (1.0 - q) * empirical.probabilities(y) / rest
                              : (1.0 - q) / static_cast<double>(num_classes - 1);
        }
        out.push_back(tdist::make_prior(std::move(p)));
    }
    return out;
}

std::vector<Eigen::Index> parse_sizes(const std::vector<long long>& raw) {
    std::vector<Eigen::Index> sizes;
    for (long long s : raw) {
        if (s < 1) throw ValidationError("--sizes: entries must be positive");
        if (!sizes.empty() && s <= sizes.back()) {
            throw ValidationError("--sizes: entries must be strictly ascending");
        }
        sizes.push_back(static_cast<Eigen::Index>(s));
    }
    return sizes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transfer distance toolkit: class-conditional GMMs, Bayes-rule "
                 "posteriors, and Hellinger/KL drift estimates"};
    app.set_version_flag("--app-version", kVersion);
    app.require_subcommand(1);

    CommonOptions opt;
    std::string prior_spec = "empirical";
    std::vector<double> prior_sweep;
    std::vector<long long> sizes_raw;
    double threshold = 0.05;
    int repeats = 10;
    long long batch_size = 100;
    std::string save_models_prefix;

    CLI::App* report = app.add_subcommand(
        "report", "full transfer-distance report: likelihood, marginal, posterior distances");
    add_common_flags(report, opt, true, true);
    report->add_option("--prior", prior_spec, "'empirical' or comma list of probabilities")
        ->capture_default_str();
    report->add_option("--prior-sweep", prior_sweep,
                       "P(Y=0) values; one report per prior")
        ->delimiter(',');
    report->add_option("--save-models", save_models_prefix,
                       "write fitted model bundles to <prefix>.source.json / <prefix>.target.json");

    CLI::App* ks = app.add_subcommand(
        "ks-study", "per-feature KS statistic vs target sample size, with 5% settling rule");
    add_common_flags(ks, opt, true, true);
    ks->add_option("--sizes", sizes_raw, "ascending target sample sizes")
        ->delimiter(',')
        ->required();
    ks->add_option("--threshold", threshold, "relative-change settling threshold")
        ->capture_default_str();

    CLI::App* stability = app.add_subcommand(
        "stability", "distance between subsample-fitted and full-target models vs size");
    add_common_flags(stability, opt, false, true);
    stability->add_option("--sizes", sizes_raw, "ascending subsample sizes")
        ->delimiter(',')
        ->required();
    stability->add_option("--repeats", repeats, "subsample repeats per size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CLI::App* recall = app.add_subcommand(
        "recall", "per-class recall of the source classifier on the target vs distance");
    add_common_flags(recall, opt, true, true);
    recall->add_option("--prior", prior_spec, "'empirical' or comma list of probabilities")
        ->capture_default_str();

    CLI::App* batch = app.add_subcommand(
        "batch", "within-source vs cross-environment distances over data batches");
    add_common_flags(batch, opt, true, true);
    batch->add_option("--batch-size", batch_size, "rows per batch")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    const auto started = std::chrono::steady_clock::now();
    try {
        if (const char* threads = std::getenv("TDIST_THREADS")) {
            char* end = nullptr;
            const long v = std::strtol(threads, &end, 10);
            if (end == threads || *end != '\0' || v < 1) {
                throw ValidationError("TDIST_THREADS: must be a positive integer");
            }
        }

        json artifact;
        std::string csv;

        if (report->parsed()) {
            tdist::LabeledDataset src =
                load_dataset(opt, opt.source_path, tdist::Environment::source, "--source");
            tdist::LabeledDataset tgt =
                load_dataset(opt, opt.target_path, tdist::Environment::target, "--target");
            const Preprocessor pre = build_preprocessor(opt, &src);
            src = pre(src);
            tgt = pre(tgt);

            std::vector<tdist::Prior> priors;
            if (!prior_sweep.empty()) {
                priors = resolve_prior_sweep(prior_sweep, src);
            } else {
                priors.push_back(resolve_prior(prior_spec, src));
            }

            const auto reports = tdist::transfer_distance_report(src, tgt, priors,
                                                                 study_config_of(opt));
            artifact = tdist::report_artifact(reports);
            artifact["run"] = run_echo("report", opt);
            csv = tdist::report_csv(reports);

            if (!save_models_prefix.empty()) {
                const tdist::ClassConditionalModel src_model =
                    tdist::fit_class_conditional(src, priors.front(), opt.components,
                                                 [&] {
                                                     auto c = fit_config_of(opt);
                                                     c.seed = opt.seed;
                                                     return c;
                                                 }());
                const tdist::ClassConditionalModel tgt_model =
                    tdist::fit_class_conditional(tgt, priors.front(), opt.components,
                                                 [&] {
                                                     auto c = fit_config_of(opt);
                                                     c.seed = opt.seed;
                                                     return c;
                                                 }());
                std::ofstream s(save_models_prefix + ".source.json");
                s << tdist::model_bundle_to_json(src_model).dump(2) << "\n";
                std::ofstream t(save_models_prefix + ".target.json");
                t << tdist::model_bundle_to_json(tgt_model).dump(2) << "\n";
            }
        } else if (ks->parsed()) {
            tdist::LabeledDataset src =
                load_dataset(opt, opt.source_path, tdist::Environment::source, "--source");
            tdist::LabeledDataset tgt =
                load_dataset(opt, opt.target_path, tdist::Environment::target, "--target");
            const Preprocessor pre = build_preprocessor(opt, &src);
            src = pre(src);
            tgt = pre(tgt);
            if (threshold < 0.0) throw ValidationError("--threshold: must be >= 0");

            const auto curves = tdist::ks_convergence_study(tgt, parse_sizes(sizes_raw), src,
                                                            threshold, opt.seed);
            artifact = tdist::curves_artifact("ks_convergence_study", run_echo("ks-study", opt),
                                              curves);
            csv = tdist::curves_csv(curves);
        } else if (stability->parsed()) {
            tdist::LabeledDataset tgt =
                load_dataset(opt, opt.target_path, tdist::Environment::target, "--target");
            std::optional<tdist::LabeledDataset> src;
            if (!opt.source_path.empty()) {
                src = load_dataset(opt, opt.source_path, tdist::Environment::source, "--source");
            }
            const Preprocessor pre = build_preprocessor(opt, src ? &*src : nullptr);
            tgt = pre(tgt);

            tdist::StabilityConfig cfg;
            cfg.metric = parse_metric(opt.metric);
            cfg.components_per_class = opt.components;
            cfg.repeats = repeats;
            cfg.mc_samples = opt.mc_samples;
            cfg.seed = opt.seed;
            cfg.reference = parse_reference(opt.reference);
            cfg.gmm = fit_config_of(opt);

            const auto curves = tdist::subsample_stability_study(tgt, parse_sizes(sizes_raw), cfg);
            artifact = tdist::curves_artifact("subsample_stability_study",
                                              run_echo("stability", opt), curves);
            csv = tdist::curves_csv(curves);
        } else if (recall->parsed()) {
            tdist::LabeledDataset src =
                load_dataset(opt, opt.source_path, tdist::Environment::source, "--source");
            tdist::LabeledDataset tgt =
                load_dataset(opt, opt.target_path, tdist::Environment::target, "--target");
            const Preprocessor pre = build_preprocessor(opt, &src);
            src = pre(src);
            tgt = pre(tgt);

            const tdist::Prior prior = resolve_prior(prior_spec, src);
            tdist::FitConfig fit_cfg = fit_config_of(opt);
            fit_cfg.seed = opt.seed;
            const tdist::ClassConditionalModel src_model =
                tdist::fit_class_conditional(src, prior, opt.components, fit_cfg);
            const tdist::ClassConditionalModel tgt_model =
                tdist::fit_class_conditional(tgt, prior, opt.components, fit_cfg);

            const auto study = tdist::recall_vs_distance(src_model, tgt, tgt_model,
                                                         parse_metric(opt.metric),
                                                         opt.mc_samples, opt.seed);
            artifact = tdist::to_json(study);
            artifact["schema_version"] = 1;
            artifact["kind"] = "recall_vs_distance";
            artifact["run"] = run_echo("recall", opt);
            csv = tdist::recall_csv(study);
        } else if (batch->parsed()) {
            tdist::LabeledDataset src =
                load_dataset(opt, opt.source_path, tdist::Environment::source, "--source");
            tdist::LabeledDataset tgt =
                load_dataset(opt, opt.target_path, tdist::Environment::target, "--target");
            const Preprocessor pre = build_preprocessor(opt, &src);
            src = pre(src);
            tgt = pre(tgt);

            const auto study = tdist::batched_distance(src, tgt,
                                                       static_cast<Eigen::Index>(batch_size),
                                                       study_config_of(opt));
            artifact = tdist::to_json(study);
            artifact["schema_version"] = 1;
            artifact["kind"] = "batched_distance";
            artifact["run"] = run_echo("batch", opt);
            csv = tdist::batch_csv(study);
        }

        write_artifact(opt, artifact, csv);
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_sidecar(opt, elapsed);
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
