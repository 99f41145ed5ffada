#include "tdist/serialize.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace tdist {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

json matrix_rows_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.push_back(vector_to_json(m.row(i).transpose()));
    }
    return out;
}

Eigen::MatrixXd matrix_rows_from_json(const json& j) {
    if (j.empty()) throw std::invalid_argument("matrix JSON must not be empty");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

// Covariances are stored flat, row-major.
json covariance_to_json(const Eigen::MatrixXd& cov) {
    json out = json::array();
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index c = 0; c < cov.cols(); ++c) out.push_back(cov(i, c));
    }
    return out;
}

Eigen::MatrixXd covariance_from_json(const json& j, Eigen::Index dim) {
    if (static_cast<Eigen::Index>(j.size()) != dim * dim) {
        throw std::invalid_argument("covariance entry count does not match dimension");
    }
    Eigen::MatrixXd cov(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            cov(i, c) = j[static_cast<std::size_t>(i * dim + c)].get<double>();
        }
    }
    return cov;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

json to_json(const DistanceEstimate& est) {
    json j;
    j["method"] = to_string(est.method);
    j["value"] = est.value;
    j["raw_value"] = est.raw_value;
    j["clamped"] = est.clamped();
    j["std_error"] = est.std_error ? json(*est.std_error) : json(nullptr);
    j["mc_samples"] = est.mc_samples;
    j["seed"] = est.seed;
    j["floored_count"] = est.floored_count;
    return j;
}

json to_json(const Prior& prior) {
    json j;
    j["probabilities"] = vector_to_json(prior.probabilities);
    j["kind"] = prior.kind == PriorKind::empirical ? "empirical" : "user_specified";
    return j;
}

json to_json(const StudyConfig& cfg) {
    json j;
    j["metric"] = to_string(cfg.metric);
    j["components_per_class"] = cfg.components_per_class;
    j["mc_samples"] = cfg.mc_samples;
    j["seed"] = cfg.seed;
    j["reference"] = to_string(cfg.reference);
    j["gmm"] = {{"max_iter", cfg.gmm.max_iter},
                {"tol", cfg.gmm.tol},
                {"restarts", cfg.gmm.restarts},
                {"reg_floor_scale", cfg.gmm.reg_floor_scale}};
    return j;
}

json to_json(const GmmModel& model) {
    json j;
    j["dimension"] = model.dimension();
    json weights = json::array();
    json means = json::array();
    json covariances = json::array();
    for (const GaussianComponent& c : model.components()) {
        weights.push_back(c.weight);
        means.push_back(vector_to_json(c.mean));
        covariances.push_back(covariance_to_json(c.covariance));
    }
    j["weights"] = std::move(weights);
    j["means"] = std::move(means);
    j["covariances"] = std::move(covariances);

    const FitMetadata& meta = model.metadata();
    j["metadata"] = {{"seed", meta.seed},
                     {"restarts", meta.restarts},
                     {"best_restart", meta.best_restart},
                     {"iterations", meta.iterations},
                     {"final_log_likelihood", meta.final_log_likelihood},
                     {"converged", meta.converged},
                     {"reg_floor", meta.reg_floor},
                     {"warnings", meta.warnings}};
    return j;
}

GmmModel gmm_from_json(const json& j) {
    const Eigen::Index dim = j.at("dimension").get<Eigen::Index>();
    const json& weights = j.at("weights");
    const json& means = j.at("means");
    const json& covariances = j.at("covariances");
    if (weights.size() != means.size() || weights.size() != covariances.size()) {
        throw std::invalid_argument("mixture JSON has inconsistent component counts");
    }
    std::vector<GaussianComponent> comps;
    comps.reserve(weights.size());
    for (std::size_t c = 0; c < weights.size(); ++c) {
        GaussianComponent gc;
        gc.weight = weights[c].get<double>();
        gc.mean = vector_from_json(means[c]);
        gc.covariance = covariance_from_json(covariances[c], dim);
        comps.push_back(std::move(gc));
    }
    FitMetadata meta;
    if (j.contains("metadata")) {
        const json& m = j["metadata"];
        meta.seed = m.value("seed", std::uint64_t{0});
        meta.restarts = m.value("restarts", 0);
        meta.best_restart = m.value("best_restart", 0);
        meta.iterations = m.value("iterations", 0);
        meta.final_log_likelihood = m.value("final_log_likelihood", 0.0);
        meta.converged = m.value("converged", false);
        meta.reg_floor = m.value("reg_floor", 0.0);
        meta.warnings = m.value("warnings", std::vector<std::string>{});
    }
    return GmmModel(std::move(comps), std::move(meta));
}

json to_json(const PcaProjection& proj) {
    json j;
    j["schema_version"] = 1;
    j["center"] = vector_to_json(proj.center);
    j["scale"] = proj.scale ? vector_to_json(*proj.scale) : json(nullptr);
    j["components"] = matrix_rows_to_json(proj.components);
    j["explained_variance_ratio"] = vector_to_json(proj.explained_variance_ratio);
    return j;
}

PcaProjection pca_from_json(const json& j) {
    PcaProjection proj;
    proj.center = vector_from_json(j.at("center"));
    if (!j.at("scale").is_null()) proj.scale = vector_from_json(j["scale"]);
    proj.components = matrix_rows_from_json(j.at("components"));
    proj.explained_variance_ratio = vector_from_json(j.at("explained_variance_ratio"));
    return proj;
}

json to_json(const ConvergenceCurve& curve) {
    json j;
    json sizes = json::array();
    for (Eigen::Index s : curve.sizes) sizes.push_back(s);
    j["sizes"] = std::move(sizes);
    j["values"] = curve.values;
    j["spread"] = curve.spread;
    j["settled_at"] = curve.settled_at ? json(*curve.settled_at) : json(nullptr);
    j["criterion"] = "relative_change_below_" + format_number(curve.threshold * 100.0) + "pct";
    j["threshold"] = curve.threshold;
    return j;
}

json to_json(const TransferDistanceReport& report) {
    json j;
    j["prior"] = to_json(report.prior_used);
    json lik = json::object();
    for (const auto& [y, est] : report.per_class_likelihood) {
        lik[std::to_string(y)] = to_json(est);
    }
    j["per_class_likelihood"] = std::move(lik);
    j["marginal"] = to_json(report.marginal);
    json post = json::object();
    for (const auto& [y, est] : report.per_class_posterior) {
        post[std::to_string(y)] = to_json(est);
    }
    j["per_class_posterior"] = std::move(post);
    return j;
}

json to_json(const RecallStudy& study) {
    json rows = json::array();
    for (const RecallRow& row : study.rows) {
        rows.push_back({{"class", row.label},
                        {"support", row.support},
                        {"recall", row.recall},
                        {"likelihood_distance", to_json(row.likelihood_distance)}});
    }
    json j;
    j["rows"] = std::move(rows);
    j["rank_correlation"] =
        study.rank_correlation ? json(*study.rank_correlation) : json(nullptr);
    return j;
}

json to_json(const BatchedStudy& study) {
    const auto pairs = [](const std::vector<BatchPairDistance>& v) {
        json out = json::array();
        for (const BatchPairDistance& p : v) {
            out.push_back({{"first", p.first}, {"second", p.second}, {"value", p.value}});
        }
        return out;
    };
    json j;
    j["metric"] = to_string(study.metric);
    j["batch_size"] = study.batch_size;
    j["source_batches"] = study.source_batches;
    j["target_batches"] = study.target_batches;
    j["within_source_mean"] = study.within_source_mean;
    j["within_source_sd"] = study.within_source_sd;
    j["cross_mean"] = study.cross_mean;
    j["cross_sd"] = study.cross_sd;
    j["within_source"] = pairs(study.within_source);
    j["cross"] = pairs(study.cross);
    return j;
}

json model_bundle_to_json(const ClassConditionalModel& model) {
    json j;
    j["schema_version"] = 1;
    j["environment"] = to_string(model.environment());
    j["prior"] = to_json(model.prior());
    json likelihoods = json::array();
    for (int y = 0; y < model.num_classes(); ++y) {
        likelihoods.push_back(to_json(model.likelihood(y)));
    }
    j["likelihoods"] = std::move(likelihoods);
    return j;
}

ClassConditionalModel model_bundle_from_json(const json& j) {
    const json& lik = j.at("likelihoods");
    std::vector<GmmModel> models;
    models.reserve(lik.size());
    for (const json& g : lik) models.push_back(gmm_from_json(g));
    Prior prior = make_prior(vector_from_json(j.at("prior").at("probabilities")),
                             j.at("prior").at("kind") == "empirical" ? PriorKind::empirical
                                                                     : PriorKind::user_specified);
    const Environment env =
        j.at("environment") == "source" ? Environment::source : Environment::target;
    return ClassConditionalModel(std::move(models), std::move(prior), env);
}

json report_artifact(const std::vector<TransferDistanceReport>& reports) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "transfer_distance_report";
    if (!reports.empty()) j["config"] = to_json(reports.front().config);
    json list = json::array();
    for (const TransferDistanceReport& r : reports) list.push_back(to_json(r));
    j["reports"] = std::move(list);
    return j;
}

json curves_artifact(const std::string& kind, const json& config,
                     const std::map<std::string, ConvergenceCurve>& curves) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = kind;
    j["config"] = config;
    json c = json::object();
    for (const auto& [name, curve] : curves) c[name] = to_json(curve);
    j["curves"] = std::move(c);
    return j;
}

std::string report_csv(const std::vector<TransferDistanceReport>& reports) {
    if (reports.empty()) return "";
    const int num_classes =
        static_cast<int>(reports.front().per_class_likelihood.size());
    std::ostringstream out;

    if (num_classes <= 2) {
        // Binary layout: rows = distance kind, columns = prior.
        out << "distance";
        for (const TransferDistanceReport& r : reports) {
            out << ",P(Y=0)=" << format_number(r.prior_used.probabilities(0));
        }
        out << "\n";
        for (int y = 0; y < num_classes; ++y) {
            out << "delta_X|Y=" << y;
            for (const TransferDistanceReport& r : reports) {
                out << "," << format_number(r.per_class_likelihood.at(y).value);
            }
            out << "\n";
        }
        out << "delta_X";
        for (const TransferDistanceReport& r : reports) {
            out << "," << format_number(r.marginal.value);
        }
        out << "\n";
        for (int y = 0; y < num_classes; ++y) {
            out << "delta_Y=" << y << "|X";
            for (const TransferDistanceReport& r : reports) {
                out << "," << format_number(r.per_class_posterior.at(y).value);
            }
            out << "\n";
        }
        return out.str();
    }

    // Multi-class layout: rows = class, likelihood plus one posterior column
    // per prior (likelihood distances do not depend on the prior).
    out << "class,likelihood_delta";
    for (const TransferDistanceReport& r : reports) {
        out << ",posterior_delta[P(Y=0)=" << format_number(r.prior_used.probabilities(0)) << "]";
    }
    out << "\n";
    for (int y = 0; y < num_classes; ++y) {
        out << y << "," << format_number(reports.front().per_class_likelihood.at(y).value);
        for (const TransferDistanceReport& r : reports) {
            out << "," << format_number(r.per_class_posterior.at(y).value);
        }
        out << "\n";
    }
    out << "marginal,";
    for (const TransferDistanceReport& r : reports) {
        out << "," << format_number(r.marginal.value);
    }
    out << "\n";
    return out.str();
}

std::string curves_csv(const std::map<std::string, ConvergenceCurve>& curves) {
    std::ostringstream out;
    out << "curve,size,value,spread\n";
    for (const auto& [name, curve] : curves) {
        for (std::size_t i = 0; i < curve.sizes.size(); ++i) {
            out << name << "," << curve.sizes[i] << "," << format_number(curve.values[i]) << ",";
            if (i < curve.spread.size()) out << format_number(curve.spread[i]);
            out << "\n";
        }
    }
    return out.str();
}

std::string recall_csv(const RecallStudy& study) {
    std::ostringstream out;
    out << "class,support,recall,likelihood_delta,rank_correlation\n";
    const std::string corr =
        study.rank_correlation ? format_number(*study.rank_correlation) : std::string("n/a");
    for (const RecallRow& row : study.rows) {
        out << row.label << "," << row.support << "," << format_number(row.recall) << ","
            << format_number(row.likelihood_distance.value) << "," << corr << "\n";
    }
    return out.str();
}

std::string batch_csv(const BatchedStudy& study) {
    std::ostringstream out;
    out << "kind,first,second,value\n";
    out << "within_source_mean,,," << format_number(study.within_source_mean) << "\n";
    out << "within_source_sd,,," << format_number(study.within_source_sd) << "\n";
    out << "cross_mean,,," << format_number(study.cross_mean) << "\n";
    out << "cross_sd,,," << format_number(study.cross_sd) << "\n";
    for (const BatchPairDistance& p : study.within_source) {
        out << "within_source," << p.first << "," << p.second << "," << format_number(p.value)
            << "\n";
    }
    for (const BatchPairDistance& p : study.cross) {
        out << "cross," << p.first << "," << p.second << "," << format_number(p.value) << "\n";
    }
    return out.str();
}

}  // namespace tdist
