#pragma once

#include "tdist/analysis.hpp"
#include "tdist/dataset.hpp"
#include "tdist/divergence.hpp"
#include "tdist/gmm.hpp"
#include "tdist/preprocess.hpp"
#include "tdist/probmodel.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace tdist {

// JSON codecs for the persisted artifacts. Field layouts are stable and
// carry a schema_version where a document is meant to be reloaded.

nlohmann::json to_json(const DistanceEstimate& est);
nlohmann::json to_json(const Prior& prior);
nlohmann::json to_json(const StudyConfig& cfg);
nlohmann::json to_json(const GmmModel& model);
nlohmann::json to_json(const PcaProjection& proj);
nlohmann::json to_json(const ConvergenceCurve& curve);
nlohmann::json to_json(const TransferDistanceReport& report);
nlohmann::json to_json(const RecallStudy& study);
nlohmann::json to_json(const BatchedStudy& study);

GmmModel gmm_from_json(const nlohmann::json& j);
PcaProjection pca_from_json(const nlohmann::json& j);

// Model bundle: per-class likelihood GMMs plus the prior, one document.
nlohmann::json model_bundle_to_json(const ClassConditionalModel& model);
ClassConditionalModel model_bundle_from_json(const nlohmann::json& j);

// Whole-run artifacts (the documents the CLI writes).
nlohmann::json report_artifact(const std::vector<TransferDistanceReport>& reports);
nlohmann::json curves_artifact(const std::string& kind, const nlohmann::json& config,
                               const std::map<std::string, ConvergenceCurve>& curves);

// CSV renderings. Reports follow the binary table layout (rows = distance
// kind, columns = prior) or, for more than two classes, the per-class layout
// (rows = class, columns = likelihood/posterior distances).
std::string report_csv(const std::vector<TransferDistanceReport>& reports);
std::string curves_csv(const std::map<std::string, ConvergenceCurve>& curves);
std::string recall_csv(const RecallStudy& study);
std::string batch_csv(const BatchedStudy& study);

// Shortest round-trip decimal rendering, locale-independent.
std::string format_number(double v);

}  // namespace tdist
