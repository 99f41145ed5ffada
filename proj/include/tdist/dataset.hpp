#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdist {

using ClassLabel = int;

enum class Environment { source, target };

std::string to_string(Environment env);

/// Labeled tabular data for one environment. Immutable after construction;
/// labels are contiguous indices 0..num_classes()-1, with the original label
/// values kept in label_values so re-indexing is auditable.
struct LabeledDataset {
    Eigen::MatrixXd features;               // n x d
    std::vector<ClassLabel> labels;         // n entries, values in [0, num_classes)
    std::vector<std::string> feature_names; // d entries
    Environment environment = Environment::source;
    std::vector<long long> label_values;    // class index -> original label value

    Eigen::Index row_count() const { return features.rows(); }
    Eigen::Index dimension() const { return features.cols(); }
    int num_classes() const { return static_cast<int>(label_values.size()); }

    // True when the input labels were not already 0..|Y|-1.
    bool was_reindexed() const;

    std::vector<Eigen::Index> class_counts() const;
};

// Validates and builds a dataset from raw (possibly non-contiguous) labels.
// Throws std::invalid_argument on empty data, non-finite features, negative
// labels, or size mismatches.
LabeledDataset make_dataset(Eigen::MatrixXd features,
                            const std::vector<long long>& raw_labels,
                            std::vector<std::string> feature_names,
                            Environment env);

// CSV ingestion: header row required, '.' decimal point, comma separator.
// Rows with non-finite feature values are a hard error carrying the count of
// offending rows and the first offending cell.
LabeledDataset load_csv(const std::filesystem::path& path,
                        const std::string& label_column,
                        Environment env,
                        const std::optional<std::vector<std::string>>& feature_columns = std::nullopt);

// Writes features with shortest round-trip formatting and the original label
// values, so save followed by load reproduces the matrix bit for bit.
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path,
              const std::string& label_column = "y");

// Groups rows by class, preserving within-class row order.
std::map<ClassLabel, Eigen::MatrixXd> split_by_class(const LabeledDataset& ds);

// Draws m rows without replacement; pure function of (ds, m, seed, stratified).
// Stratified draws match parent class proportions within rounding.
LabeledDataset subsample(const LabeledDataset& ds, Eigen::Index m, std::uint64_t seed,
                         bool stratified);

}  // namespace tdist
