#include "tdist/dataset.hpp"

#include "tdist/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tdist {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_double(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_label(const std::string& cell, long long& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

void format_double(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

std::string to_string(Environment env) {
    return env == Environment::source ? "source" : "target";
}

bool LabeledDataset::was_reindexed() const {
    for (std::size_t i = 0; i < label_values.size(); ++i) {
        if (label_values[i] != static_cast<long long>(i)) return true;
    }
    return false;
}

std::vector<Eigen::Index> LabeledDataset::class_counts() const {
    std::vector<Eigen::Index> counts(label_values.size(), 0);
    for (ClassLabel y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
}

LabeledDataset make_dataset(Eigen::MatrixXd features,
                            const std::vector<long long>& raw_labels,
                            std::vector<std::string> feature_names,
                            Environment env) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    if (n < 1) throw std::invalid_argument("dataset is empty");
    if (static_cast<Eigen::Index>(raw_labels.size()) != n) {
        throw std::invalid_argument("label vector length does not match row count");
    }
    if (static_cast<Eigen::Index>(feature_names.size()) != d) {
        throw std::invalid_argument("feature name count does not match column count");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!std::isfinite(features(i, j))) {
                std::ostringstream msg;
                msg << "non-finite feature value at row " << (i + 1) << ", column '"
                    << feature_names[static_cast<std::size_t>(j)] << "'";
                throw std::invalid_argument(msg.str());
            }
        }
    }
    for (long long v : raw_labels) {
        if (v < 0) throw std::invalid_argument("label must be non-negative integer");
    }

    std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
    std::vector<long long> label_values(distinct.begin(), distinct.end());
    std::map<long long, ClassLabel> index_of;
    for (std::size_t i = 0; i < label_values.size(); ++i) {
        index_of[label_values[i]] = static_cast<ClassLabel>(i);
    }

    LabeledDataset ds;
    ds.features = std::move(features);
    ds.labels.reserve(static_cast<std::size_t>(n));
    for (long long v : raw_labels) ds.labels.push_back(index_of[v]);
    ds.feature_names = std::move(feature_names);
    ds.environment = env;
    ds.label_values = std::move(label_values);
    return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path,
                        const std::string& label_column,
                        Environment env,
                        const std::optional<std::vector<std::string>>& feature_columns) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty file: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_line(line);
    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[trim(header[i])] = i;

    auto it = col_index.find(label_column);
    if (it == col_index.end()) {
        throw std::invalid_argument("label column '" + label_column + "' not found in header");
    }
    const std::size_t label_idx = it->second;

    std::vector<std::size_t> feat_idx;
    std::vector<std::string> feat_names;
    if (feature_columns) {
        for (const std::string& name : *feature_columns) {
            auto fit = col_index.find(name);
            if (fit == col_index.end()) {
                throw std::invalid_argument("feature column '" + name + "' not found in header");
            }
            feat_idx.push_back(fit->second);
            feat_names.push_back(name);
        }
    } else {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == label_idx) continue;
            feat_idx.push_back(i);
            feat_names.push_back(trim(header[i]));
        }
    }
    if (feat_idx.empty()) throw std::invalid_argument("no feature columns selected");

    std::vector<std::vector<double>> rows;
    std::vector<long long> raw_labels;
    Eigen::Index bad_rows = 0;
    std::string first_bad;
    std::size_t line_no = 1;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << line_no << " has " << cells.size() << " cells, expected "
                << header.size();
            throw std::invalid_argument(msg.str());
        }

        long long label = 0;
        if (!parse_label(cells[label_idx], label)) {
            std::ostringstream msg;
            msg << "row " << line_no << ": label '" << trim(cells[label_idx])
                << "' is not an integer";
            throw std::invalid_argument(msg.str());
        }
        if (label < 0) throw std::invalid_argument("label must be non-negative integer");

        std::vector<double> row(feat_idx.size());
        bool finite = true;
        for (std::size_t j = 0; j < feat_idx.size(); ++j) {
            double v = 0.0;
            if (!parse_double(cells[feat_idx[j]], v)) {
                std::ostringstream msg;
                msg << "row " << line_no << ", column '" << feat_names[j]
                    << "': cell '" << trim(cells[feat_idx[j]]) << "' is not numeric";
                throw std::invalid_argument(msg.str());
            }
            if (!std::isfinite(v) && finite) {
                finite = false;
                std::ostringstream msg;
                msg << "row " << line_no << ", column '" << feat_names[j] << "'";
                if (first_bad.empty()) first_bad = msg.str();
            }
            row[j] = v;
        }
        if (!finite) {
            ++bad_rows;
            continue;  // counted and reported below; never silently kept
        }
        rows.push_back(std::move(row));
        raw_labels.push_back(label);
    }

    if (bad_rows > 0) {
        std::ostringstream msg;
        msg << bad_rows << " row(s) contain non-finite feature values (first at "
            << first_bad << ")";
        throw std::invalid_argument(msg.str());
    }
    if (rows.empty()) throw std::invalid_argument("no data rows in " + path.string());

    Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(feat_idx.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return make_dataset(std::move(features), raw_labels, std::move(feat_names), env);
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path,
              const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write file: " + path.string());

    std::string buf;
    for (const std::string& name : ds.feature_names) {
        buf += name;
        buf += ',';
    }
    buf += label_column;
    buf += '\n';
    for (Eigen::Index i = 0; i < ds.row_count(); ++i) {
        for (Eigen::Index j = 0; j < ds.dimension(); ++j) {
            format_double(buf, ds.features(i, j));
            buf += ',';
        }
        buf += std::to_string(ds.label_values[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]);
        buf += '\n';
    }
    out << buf;
}

std::map<ClassLabel, Eigen::MatrixXd> split_by_class(const LabeledDataset& ds) {
    std::map<ClassLabel, std::vector<Eigen::Index>> row_ids;
    for (Eigen::Index i = 0; i < ds.row_count(); ++i) {
        row_ids[ds.labels[static_cast<std::size_t>(i)]].push_back(i);
    }
    std::map<ClassLabel, Eigen::MatrixXd> out;
    for (const auto& [y, ids] : row_ids) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), ds.dimension());
        for (std::size_t r = 0; r < ids.size(); ++r) {
            m.row(static_cast<Eigen::Index>(r)) = ds.features.row(ids[r]);
        }
        out.emplace(y, std::move(m));
    }
    return out;
}

namespace {

// First m entries of a seeded Fisher-Yates shuffle of `ids`.
std::vector<Eigen::Index> draw_without_replacement(std::vector<Eigen::Index> ids,
                                                   Eigen::Index m, rng::Stream& stream) {
    const std::size_t n = ids.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(stream.below(n - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(m));
    return ids;
}

}  // namespace

LabeledDataset subsample(const LabeledDataset& ds, Eigen::Index m, std::uint64_t seed,
                         bool stratified) {
    const Eigen::Index n = ds.row_count();
    if (m < 1 || m > n) {
        throw std::invalid_argument("subsample size must satisfy 1 <= m <= n");
    }

    rng::Stream stream(rng::derive_seed(seed, {static_cast<std::uint64_t>(m),
                                               stratified ? 1ull : 0ull}));
    std::vector<Eigen::Index> selected;

    if (!stratified) {
        std::vector<Eigen::Index> ids(static_cast<std::size_t>(n));
        std::iota(ids.begin(), ids.end(), Eigen::Index{0});
        selected = draw_without_replacement(std::move(ids), m, stream);
    } else {
        const std::vector<Eigen::Index> counts = ds.class_counts();
        const int num_classes = ds.num_classes();
        for (int y = 0; y < num_classes; ++y) {
            if (counts[static_cast<std::size_t>(y)] == 0) {
                throw std::invalid_argument("stratified subsample: class " + std::to_string(y) +
                                            " has no rows");
            }
        }
        // Largest-remainder allocation; ties broken toward the smaller class index.
        std::vector<Eigen::Index> take(static_cast<std::size_t>(num_classes), 0);
        std::vector<std::pair<double, int>> remainders;
        Eigen::Index assigned = 0;
        for (int y = 0; y < num_classes; ++y) {
            const double exact = static_cast<double>(m) *
                                 static_cast<double>(counts[static_cast<std::size_t>(y)]) /
                                 static_cast<double>(n);
            take[static_cast<std::size_t>(y)] = static_cast<Eigen::Index>(std::floor(exact));
            assigned += take[static_cast<std::size_t>(y)];
            remainders.emplace_back(exact - std::floor(exact), y);
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < m; r = (r + 1) % remainders.size()) {
            const int y = remainders[r].second;
            if (take[static_cast<std::size_t>(y)] < counts[static_cast<std::size_t>(y)]) {
                take[static_cast<std::size_t>(y)]++;
                ++assigned;
            }
        }

        std::vector<std::vector<Eigen::Index>> class_rows(static_cast<std::size_t>(num_classes));
        for (Eigen::Index i = 0; i < n; ++i) {
            class_rows[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
        }
        for (int y = 0; y < num_classes; ++y) {
            auto picked = draw_without_replacement(class_rows[static_cast<std::size_t>(y)],
                                                   take[static_cast<std::size_t>(y)], stream);
            selected.insert(selected.end(), picked.begin(), picked.end());
        }
    }

    LabeledDataset out;
    out.features.resize(m, ds.dimension());
    out.labels.reserve(static_cast<std::size_t>(m));
    for (std::size_t r = 0; r < selected.size(); ++r) {
        out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(selected[r]);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(selected[r])]);
    }
    out.feature_names = ds.feature_names;
    out.environment = ds.environment;
    out.label_values = ds.label_values;
    return out;
}

}  // namespace tdist
