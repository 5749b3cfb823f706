#include "cmr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "cmr/rng.hpp"

namespace cmr {

double average_precision(const std::vector<bool>& relevance) {
    int relevant_seen = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < relevance.size(); ++r) {
        if (relevance[r]) {
            ++relevant_seen;
            precision_sum += static_cast<double>(relevant_seen) / static_cast<double>(r + 1);
        }
    }
    if (relevant_seen == 0) {
        throw NoRelevantItems("ranking contains no relevant item");
    }
    return precision_sum / static_cast<double>(relevant_seen);
}

MapResult map_score(const RetrievalIndex& index, const std::vector<MapQuery>& queries,
                    const QueryOptions& options) {
    // Validate up front: every query label must occur in its target modality.
    std::set<std::pair<std::string, Modality>> available;
    int n_image = 0, n_text = 0;
    for (const auto& item : index.items) {
        (item.modality == Modality::image ? n_image : n_text) += 1;
        if (!item.class_label.empty()) available.insert({item.class_label, item.modality});
    }
    std::string missing;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto& q = queries[qi];
        if (!available.count({q.label, q.target_modality})) {
            missing += (missing.empty() ? "" : ", ") + std::to_string(qi) + " (\"" + q.label +
                       "\" among " + to_string(q.target_modality) + " items)";
        }
    }
    if (!missing.empty()) {
        throw NoRelevantItems("queries with no relevant target item: " + missing);
    }

    std::map<std::string, std::string> label_by_id;
    for (const auto& item : index.items) label_by_id[item.item_id] = item.class_label;

    MapResult result;
    std::map<std::string, std::pair<double, int>> per_class_acc;
    for (const auto& q : queries) {
        const int candidates = q.target_modality == Modality::image ? n_image : n_text;
        const auto ranked = query(index, q.distribution, q.target_modality, candidates, options);
        std::vector<bool> relevance(ranked.size());
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            relevance[r] = label_by_id[ranked[r].item_id] == q.label;
        }
        const double ap = average_precision(relevance);
        result.per_query_ap.push_back(ap);
        auto& [sum, count] = per_class_acc[q.label];
        sum += ap;
        count += 1;
    }
    result.map = std::accumulate(result.per_query_ap.begin(), result.per_query_ap.end(), 0.0) /
                 static_cast<double>(result.per_query_ap.size());
    for (const auto& [label, acc] : per_class_acc) {
        result.per_class[label] = acc.first / static_cast<double>(acc.second);
    }
    return result;
}

namespace {

// AP of validation scores for one binary problem; ties broken by original
// index so the result is deterministic.
double score_ap(const Eigen::VectorXd& scores, const std::vector<bool>& positive) {
    std::vector<int> order(positive.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<bool> relevance(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        relevance[r] = positive[static_cast<std::size_t>(order[r])];
    }
    return average_precision(relevance);
}

}  // namespace

ProbeResult linear_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         int n_classes, const ProbeConfig& config) {
    const auto n = features.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw DimensionMismatch("linear_probe: one label per feature row required");
    }
    if (n_classes < 2) throw InvalidHyperparameter("linear_probe needs at least two classes");
    if (!features.allFinite()) throw InvalidHyperparameter("linear_probe: features must be finite");
    if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
        throw InvalidHyperparameter("validation_fraction must be in (0, 1)");
    }

    // Stratified split: per class, a seeded shuffle then a head/tail cut.
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= n_classes) {
            throw InvalidHyperparameter("label " + std::to_string(y) + " outside [0, n_classes)");
        }
        by_class[static_cast<std::size_t>(y)].push_back(static_cast<int>(i));
    }
    Rng rng(config.split_seed);
    std::vector<int> train_rows, val_rows;
    for (auto& rows : by_class) {
        rng.shuffle(rows);
        const auto n_val = static_cast<std::size_t>(
            config.validation_fraction * static_cast<double>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            (i < n_val ? val_rows : train_rows).push_back(rows[i]);
        }
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());

    std::vector<int> train_count(static_cast<std::size_t>(n_classes), 0);
    std::vector<int> val_count(static_cast<std::size_t>(n_classes), 0);
    for (int r : train_rows) ++train_count[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
    for (int r : val_rows) ++val_count[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
    for (int c = 0; c < n_classes; ++c) {
        if (train_count[static_cast<std::size_t>(c)] < 2 || val_count[static_cast<std::size_t>(c)] < 1) {
            throw DegenerateSplit("class " + std::to_string(c) +
                                  " needs >= 2 training and >= 1 validation examples");
        }
    }

    const auto d = features.cols();
    Eigen::MatrixXd x_train(train_rows.size(), d), x_val(val_rows.size(), d);
    for (std::size_t i = 0; i < train_rows.size(); ++i) x_train.row(static_cast<Eigen::Index>(i)) = features.row(train_rows[i]);
    for (std::size_t i = 0; i < val_rows.size(); ++i) x_val.row(static_cast<Eigen::Index>(i)) = features.row(val_rows[i]);

    const auto n_train = static_cast<double>(train_rows.size());
    ProbeResult result;
    result.per_class_ap.resize(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        Eigen::VectorXd y(x_train.rows());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            y[static_cast<Eigen::Index>(i)] =
                labels[static_cast<std::size_t>(train_rows[i])] == c ? 1.0 : 0.0;
        }
        std::vector<bool> val_positive(val_rows.size());
        for (std::size_t i = 0; i < val_rows.size(); ++i) {
            val_positive[i] = labels[static_cast<std::size_t>(val_rows[i])] == c;
        }

        double best_ap = 0.0;
        for (double lr : config.learning_rates) {
            for (double l2 : config.l2_penalties) {
                Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
                double b = 0.0;
                for (int epoch = 0; epoch < config.epochs; ++epoch) {
                    const Eigen::VectorXd p =
                        ((x_train * w).array() + b)
                            .unaryExpr([](double v) {
                                return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                                : std::exp(v) / (1.0 + std::exp(v));
                            })
                            .matrix();
                    const Eigen::VectorXd err = (p - y) / n_train;
                    const Eigen::VectorXd grad_w = x_train.transpose() * err + l2 * w;
                    const double grad_b = err.sum();
                    w -= lr * grad_w;
                    b -= lr * grad_b;
                }
                const Eigen::VectorXd scores = (x_val * w).array() + b;
                best_ap = std::max(best_ap, score_ap(scores, val_positive));
            }
        }
        result.per_class_ap[static_cast<std::size_t>(c)] = best_ap;
    }
    result.mean_ap =
        std::accumulate(result.per_class_ap.begin(), result.per_class_ap.end(), 0.0) /
        static_cast<double>(n_classes);
    return result;
}

void write_per_class_csv(const std::vector<std::pair<std::string, double>>& rows,
                         const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "class,AP\n";
    char line[128];
    for (const auto& [label, ap] : rows) {
        std::snprintf(line, sizeof(line), ",%.6f\n", ap);
        out << label << line;
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_summary_csv(double image_query_map, double text_query_map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    char line[128];
    out << "query_modality,MAP\n";
    std::snprintf(line, sizeof(line), "Image Query,%.6f\n", image_query_map);
    out << line;
    std::snprintf(line, sizeof(line), "Text Query,%.6f\n", text_query_map);
    out << line;
    std::snprintf(line, sizeof(line), "Average,%.6f\n", 0.5 * (image_query_map + text_query_map));
    out << line;
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cmr
