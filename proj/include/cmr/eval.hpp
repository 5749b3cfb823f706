#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "cmr/retrieval.hpp"

namespace cmr {

// Non-interpolated average precision over an untruncated ranking: mean over
// relevant ranks r of (relevant within top r) / r.
double average_precision(const std::vector<bool>& relevance);

struct MapQuery {
    TopicDistribution distribution;
    std::string label;
    Modality target_modality = Modality::image;
};

struct MapResult {
    double map = 0.0;
    std::map<std::string, double> per_class;
    std::vector<double> per_query_ap;
};

// Ranks the full opposite-modality list per query; relevance is label
// equality. Queries whose label never occurs in the target modality are
// collected into one NoRelevantItems error.
MapResult map_score(const RetrievalIndex& index, const std::vector<MapQuery>& queries,
                    const QueryOptions& options = {});

struct ProbeConfig {
    int epochs = 200;
    std::vector<double> learning_rates = {0.1, 0.01};
    std::vector<double> l2_penalties = {1e-4, 1e-3, 1e-2};
    double validation_fraction = 0.5;
    std::uint64_t split_seed = 0;
};

struct ProbeResult {
    std::vector<double> per_class_ap;
    double mean_ap = 0.0;
};

// One-vs-all logistic classifiers trained by full-batch gradient descent
// with an L2 penalty; per class, the (lr, l2) grid point with the best
// validation AP is reported. The split is stratified by class.
ProbeResult linear_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         int n_classes, const ProbeConfig& config);

// Report files: per-class AP table and the (Image Query, Text Query,
// Average) MAP summary.
void write_per_class_csv(const std::vector<std::pair<std::string, double>>& rows,
                         const std::string& path);
void write_summary_csv(double image_query_map, double text_query_map, const std::string& path);

}  // namespace cmr
