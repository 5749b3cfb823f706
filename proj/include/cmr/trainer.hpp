#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cmr/corpus.hpp"
#include "cmr/lda.hpp"
#include "cmr/nnet.hpp"

namespace cmr {

// One training example: image features with the article-level (global) and
// caption-level (local) topic targets.
struct TrainingTriple {
    Eigen::VectorXd features;
    TopicDistribution target_global;
    TopicDistribution target_local;
};

struct TripleParams {
    int sweeps = defaults::infer_sweeps;
    int burn_in = defaults::infer_burn_in;
    std::uint64_t base_seed = 0;
    int threads = 1;
};

// One triple per image. The global target is inferred once per article and
// shared by all of its images; the local target is inferred from the image's
// caption with a seed derived from the caption's content hash, so identical
// captions map to identical targets.
std::vector<TrainingTriple> build_triples(const std::vector<RawDocument>& corpus,
                                          const TopicModel& model, const Vocabulary& vocab,
                                          const TripleParams& params);

struct TrainConfig {
    int epochs = 0;
    int batch_size = defaults::batch_size;
    std::uint64_t shuffle_seed = 0;
    std::string curve_csv_path;  // per-iteration log; empty = no log
};

struct TrainHistory {
    std::vector<double> epoch_loss;         // mean total loss per epoch
    std::vector<double> epoch_loss_global;  // global-head component
    std::vector<double> epoch_loss_local;   // local-head component
};

// Shuffled mini-batch SGD over the triples. Deterministic for fixed seeds.
TrainHistory train(Network& net, const std::vector<TrainingTriple>& triples, OptimizerState& opt,
                   const TrainConfig& config);

// Each head's outputs renormalized to sum 1, yielding KL-comparable
// distributions.
std::pair<TopicDistribution, TopicDistribution> embed_image(const Network& net,
                                                            const Eigen::VectorXd& features);

// Resolves an image's feature vector: inline features, a whitespace-
// separated text file, or a binary portable pixmap when the path ends in
// ".ppm".
Eigen::VectorXd resolve_features(const ImageRef& image);

// Binary triples cache tagged with the topic-model fingerprint.
void save_triples(const std::vector<TrainingTriple>& triples, std::uint64_t model_fingerprint,
                  const std::string& path);
struct TripleCache {
    std::vector<TrainingTriple> triples;
    std::uint64_t model_fingerprint = 0;
};
TripleCache load_triples(const std::string& path);

}  // namespace cmr
