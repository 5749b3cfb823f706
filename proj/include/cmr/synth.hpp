#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cmr/common.hpp"
#include "cmr/corpus.hpp"

namespace cmr {

// Ground-truth-known corpus produced by running the LDA generative process
// forward. Per-article captions and image features are present only for
// multimodal generation.
struct SyntheticCorpus {
    Eigen::MatrixXd true_phi;  // K x V
    double alpha = 0.0;

    std::vector<SparseDoc> docs;                  // article bags of words
    std::vector<TopicDistribution> true_thetas;   // per article

    std::vector<std::vector<SparseDoc>> captions;               // [article][image]
    std::vector<std::vector<TopicDistribution>> caption_thetas;  // [article][image]
    std::vector<std::vector<Eigen::VectorXd>> image_features;    // [article][image]
    Eigen::MatrixXd embedding;  // feature_dim x K map used for image features

    int topics() const { return static_cast<int>(true_phi.rows()); }
    int vocab_size() const { return static_cast<int>(true_phi.cols()); }
};

// Text-only generation: theta ~ Dirichlet(alpha), then per token a topic
// from theta and a word from that topic's row of phi.
SyntheticCorpus generate_corpus(const Eigen::MatrixXd& true_phi, double alpha, int n_docs,
                                int doc_len, std::uint64_t seed);

enum class EmbeddingKind {
    seeded_orthonormal,  // Q factor of a seeded Gaussian matrix (full rank)
    identity_pad,        // [I_K; 0]
};

struct MultimodalConfig {
    double alpha = 0.1;
    int n_articles = 0;
    int images_per_article = 1;
    int article_len = 60;
    int caption_len = 15;
    int feature_dim = 0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    EmbeddingKind embedding = EmbeddingKind::seeded_orthonormal;
};

// Article theta ~ Dirichlet(alpha); each caption theta is an even mixture of
// the article theta and a fresh Dirichlet draw; image features are the
// caption theta pushed through a fixed full-rank linear map plus isotropic
// Gaussian noise.
SyntheticCorpus generate_multimodal(const Eigen::MatrixXd& true_phi,
                                    const MultimodalConfig& config);

// Helpers shared with the CLI and tests.

// Row-stochastic phi with K disjoint equal word supports (requires V >= K).
Eigen::MatrixXd disjoint_support_phi(int topics, int vocab_size);

// Row-stochastic phi with rows drawn from a symmetric Dirichlet.
Eigen::MatrixXd random_phi(int topics, int vocab_size, double concentration,
                           std::uint64_t seed);

// Synthetic vocabulary: word id i -> "w<zero-padded i>".
Vocabulary synthetic_vocabulary(int vocab_size);

// Converts to the corpus-module document form. Article texts and captions
// spell out the generated tokens; image features are attached inline; class
// labels are "c<argmax of the article theta>".
std::vector<RawDocument> to_documents(const SyntheticCorpus& synth);

// Sidecar truth file (true phi and thetas) consumed by tests.
void save_truth(const SyntheticCorpus& synth, const std::string& path);
SyntheticCorpus load_truth(const std::string& path);

}  // namespace cmr
