#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cmr/common.hpp"
#include "cmr/corpus.hpp"
#include "cmr/defaults.hpp"
#include "cmr/rng.hpp"

namespace cmr {

// Fitted topic model. phi is K x V, each row a distribution over words.
// Count tables are populated by fit() from the final sweep and are empty on
// models loaded from disk (phi alone determines inference).
struct TopicModel {
    int topics = 0;       // K
    int vocab_size = 0;   // V
    double alpha = 0.0;
    double beta = 0.0;
    Eigen::MatrixXd phi;
    Eigen::MatrixXi topic_word_counts;  // n_kw, K x V
    Eigen::VectorXi topic_counts;       // n_k
    std::uint64_t vocab_hash = 0;
};

// Mutable collapsed-sampler state: per-token topic assignments plus the
// derived count tables.
struct GibbsState {
    std::vector<std::vector<int>> words;  // token word-ids per document
    std::vector<std::vector<int>> z;      // topic assignment per token
    Eigen::MatrixXi doc_topic_counts;     // n_dk, D x K
    Eigen::MatrixXi topic_word_counts;    // n_kw, K x V
    Eigen::VectorXi topic_counts;         // n_k
    int topics = 0;
    int vocab_size = 0;
};

// Expands documents to token lists and assigns uniformly random topics.
GibbsState init_gibbs_state(const std::vector<SparseDoc>& corpus, int topics, int vocab_size,
                            Rng& rng);

// One full collapsed Gibbs sweep over every token.
void gibbs_sweep(GibbsState& state, double alpha, double beta, Rng& rng);

// Verifies count conservation (doc totals and per-topic totals); throws
// InternalConsistencyError on violation.
void check_count_conservation(const GibbsState& state);

// Collapsed conditional for token (d, i). Precondition: the state's count
// tables exclude that token (minus-i convention).
TopicDistribution conditional_topic_distribution(const GibbsState& state, int doc, int token,
                                                 double alpha, double beta);

// Collapsed Gibbs sampling. Deterministic for a fixed seed.
TopicModel fit(const std::vector<SparseDoc>& corpus, int topics, double alpha, double beta,
               int sweeps, std::uint64_t seed, int vocab_size, std::uint64_t vocab_hash = 0);

struct InferParams {
    int sweeps = defaults::infer_sweeps;
    int burn_in = defaults::infer_burn_in;
    std::uint64_t seed = 0;
};

// Projects an unseen document into the topic space with phi held fixed;
// theta averages (n_dk + alpha) / (len + K * alpha) over post-burn-in
// sweeps. Deterministic for a fixed seed.
TopicDistribution infer(const TopicModel& model, const SparseDoc& doc, const InferParams& params);

// exp(-mean log-likelihood per token), document mixtures obtained via
// infer() with per-document seeds derived from params.seed.
double perplexity(const TopicModel& model, const std::vector<SparseDoc>& heldout,
                  const InferParams& params);

// Content fingerprint over hyperparameters, dimensions and phi; stored in
// triple caches to detect model/cache mismatches.
std::uint64_t model_hash(const TopicModel& model);

// Versioned binary model container.
void save_model(const TopicModel& model, const std::string& path);
TopicModel load_model(const std::string& path);

}  // namespace cmr
