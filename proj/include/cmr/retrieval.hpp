#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "cmr/common.hpp"
#include "cmr/corpus.hpp"
#include "cmr/defaults.hpp"
#include "cmr/lda.hpp"
#include "cmr/nnet.hpp"

namespace cmr {

enum class Modality { image, text };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct IndexedItem {
    std::string item_id;
    Modality modality = Modality::text;
    TopicDistribution distribution;
    std::string class_label;  // empty = unlabeled
};

struct RetrievalIndex {
    std::vector<IndexedItem> items;
    int topics = 0;
};

// D(p' || q') after adding eps to both arguments and renormalizing; always
// finite and >= 0.
double kl_divergence(const TopicDistribution& p, const TopicDistribution& q,
                     double eps = defaults::kl_epsilon);

double symmetric_kl(const TopicDistribution& p, const TopicDistribution& q,
                    double eps = defaults::kl_epsilon);

RetrievalIndex build_index(std::vector<IndexedItem> items);

struct RankedItem {
    std::string item_id;
    double divergence = 0.0;
};

struct QueryOptions {
    double eps = defaults::kl_epsilon;
    bool symmetric = false;
};

// Items of the target modality, ascending by divergence from the query,
// ties broken by item_id, truncated to top_k.
std::vector<RankedItem> query(const RetrievalIndex& index, const TopicDistribution& q,
                              Modality target_modality, int top_k,
                              const QueryOptions& options = {});

// Which network head supplies the query distribution for image payloads.
enum class QueryHead { local, global };

struct CrossModalOptions {
    int top_k = 8;
    QueryHead head = QueryHead::local;
    QueryOptions query;
    InferParams infer;  // for text payloads
};

using QueryPayload = std::variant<std::string, Eigen::VectorXd>;

// Text payloads are tokenized, encoded and projected by the topic model,
// then matched against images; image feature payloads are embedded by the
// network and matched against texts.
std::vector<RankedItem> cross_modal_retrieve(const Network& net, const TopicModel& model,
                                             const Vocabulary& vocab, const RetrievalIndex& index,
                                             const QueryPayload& payload,
                                             const CrossModalOptions& options = {});

// JSON-Lines index file, one item per line.
void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path);
std::vector<IndexedItem> load_index_items(const std::string& path);

}  // namespace cmr
