#include "cmr/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cmr/trainer.hpp"

namespace cmr {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

}  // namespace

std::string to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

Modality modality_from_string(const std::string& s) {
    if (s == "image") return Modality::image;
    if (s == "text") return Modality::text;
    throw UnsupportedFormat("unknown modality \"" + s + "\"");
}

double kl_divergence(const TopicDistribution& p, const TopicDistribution& q, double eps) {
    if (p.size() != q.size()) {
        throw DimensionMismatch("kl_divergence: distributions have different lengths");
    }
    if (!(eps > 0.0)) throw InvalidHyperparameter("kl_divergence: eps must be positive");
    const Eigen::ArrayXd ps = (p.array() + eps) / (p.sum() + eps * static_cast<double>(p.size()));
    const Eigen::ArrayXd qs = (q.array() + eps) / (q.sum() + eps * static_cast<double>(q.size()));
    const double d = (ps * (ps / qs).log()).sum();
    return d > 0.0 ? d : 0.0;  // clip the tiny negative round-off at p == q
}

double symmetric_kl(const TopicDistribution& p, const TopicDistribution& q, double eps) {
    return 0.5 * (kl_divergence(p, q, eps) + kl_divergence(q, p, eps));
}

RetrievalIndex build_index(std::vector<IndexedItem> items) {
    RetrievalIndex index;
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        if (!seen.insert(item.item_id).second) {
            throw DuplicateId("duplicate item_id \"" + item.item_id + "\"");
        }
        if (index.topics == 0) {
            index.topics = static_cast<int>(item.distribution.size());
        } else if (item.distribution.size() != index.topics) {
            throw DimensionMismatch("item \"" + item.item_id +
                                    "\" has a distribution of different length");
        }
        validate_distribution(item.distribution, "build_index");
    }
    index.items = std::move(items);
    return index;
}

std::vector<RankedItem> query(const RetrievalIndex& index, const TopicDistribution& q,
                              Modality target_modality, int top_k, const QueryOptions& options) {
    if (top_k < 1) throw InvalidHyperparameter("top_k must be >= 1");
    std::vector<RankedItem> ranked;
    for (const auto& item : index.items) {
        if (item.modality != target_modality) continue;
        const double d = options.symmetric ? symmetric_kl(q, item.distribution, options.eps)
                                           : kl_divergence(q, item.distribution, options.eps);
        ranked.push_back({item.item_id, d});
    }
    if (ranked.empty()) {
        throw EmptyModality("index has no items of modality " + to_string(target_modality));
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.divergence != b.divergence) return a.divergence < b.divergence;
        return a.item_id < b.item_id;
    });
    if (static_cast<int>(ranked.size()) > top_k) ranked.resize(static_cast<std::size_t>(top_k));
    return ranked;
}

std::vector<RankedItem> cross_modal_retrieve(const Network& net, const TopicModel& model,
                                             const Vocabulary& vocab, const RetrievalIndex& index,
                                             const QueryPayload& payload,
                                             const CrossModalOptions& options) {
    if (std::holds_alternative<std::string>(payload)) {
        const auto& text = std::get<std::string>(payload);
        const SparseDoc doc = encode(tokenize(text, english_stopwords()), vocab);
        const TopicDistribution theta = infer(model, doc, options.infer);
        return query(index, theta, Modality::image, options.top_k, options.query);
    }
    const auto& features = std::get<Eigen::VectorXd>(payload);
    const auto [global, local] = embed_image(net, features);
    const TopicDistribution& theta = options.head == QueryHead::local ? local : global;
    return query(index, theta, Modality::text, options.top_k, options.query);
}

void save_index(const RetrievalIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& item : index.items) {
        ordered_json j;
        j["item_id"] = item.item_id;
        j["modality"] = to_string(item.modality);
        if (!item.class_label.empty()) j["label"] = item.class_label;
        ordered_json dist = ordered_json::array();
        for (Eigen::Index k = 0; k < item.distribution.size(); ++k) {
            dist.push_back(item.distribution[k]);
        }
        j["distribution"] = std::move(dist);
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<IndexedItem> load_index_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open index file: " + path);
    std::vector<IndexedItem> items;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("item_id") || !j.contains("modality") ||
            !j.contains("distribution") || !j["distribution"].is_array()) {
            throw ParseError(path, line_no,
                             "item needs \"item_id\", \"modality\" and \"distribution\"");
        }
        IndexedItem item;
        item.item_id = j["item_id"].get<std::string>();
        item.modality = modality_from_string(j["modality"].get<std::string>());
        if (j.contains("label")) item.class_label = j["label"].get<std::string>();
        const auto& dist = j["distribution"];
        item.distribution.resize(static_cast<Eigen::Index>(dist.size()));
        Eigen::Index k = 0;
        for (const auto& x : dist) item.distribution[k++] = x.get<double>();
        items.push_back(std::move(item));
    }
    return items;
}

RetrievalIndex load_index(const std::string& path) { return build_index(load_index_items(path)); }

}  // namespace cmr
