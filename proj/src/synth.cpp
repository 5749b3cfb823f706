#include "cmr/synth.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "cmr/rng.hpp"

namespace cmr {

namespace {

using ordered_json = nlohmann::ordered_json;

void validate_phi(const Eigen::MatrixXd& phi) {
    if (phi.rows() < 1 || phi.cols() < 1) throw InvalidPhi("phi must be non-empty");
    for (Eigen::Index k = 0; k < phi.rows(); ++k) {
        if ((phi.row(k).array() < 0.0).any() ||
            std::abs(phi.row(k).sum() - 1.0) > simplex_tolerance) {
            throw InvalidPhi("phi row " + std::to_string(k) + " is not on the simplex");
        }
    }
}

SparseDoc sample_doc(const Eigen::MatrixXd& phi, const TopicDistribution& theta, int doc_len,
                     Rng& rng) {
    std::map<int, int> counts;
    for (int t = 0; t < doc_len; ++t) {
        const int topic = rng.categorical(theta);
        const int word = rng.categorical(phi.row(topic).transpose());
        ++counts[word];
    }
    SparseDoc doc;
    doc.entries.reserve(counts.size());
    for (const auto& [word, count] : counts) {
        doc.entries.emplace_back(word, count);
        doc.total_tokens += count;
    }
    return doc;
}

std::string word_string(int id, int vocab_size) {
    int width = 1;
    for (int v = vocab_size - 1; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(id);
    if (static_cast<int>(digits.size()) < width) {
        digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    }
    return "w" + digits;
}

std::string doc_text(const SparseDoc& doc, int vocab_size) {
    std::string text;
    for (const auto& [word, count] : doc.entries) {
        const std::string w = word_string(word, vocab_size);
        for (int c = 0; c < count; ++c) {
            if (!text.empty()) text.push_back(' ');
            text += w;
        }
    }
    return text;
}

}  // namespace

SyntheticCorpus generate_corpus(const Eigen::MatrixXd& true_phi, double alpha, int n_docs,
                                int doc_len, std::uint64_t seed) {
    validate_phi(true_phi);
    if (doc_len < 1) throw InvalidHyperparameter("doc_len must be >= 1");
    if (n_docs < 0) throw InvalidHyperparameter("n_docs must be >= 0");
    if (!(alpha > 0.0)) throw InvalidHyperparameter("alpha must be positive");

    const int K = static_cast<int>(true_phi.rows());
    SyntheticCorpus synth;
    synth.true_phi = true_phi;
    synth.alpha = alpha;
    synth.docs.reserve(n_docs);
    synth.true_thetas.reserve(n_docs);

    Rng rng(seed);
    for (int d = 0; d < n_docs; ++d) {
        TopicDistribution theta = rng.dirichlet_symmetric(K, alpha);
        validate_distribution(theta, "generate_corpus theta");
        synth.docs.push_back(sample_doc(true_phi, theta, doc_len, rng));
        synth.true_thetas.push_back(std::move(theta));
    }
    return synth;
}

SyntheticCorpus generate_multimodal(const Eigen::MatrixXd& true_phi,
                                    const MultimodalConfig& config) {
    validate_phi(true_phi);
    const int K = static_cast<int>(true_phi.rows());
    if (config.feature_dim < K) {
        throw InvalidDimension("feature_dim must be >= the topic count");
    }
    if (config.noise_sigma < 0.0) throw InvalidDimension("noise_sigma must be >= 0");
    if (config.article_len < 1 || config.caption_len < 1) {
        throw InvalidHyperparameter("article_len and caption_len must be >= 1");
    }
    if (config.images_per_article < 1) {
        throw InvalidHyperparameter("images_per_article must be >= 1");
    }
    if (!(config.alpha > 0.0)) throw InvalidHyperparameter("alpha must be positive");

    SyntheticCorpus synth;
    synth.true_phi = true_phi;
    synth.alpha = config.alpha;

    if (config.embedding == EmbeddingKind::identity_pad) {
        synth.embedding = Eigen::MatrixXd::Zero(config.feature_dim, K);
        synth.embedding.topLeftCorner(K, K).setIdentity();
    } else {
        // The Q factor of a seeded Gaussian matrix: orthonormal columns, so
        // the map is full rank by construction.
        Rng map_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
        Eigen::MatrixXd gaussian(config.feature_dim, K);
        for (Eigen::Index r = 0; r < gaussian.rows(); ++r)
            for (Eigen::Index c = 0; c < gaussian.cols(); ++c) gaussian(r, c) = map_rng.normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
        synth.embedding =
            Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(config.feature_dim, K));
    }

    Rng rng(config.seed);
    synth.docs.reserve(config.n_articles);
    synth.true_thetas.reserve(config.n_articles);
    synth.captions.resize(config.n_articles);
    synth.caption_thetas.resize(config.n_articles);
    synth.image_features.resize(config.n_articles);

    for (int a = 0; a < config.n_articles; ++a) {
        TopicDistribution theta_article = rng.dirichlet_symmetric(K, config.alpha);
        synth.docs.push_back(sample_doc(true_phi, theta_article, config.article_len, rng));

        for (int i = 0; i < config.images_per_article; ++i) {
            const TopicDistribution fresh = rng.dirichlet_symmetric(K, config.alpha);
            TopicDistribution theta_caption = 0.5 * theta_article + 0.5 * fresh;
            validate_distribution(theta_caption, "generate_multimodal caption theta");
            synth.captions[a].push_back(sample_doc(true_phi, theta_caption, config.caption_len, rng));

            Eigen::VectorXd x = synth.embedding * theta_caption;
            if (config.noise_sigma > 0.0) {
                for (Eigen::Index j = 0; j < x.size(); ++j) {
                    x[j] += config.noise_sigma * rng.normal();
                }
            }
            synth.image_features[a].push_back(std::move(x));
            synth.caption_thetas[a].push_back(std::move(theta_caption));
        }
        synth.true_thetas.push_back(std::move(theta_article));
    }
    return synth;
}

Eigen::MatrixXd disjoint_support_phi(int topics, int vocab_size) {
    if (topics < 1 || vocab_size < topics) {
        throw InvalidDimension("disjoint supports require V >= K >= 1");
    }
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(topics, vocab_size);
    for (int k = 0; k < topics; ++k) {
        const int begin = k * vocab_size / topics;
        const int end = (k + 1) * vocab_size / topics;
        for (int w = begin; w < end; ++w) phi(k, w) = 1.0 / static_cast<double>(end - begin);
    }
    return phi;
}

Eigen::MatrixXd random_phi(int topics, int vocab_size, double concentration, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd phi(topics, vocab_size);
    for (int k = 0; k < topics; ++k) {
        phi.row(k) = rng.dirichlet_symmetric(vocab_size, concentration).transpose();
    }
    return phi;
}

Vocabulary synthetic_vocabulary(int vocab_size) {
    Vocabulary vocab;
    vocab.words.reserve(vocab_size);
    vocab.doc_freq.assign(vocab_size, 0);
    for (int i = 0; i < vocab_size; ++i) {
        vocab.word_to_id.emplace(word_string(i, vocab_size), i);
        vocab.words.push_back(word_string(i, vocab_size));
    }
    return vocab;
}

std::vector<RawDocument> to_documents(const SyntheticCorpus& synth) {
    const int V = synth.vocab_size();
    std::vector<RawDocument> docs;
    docs.reserve(synth.docs.size());
    for (std::size_t a = 0; a < synth.docs.size(); ++a) {
        RawDocument doc;
        doc.doc_id = "doc" + std::to_string(a);
        doc.article_text = doc_text(synth.docs[a], V);
        Eigen::Index label = 0;
        synth.true_thetas[a].maxCoeff(&label);
        doc.class_label = "c" + std::to_string(label);
        if (a < synth.captions.size()) {
            for (std::size_t i = 0; i < synth.captions[a].size(); ++i) {
                ImageRef img;
                img.image_id = doc.doc_id + "-img" + std::to_string(i);
                img.caption = doc_text(synth.captions[a][i], V);
                img.features = synth.image_features[a][i];
                doc.images.push_back(std::move(img));
            }
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

namespace {

ordered_json theta_to_json(const TopicDistribution& theta) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index k = 0; k < theta.size(); ++k) arr.push_back(theta[k]);
    return arr;
}

Eigen::VectorXd theta_from_json(const nlohmann::json& arr) {
    Eigen::VectorXd v(arr.size());
    Eigen::Index i = 0;
    for (const auto& x : arr) v[i++] = x.get<double>();
    return v;
}

}  // namespace

void save_truth(const SyntheticCorpus& synth, const std::string& path) {
    ordered_json j;
    j["version"] = 1;
    j["alpha"] = synth.alpha;
    ordered_json phi = ordered_json::array();
    for (Eigen::Index k = 0; k < synth.true_phi.rows(); ++k) {
        phi.push_back(theta_to_json(synth.true_phi.row(k).transpose()));
    }
    j["true_phi"] = std::move(phi);
    ordered_json articles = ordered_json::array();
    for (std::size_t a = 0; a < synth.true_thetas.size(); ++a) {
        ordered_json ja;
        ja["doc_id"] = "doc" + std::to_string(a);
        ja["theta"] = theta_to_json(synth.true_thetas[a]);
        ordered_json images = ordered_json::array();
        if (a < synth.caption_thetas.size()) {
            for (std::size_t i = 0; i < synth.caption_thetas[a].size(); ++i) {
                ordered_json ji;
                ji["image_id"] = "doc" + std::to_string(a) + "-img" + std::to_string(i);
                ji["theta"] = theta_to_json(synth.caption_thetas[a][i]);
                images.push_back(std::move(ji));
            }
        }
        ja["images"] = std::move(images);
        articles.push_back(std::move(ja));
    }
    j["articles"] = std::move(articles);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

SyntheticCorpus load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open truth file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, 1, std::string("invalid JSON: ") + e.what());
    }

    SyntheticCorpus synth;
    synth.alpha = j.value("alpha", 0.0);
    const auto& phi = j.at("true_phi");
    synth.true_phi.resize(phi.size(), phi.empty() ? 0 : phi[0].size());
    for (std::size_t k = 0; k < phi.size(); ++k) {
        synth.true_phi.row(static_cast<Eigen::Index>(k)) = theta_from_json(phi[k]).transpose();
    }
    for (const auto& ja : j.at("articles")) {
        synth.true_thetas.push_back(theta_from_json(ja.at("theta")));
        std::vector<TopicDistribution> captions;
        for (const auto& ji : ja.at("images")) captions.push_back(theta_from_json(ji.at("theta")));
        synth.caption_thetas.push_back(std::move(captions));
    }
    return synth;
}

}  // namespace cmr
