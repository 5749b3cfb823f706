#include "cmr/lda.hpp"

#include <cmath>

#include "cmr/serial.hpp"

namespace cmr {

namespace {

constexpr char model_magic[8] = {'C', 'M', 'R', 'T', 'O', 'P', 'I', 'C'};
constexpr std::uint32_t model_version = 1;

void validate_word_ids(const std::vector<SparseDoc>& corpus, int vocab_size) {
    for (const auto& doc : corpus) {
        for (const auto& [word, count] : doc.entries) {
            if (word < 0 || word >= vocab_size) {
                throw VocabularyMismatch("word id " + std::to_string(word) +
                                         " outside vocabulary of size " +
                                         std::to_string(vocab_size));
            }
            if (count <= 0) {
                throw InternalConsistencyError("sparse document has non-positive count");
            }
        }
    }
}

}  // namespace

GibbsState init_gibbs_state(const std::vector<SparseDoc>& corpus, int topics, int vocab_size,
                            Rng& rng) {
    GibbsState state;
    state.topics = topics;
    state.vocab_size = vocab_size;
    const auto n_docs = static_cast<Eigen::Index>(corpus.size());
    state.doc_topic_counts = Eigen::MatrixXi::Zero(n_docs, topics);
    state.topic_word_counts = Eigen::MatrixXi::Zero(topics, vocab_size);
    state.topic_counts = Eigen::VectorXi::Zero(topics);
    state.words.resize(corpus.size());
    state.z.resize(corpus.size());

    for (std::size_t d = 0; d < corpus.size(); ++d) {
        auto& words = state.words[d];
        words.reserve(corpus[d].total_tokens);
        for (const auto& [word, count] : corpus[d].entries) {
            for (int c = 0; c < count; ++c) words.push_back(word);
        }
        auto& z = state.z[d];
        z.resize(words.size());
        for (std::size_t i = 0; i < words.size(); ++i) {
            const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(topics)));
            z[i] = k;
            state.doc_topic_counts(static_cast<Eigen::Index>(d), k) += 1;
            state.topic_word_counts(k, words[i]) += 1;
            state.topic_counts[k] += 1;
        }
    }
    return state;
}

TopicDistribution conditional_topic_distribution(const GibbsState& state, int doc, int token,
                                                 double alpha, double beta) {
    const int w = state.words[static_cast<std::size_t>(doc)][static_cast<std::size_t>(token)];
    const double vbeta = static_cast<double>(state.vocab_size) * beta;
    Eigen::VectorXd p(state.topics);
    for (int k = 0; k < state.topics; ++k) {
        p[k] = (state.doc_topic_counts(doc, k) + alpha) *
               (state.topic_word_counts(k, w) + beta) / (state.topic_counts[k] + vbeta);
    }
    p /= p.sum();
    return p;
}

void gibbs_sweep(GibbsState& state, double alpha, double beta, Rng& rng) {
    const double vbeta = static_cast<double>(state.vocab_size) * beta;
    Eigen::VectorXd p(state.topics);
    for (std::size_t d = 0; d < state.words.size(); ++d) {
        const auto di = static_cast<Eigen::Index>(d);
        const auto& words = state.words[d];
        auto& z = state.z[d];
        for (std::size_t i = 0; i < words.size(); ++i) {
            const int w = words[i];
            const int old_k = z[i];
            state.doc_topic_counts(di, old_k) -= 1;
            state.topic_word_counts(old_k, w) -= 1;
            state.topic_counts[old_k] -= 1;

            double total = 0.0;
            for (int k = 0; k < state.topics; ++k) {
                p[k] = (state.doc_topic_counts(di, k) + alpha) *
                       (state.topic_word_counts(k, w) + beta) / (state.topic_counts[k] + vbeta);
                total += p[k];
            }
            const double target = rng.uniform() * total;
            double acc = 0.0;
            int new_k = state.topics - 1;
            for (int k = 0; k < state.topics; ++k) {
                acc += p[k];
                if (target < acc) {
                    new_k = k;
                    break;
                }
            }

            z[i] = new_k;
            state.doc_topic_counts(di, new_k) += 1;
            state.topic_word_counts(new_k, w) += 1;
            state.topic_counts[new_k] += 1;
        }
    }
}

void check_count_conservation(const GibbsState& state) {
    for (Eigen::Index d = 0; d < state.doc_topic_counts.rows(); ++d) {
        const int doc_total = state.doc_topic_counts.row(d).sum();
        if (doc_total != static_cast<int>(state.words[static_cast<std::size_t>(d)].size())) {
            throw InternalConsistencyError("document topic counts do not sum to document length");
        }
    }
    const Eigen::VectorXi per_topic = state.doc_topic_counts.colwise().sum().transpose();
    if (per_topic != state.topic_counts) {
        throw InternalConsistencyError("per-topic counts disagree with document topic counts");
    }
}

TopicModel fit(const std::vector<SparseDoc>& corpus, int topics, double alpha, double beta,
               int sweeps, std::uint64_t seed, int vocab_size, std::uint64_t vocab_hash) {
    if (topics < 2) throw InvalidHyperparameter("topic count must be >= 2");
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw InvalidHyperparameter("alpha and beta must be positive");
    }
    if (sweeps < 1) throw InvalidHyperparameter("sweep count must be >= 1");
    if (vocab_size < 1) throw InvalidHyperparameter("vocabulary size must be >= 1");
    long long total_tokens = 0;
    for (const auto& doc : corpus) total_tokens += doc.total_tokens;
    if (corpus.empty() || total_tokens < 1) {
        throw EmptyCorpus("fit requires a corpus with at least one token");
    }
    validate_word_ids(corpus, vocab_size);

    Rng rng(seed);
    GibbsState state = init_gibbs_state(corpus, topics, vocab_size, rng);
    for (int s = 0; s < sweeps; ++s) {
        gibbs_sweep(state, alpha, beta, rng);
        check_count_conservation(state);
    }

    TopicModel model;
    model.topics = topics;
    model.vocab_size = vocab_size;
    model.alpha = alpha;
    model.beta = beta;
    model.vocab_hash = vocab_hash;
    model.topic_word_counts = state.topic_word_counts;
    model.topic_counts = state.topic_counts;
    model.phi.resize(topics, vocab_size);
    const double vbeta = static_cast<double>(vocab_size) * beta;
    for (int k = 0; k < topics; ++k) {
        const double denom = state.topic_counts[k] + vbeta;
        for (int w = 0; w < vocab_size; ++w) {
            model.phi(k, w) = (state.topic_word_counts(k, w) + beta) / denom;
        }
    }
    return model;
}

TopicDistribution infer(const TopicModel& model, const SparseDoc& doc, const InferParams& params) {
    if (model.topics < 1 || model.phi.rows() != model.topics) {
        throw InvalidHyperparameter("model is not fitted");
    }
    if (params.burn_in < 0 || params.sweeps <= params.burn_in) {
        throw InvalidHyperparameter("infer requires sweeps > burn_in >= 0");
    }
    for (const auto& [word, count] : doc.entries) {
        if (word < 0 || word >= model.vocab_size) {
            throw VocabularyMismatch("document references word id " + std::to_string(word) +
                                     " outside the model vocabulary");
        }
        (void)count;
    }

    const int K = model.topics;
    const double kalpha = static_cast<double>(K) * model.alpha;

    std::vector<int> words;
    words.reserve(static_cast<std::size_t>(doc.total_tokens));
    for (const auto& [word, count] : doc.entries) {
        for (int c = 0; c < count; ++c) words.push_back(word);
    }
    const auto n = static_cast<double>(words.size());

    Rng rng(params.seed);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    std::vector<int> z(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        z[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
        counts[z[i]] += 1;
    }

    Eigen::VectorXd theta_acc = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd p(K);
    for (int s = 1; s <= params.sweeps; ++s) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            const int w = words[i];
            counts[z[i]] -= 1;
            double total = 0.0;
            for (int k = 0; k < K; ++k) {
                p[k] = (counts[k] + model.alpha) * model.phi(k, w);
                total += p[k];
            }
            const double target = rng.uniform() * total;
            double acc = 0.0;
            int new_k = K - 1;
            for (int k = 0; k < K; ++k) {
                acc += p[k];
                if (target < acc) {
                    new_k = k;
                    break;
                }
            }
            z[i] = new_k;
            counts[new_k] += 1;
        }
        if (s > params.burn_in) {
            theta_acc += (counts.cast<double>().array() + model.alpha).matrix() / (n + kalpha);
        }
    }
    TopicDistribution theta = theta_acc / static_cast<double>(params.sweeps - params.burn_in);
    validate_distribution(theta, "infer");
    return theta;
}

double perplexity(const TopicModel& model, const std::vector<SparseDoc>& heldout,
                  const InferParams& params) {
    long long total_tokens = 0;
    for (const auto& doc : heldout) total_tokens += doc.total_tokens;
    if (heldout.empty() || total_tokens < 1) {
        throw EmptyCorpus("perplexity requires at least one held-out token");
    }

    double log_likelihood = 0.0;
    for (std::size_t d = 0; d < heldout.size(); ++d) {
        InferParams per_doc = params;
        per_doc.seed = params.seed + static_cast<std::uint64_t>(d);
        const TopicDistribution theta = infer(model, heldout[d], per_doc);
        for (const auto& [word, count] : heldout[d].entries) {
            const double p_word = theta.dot(model.phi.col(word));
            log_likelihood += count * std::log(p_word);
        }
    }
    return std::exp(-log_likelihood / static_cast<double>(total_tokens));
}

std::uint64_t model_hash(const TopicModel& model) {
    std::uint64_t h = 14695981039346656037ull;
    h = fnv1a64_bytes(&model.topics, sizeof(model.topics), h);
    h = fnv1a64_bytes(&model.vocab_size, sizeof(model.vocab_size), h);
    h = fnv1a64_bytes(&model.alpha, sizeof(model.alpha), h);
    h = fnv1a64_bytes(&model.beta, sizeof(model.beta), h);
    h = fnv1a64_bytes(&model.vocab_hash, sizeof(model.vocab_hash), h);
    for (Eigen::Index k = 0; k < model.phi.rows(); ++k) {
        for (Eigen::Index w = 0; w < model.phi.cols(); ++w) {
            const double x = model.phi(k, w);
            h = fnv1a64_bytes(&x, sizeof(x), h);
        }
    }
    return h;
}

void save_model(const TopicModel& model, const std::string& path) {
    BinaryWriter out(path);
    out.magic(model_magic);
    out.u32(model_version);
    out.i64(model.topics);
    out.i64(model.vocab_size);
    out.f64(model.alpha);
    out.f64(model.beta);
    out.u64(model.vocab_hash);
    out.matrix(model.phi);
    out.close();
}

TopicModel load_model(const std::string& path) {
    BinaryReader in(path);
    in.expect_magic(model_magic);
    const auto version = in.u32();
    if (version != model_version) {
        throw UnsupportedFormat(path + ": unsupported model version " + std::to_string(version));
    }
    TopicModel model;
    model.topics = static_cast<int>(in.i64());
    model.vocab_size = static_cast<int>(in.i64());
    model.alpha = in.f64();
    model.beta = in.f64();
    model.vocab_hash = in.u64();
    model.phi = in.matrix();
    if (model.phi.rows() != model.topics || model.phi.cols() != model.vocab_size) {
        throw UnsupportedFormat(path + ": phi extents disagree with header");
    }
    return model;
}

}  // namespace cmr
