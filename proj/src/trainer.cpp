#include "cmr/trainer.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include "cmr/serial.hpp"

namespace cmr {

namespace {

constexpr char triples_magic[8] = {'C', 'M', 'R', 'T', 'R', 'P', 'L', '1'};
constexpr std::uint32_t triples_version = 1;

Eigen::VectorXd read_text_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file: " + path);
    std::vector<double> values;
    double x;
    while (in >> x) values.push_back(x);
    if (!in.eof()) throw ParseError(path, 1, "feature file contains non-numeric data");
    if (values.empty()) throw ParseError(path, 1, "feature file is empty");
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void run_parallel(int n_tasks, int threads, const std::function<void(int)>& task) {
    if (threads <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_tasks) return;
            task(i);
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(threads, n_tasks);
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

}  // namespace

Eigen::VectorXd resolve_features(const ImageRef& image) {
    if (image.features.size() > 0) return image.features;
    if (image.features_path.empty()) {
        throw InvalidDimension("image \"" + image.image_id + "\" has no features");
    }
    if (image.features_path.size() >= 4 &&
        image.features_path.compare(image.features_path.size() - 4, 4, ".ppm") == 0) {
        return read_ppm(image.features_path);
    }
    return read_text_features(image.features_path);
}

std::vector<TrainingTriple> build_triples(const std::vector<RawDocument>& corpus,
                                          const TopicModel& model, const Vocabulary& vocab,
                                          const TripleParams& params) {
    if (model.vocab_hash != 0 && model.vocab_hash != vocab.hash()) {
        throw VocabularyMismatch("topic model was fitted with a different vocabulary");
    }
    if (model.vocab_size != vocab.size()) {
        throw VocabularyMismatch("vocabulary size " + std::to_string(vocab.size()) +
                                 " disagrees with model V=" + std::to_string(model.vocab_size));
    }

    const auto& stopwords = english_stopwords();
    for (const auto& doc : corpus) {
        for (const auto& image : doc.images) {
            if (image.caption.empty()) {
                throw EmptyCaption("image \"" + image.image_id + "\" in document \"" + doc.doc_id +
                                   "\" has an empty caption");
            }
        }
    }

    // Per-article inference slots, filled independently (safe to run in
    // parallel; results land in preallocated positions).
    std::vector<TopicDistribution> global_targets(corpus.size());
    run_parallel(static_cast<int>(corpus.size()), params.threads, [&](int d) {
        const auto& doc = corpus[static_cast<std::size_t>(d)];
        InferParams ip;
        ip.sweeps = params.sweeps;
        ip.burn_in = params.burn_in;
        ip.seed = fnv1a64(doc.article_text) ^ params.base_seed;
        global_targets[static_cast<std::size_t>(d)] =
            infer(model, encode(tokenize(doc.article_text, stopwords), vocab), ip);
    });

    std::vector<std::vector<TopicDistribution>> local_targets(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        local_targets[d].resize(corpus[d].images.size());
    }
    std::vector<std::pair<int, int>> image_slots;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        for (std::size_t i = 0; i < corpus[d].images.size(); ++i) {
            image_slots.emplace_back(static_cast<int>(d), static_cast<int>(i));
        }
    }
    run_parallel(static_cast<int>(image_slots.size()), params.threads, [&](int s) {
        const auto [d, i] = image_slots[static_cast<std::size_t>(s)];
        const auto& image = corpus[static_cast<std::size_t>(d)].images[static_cast<std::size_t>(i)];
        InferParams ip;
        ip.sweeps = params.sweeps;
        ip.burn_in = params.burn_in;
        ip.seed = fnv1a64(image.caption) ^ params.base_seed;
        local_targets[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] =
            infer(model, encode(tokenize(image.caption, stopwords), vocab), ip);
    });

    std::vector<TrainingTriple> triples;
    triples.reserve(image_slots.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        for (std::size_t i = 0; i < corpus[d].images.size(); ++i) {
            TrainingTriple triple;
            triple.features = resolve_features(corpus[d].images[i]);
            triple.target_global = global_targets[d];
            triple.target_local = local_targets[d][i];
            triples.push_back(std::move(triple));
        }
    }
    return triples;
}

TrainHistory train(Network& net, const std::vector<TrainingTriple>& triples, OptimizerState& opt,
                   const TrainConfig& config) {
    TrainHistory history;
    if (config.epochs == 0) return history;
    if (config.epochs < 0) throw InvalidHyperparameter("epochs must be >= 0");
    if (config.batch_size < 1) throw InvalidHyperparameter("batch_size must be >= 1");
    if (triples.empty()) throw EmptyCorpus("train requires at least one triple");

    const auto n = static_cast<int>(triples.size());
    const int K = net.topics;
    for (const auto& t : triples) {
        if (t.features.size() != net.input_dim || t.target_global.size() != K ||
            t.target_local.size() != K) {
            throw DimensionMismatch("triple dimensions do not match the network");
        }
    }

    std::ofstream curve;
    if (!config.curve_csv_path.empty()) {
        curve.open(config.curve_csv_path, std::ios::binary);
        if (!curve) throw IoError("cannot open for writing: " + config.curve_csv_path);
        curve << "iteration,lr,loss_global,loss_local,loss_total\n";
    }

    Rng shuffle_rng(config.shuffle_seed);
    std::vector<int> order(triples.size());
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    char line[160];
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_global = 0.0, epoch_local = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int count = std::min(config.batch_size, n - start);
            Eigen::MatrixXd batch(count, net.input_dim);
            Eigen::MatrixXd tg(count, K), tl(count, K);
            for (int r = 0; r < count; ++r) {
                const auto& t = triples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + r)])];
                batch.row(r) = t.features.transpose();
                tg.row(r) = t.target_global.transpose();
                tl.row(r) = t.target_local.transpose();
            }
            const ForwardCache cache = forward(net, batch);
            const double batch_total =
                loss(cache.global_out, cache.local_out, tg, tl, net.loss_kind);
            const double batch_global = head_loss(cache.global_out, tg, net.loss_kind);
            const double batch_local = batch_total - batch_global;
            const Gradients grads = backward(net, cache, tg, tl);
            const double lr = opt.learning_rate();
            sgd_step(net, grads, opt);

            epoch_global += batch_global * count;
            epoch_local += batch_local * count;
            if (curve.is_open()) {
                std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g\n",
                              opt.iteration - 1, lr, batch_global, batch_local, batch_total);
                curve << line;
            }
        }
        history.epoch_loss_global.push_back(epoch_global / n);
        history.epoch_loss_local.push_back(epoch_local / n);
        history.epoch_loss.push_back((epoch_global + epoch_local) / n);
    }
    if (curve.is_open()) {
        curve.close();
        if (!curve) throw IoError("write failed: " + config.curve_csv_path);
    }
    return history;
}

std::pair<TopicDistribution, TopicDistribution> embed_image(const Network& net,
                                                            const Eigen::VectorXd& features) {
    if (features.size() != net.input_dim) {
        throw DimensionMismatch("feature vector has " + std::to_string(features.size()) +
                                " entries, network expects " + std::to_string(net.input_dim));
    }
    const ForwardCache cache = forward(net, features.transpose());
    const auto normalize = [](const Eigen::RowVectorXd& out) -> TopicDistribution {
        const double total = out.sum();
        if (total < 1e-9) {
            throw DegenerateOutput("head outputs sum below 1e-9; cannot normalize");
        }
        TopicDistribution p = out.transpose() / total;
        validate_distribution(p, "embed_image");
        return p;
    };
    return {normalize(cache.global_out.row(0)), normalize(cache.local_out.row(0))};
}

void save_triples(const std::vector<TrainingTriple>& triples, std::uint64_t model_fingerprint,
                  const std::string& path) {
    if (triples.empty()) throw EmptyCorpus("refusing to write an empty triples cache");
    const auto feature_dim = triples.front().features.size();
    const auto topics = triples.front().target_global.size();
    for (const auto& t : triples) {
        if (t.features.size() != feature_dim || t.target_global.size() != topics ||
            t.target_local.size() != topics) {
            throw DimensionMismatch("triples disagree in dimensions");
        }
    }
    BinaryWriter out(path);
    out.magic(triples_magic);
    out.u32(triples_version);
    out.u64(model_fingerprint);
    out.u64(triples.size());
    out.i64(feature_dim);
    out.i64(topics);
    for (const auto& t : triples) {
        for (Eigen::Index i = 0; i < feature_dim; ++i) out.f64(t.features[i]);
        for (Eigen::Index i = 0; i < topics; ++i) out.f64(t.target_global[i]);
        for (Eigen::Index i = 0; i < topics; ++i) out.f64(t.target_local[i]);
    }
    out.close();
}

TripleCache load_triples(const std::string& path) {
    BinaryReader in(path);
    in.expect_magic(triples_magic);
    const auto version = in.u32();
    if (version != triples_version) {
        throw UnsupportedFormat(path + ": unsupported triples version " + std::to_string(version));
    }
    TripleCache cache;
    cache.model_fingerprint = in.u64();
    const auto count = in.u64();
    const auto feature_dim = in.i64();
    const auto topics = in.i64();
    if (feature_dim < 1 || topics < 1) throw UnsupportedFormat(path + ": bad triple extents");
    cache.triples.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t) {
        TrainingTriple triple;
        triple.features.resize(feature_dim);
        triple.target_global.resize(topics);
        triple.target_local.resize(topics);
        for (Eigen::Index i = 0; i < feature_dim; ++i) triple.features[i] = in.f64();
        for (Eigen::Index i = 0; i < topics; ++i) triple.target_global[i] = in.f64();
        for (Eigen::Index i = 0; i < topics; ++i) triple.target_local[i] = in.f64();
        cache.triples.push_back(std::move(triple));
    }
    return cache;
}

}  // namespace cmr
