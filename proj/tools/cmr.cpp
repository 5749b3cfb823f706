// Command-line front end for the cross-modal topic-retrieval pipeline.
// Exit codes: 0 success, 1 command-line misuse, 2 data/model errors.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "cmr/corpus.hpp"
#include "cmr/defaults.hpp"
#include "cmr/eval.hpp"
#include "cmr/lda.hpp"
#include "cmr/nnet.hpp"
#include "cmr/retrieval.hpp"
#include "cmr/synth.hpp"
#include "cmr/trainer.hpp"

namespace {

constexpr const char* version_text =
    "cmr 1.0\n"
    "file-format schema versions:\n"
    "  corpus JSON-Lines     v1\n"
    "  vocabulary text       v1\n"
    "  topic model binary    v1\n"
    "  network checkpoint    v1\n"
    "  triples cache         v1\n"
    "  index JSON-Lines      v1\n"
    "  truth sidecar JSON    v1\n"
    "  config key=value      v1";

CLI::App* root_app = nullptr;

// Every filesystem-writing subcommand echoes the effective configuration
// (config file merged with explicit flags) next to its primary output.
void echo_config(const std::string& out_path) {
    if (out_path.empty() || root_app == nullptr) return;
    std::ofstream out(out_path + ".cfg", std::ios::binary);
    if (!out) throw cmr::IoError("cannot open for writing: " + out_path + ".cfg");
    out << root_app->config_to_str(true, false);
}

struct FilterFlags {
    int min_words = cmr::defaults::min_words;
    bool require_caption = true;
};

void add_filter_flags(CLI::App* cmd, FilterFlags& flags) {
    cmd->add_option("--min-words", flags.min_words,
                    "Minimum tokenized article length")
        ->capture_default_str();
    cmd->add_flag("--require-caption,!--no-require-caption", flags.require_caption,
                  "Drop images without captions (and articles left without images)")
        ->capture_default_str();
}

std::vector<cmr::RawDocument> load_filtered(const std::string& path, const FilterFlags& flags) {
    return cmr::filter_corpus(cmr::load_corpus(path), flags.min_words, flags.require_caption,
                              cmr::english_stopwords());
}

std::vector<cmr::SparseDoc> encode_articles(const std::vector<cmr::RawDocument>& docs,
                                            const cmr::Vocabulary& vocab) {
    std::vector<cmr::SparseDoc> encoded;
    encoded.reserve(docs.size());
    for (const auto& doc : docs) {
        encoded.push_back(cmr::encode(cmr::tokenize(doc.article_text, cmr::english_stopwords()), vocab));
    }
    return encoded;
}

cmr::LossKind parse_loss(const std::string& name) {
    if (name == "sigmoid") return cmr::LossKind::sigmoid_cross_entropy;
    if (name == "softmax") return cmr::LossKind::softmax_cross_entropy;
    throw CLI::ValidationError("--loss", "must be 'sigmoid' or 'softmax'");
}

// ---------------------------------------------------------------------------
// gen-synth

struct GenSynthOpts {
    int k = 5;
    int vocab_size = 50;
    int articles = 100;
    int images_per_article = 1;
    int article_len = 60;
    int caption_len = 15;
    int feature_dim = 16;
    double alpha = 0.1;
    double noise_sigma = 0.01;
    std::string phi_kind = "disjoint";
    double phi_concentration = 0.1;
    std::string embedding = "orthonormal";
    std::uint64_t seed = 0;
    std::string out;
    std::string truth_out;
};

void run_gen_synth(const GenSynthOpts& o) {
    const Eigen::MatrixXd phi =
        o.phi_kind == "disjoint"
            ? cmr::disjoint_support_phi(o.k, o.vocab_size)
            : cmr::random_phi(o.k, o.vocab_size, o.phi_concentration, o.seed ^ 0x5bd1e995u);
    cmr::MultimodalConfig config;
    config.alpha = o.alpha;
    config.n_articles = o.articles;
    config.images_per_article = o.images_per_article;
    config.article_len = o.article_len;
    config.caption_len = o.caption_len;
    config.feature_dim = o.feature_dim;
    config.noise_sigma = o.noise_sigma;
    config.seed = o.seed;
    config.embedding = o.embedding == "identity" ? cmr::EmbeddingKind::identity_pad
                                                 : cmr::EmbeddingKind::seeded_orthonormal;
    const auto synth = cmr::generate_multimodal(phi, config);
    cmr::save_corpus(cmr::to_documents(synth), o.out);
    const std::string truth = o.truth_out.empty() ? o.out + ".truth.json" : o.truth_out;
    cmr::save_truth(synth, truth);
    echo_config(o.out);
    std::cout << "wrote " << o.articles << " articles (" << o.articles * o.images_per_article
              << " images) to " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// build-vocab

struct BuildVocabOpts {
    std::string corpus;
    std::string out;
    FilterFlags filter;
    int min_df = cmr::defaults::min_df;
    double max_df_fraction = cmr::defaults::max_df_fraction;
    int max_size = cmr::defaults::max_vocab_size;
};

void run_build_vocab(const BuildVocabOpts& o) {
    const auto docs = load_filtered(o.corpus, o.filter);
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(docs.size());
    for (const auto& doc : docs) {
        tokenized.push_back(cmr::tokenize(doc.article_text, cmr::english_stopwords()));
    }
    const auto vocab = cmr::build_vocabulary(tokenized, o.min_df, o.max_df_fraction, o.max_size);
    cmr::save_vocabulary(vocab, o.out);
    echo_config(o.out);
    std::cout << "vocabulary of " << vocab.size() << " words from " << docs.size()
              << " documents\n";
}

// ---------------------------------------------------------------------------
// train-lda

struct TrainLdaOpts {
    std::string corpus;
    std::string vocab;
    FilterFlags filter;
    int k = cmr::defaults::topics;
    double alpha = 0.0;  // 0 = use 50/K
    double beta = cmr::defaults::beta;
    int sweeps = cmr::defaults::lda_sweeps;
    std::uint64_t seed = 0;
    std::string out;
};

void run_train_lda(const TrainLdaOpts& o) {
    const auto vocab = cmr::load_vocabulary(o.vocab);
    const auto docs = load_filtered(o.corpus, o.filter);
    const auto corpus = encode_articles(docs, vocab);
    const double alpha = o.alpha > 0.0 ? o.alpha : cmr::defaults::alpha_for(o.k);
    const auto model =
        cmr::fit(corpus, o.k, alpha, o.beta, o.sweeps, o.seed, vocab.size(), vocab.hash());
    cmr::save_model(model, o.out);
    echo_config(o.out);
    std::cout << "fitted K=" << o.k << " topics on " << corpus.size() << " documents ("
              << o.sweeps << " sweeps)\n";
}

// ---------------------------------------------------------------------------
// infer-topics

struct InferTopicsOpts {
    std::string model;
    std::string vocab;
    std::string corpus;
    FilterFlags filter;
    std::string what = "articles";
    int sweeps = cmr::defaults::infer_sweeps;
    int burn_in = cmr::defaults::infer_burn_in;
    std::uint64_t seed = 0;
    std::string out;
};

void run_infer_topics(const InferTopicsOpts& o) {
    const auto model = cmr::load_model(o.model);
    const auto vocab = cmr::load_vocabulary(o.vocab);
    if (model.vocab_hash != 0 && model.vocab_hash != vocab.hash()) {
        throw cmr::VocabularyMismatch("topic model was fitted with a different vocabulary");
    }
    const auto docs = load_filtered(o.corpus, o.filter);
    const auto& stopwords = cmr::english_stopwords();

    std::vector<cmr::IndexedItem> items;
    const auto infer_text = [&](const std::string& text) {
        cmr::InferParams params;
        params.sweeps = o.sweeps;
        params.burn_in = o.burn_in;
        params.seed = cmr::fnv1a64(text) ^ o.seed;
        return cmr::infer(model, cmr::encode(cmr::tokenize(text, stopwords), vocab), params);
    };
    for (const auto& doc : docs) {
        if (o.what == "articles") {
            items.push_back({doc.doc_id, cmr::Modality::text, infer_text(doc.article_text),
                             doc.class_label});
        } else {
            for (const auto& image : doc.images) {
                items.push_back({image.image_id, cmr::Modality::text, infer_text(image.caption),
                                 doc.class_label});
            }
        }
    }
    cmr::save_index(cmr::build_index(std::move(items)), o.out);
    echo_config(o.out);
    std::cout << "inferred topic distributions for " << docs.size() << " documents -> " << o.out
              << "\n";
}

// ---------------------------------------------------------------------------
// build-triples

struct BuildTriplesOpts {
    std::string corpus;
    std::string model;
    std::string vocab;
    FilterFlags filter;
    int sweeps = cmr::defaults::infer_sweeps;
    int burn_in = cmr::defaults::infer_burn_in;
    std::uint64_t seed = 0;
    std::string out;
};

void run_build_triples(const BuildTriplesOpts& o, int threads) {
    const auto model = cmr::load_model(o.model);
    const auto vocab = cmr::load_vocabulary(o.vocab);
    const auto docs = load_filtered(o.corpus, o.filter);
    cmr::TripleParams params;
    params.sweeps = o.sweeps;
    params.burn_in = o.burn_in;
    params.base_seed = o.seed;
    params.threads = threads;
    const auto triples = cmr::build_triples(docs, model, vocab, params);
    cmr::save_triples(triples, cmr::model_hash(model), o.out);
    echo_config(o.out);
    std::cout << "built " << triples.size() << " triples -> " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// train-net

struct TrainNetOpts {
    std::string triples;
    int epochs = 1;
    int batch = cmr::defaults::batch_size;
    double lr = cmr::defaults::base_learning_rate;
    double momentum = cmr::defaults::momentum;
    double decay_factor = cmr::defaults::lr_decay_factor;
    long long decay_every = cmr::defaults::lr_decay_every;
    std::vector<int> hidden = {256, 128};
    std::vector<int> conv;  // in_ch,h,w,out_ch,kh,kw
    std::string loss = "sigmoid";
    std::uint64_t seed = 0;
    std::uint64_t shuffle_seed = 0;
    bool shuffle_seed_set = false;
    std::string out;
    std::string curve;
};

void run_train_net(const TrainNetOpts& o) {
    const auto cache = cmr::load_triples(o.triples);
    const int input_dim = static_cast<int>(cache.triples.front().features.size());
    const int topics = static_cast<int>(cache.triples.front().target_global.size());
    const cmr::LossKind loss_kind = parse_loss(o.loss);

    cmr::Network net;
    if (!o.conv.empty()) {
        if (o.conv.size() != 6) {
            throw CLI::ValidationError("--conv", "expects in_ch,h,w,out_ch,kh,kw");
        }
        const cmr::ConvSpec spec{o.conv[0], o.conv[1], o.conv[2], o.conv[3], o.conv[4], o.conv[5]};
        net = cmr::make_conv_net(spec, o.hidden, topics, o.seed, loss_kind);
        if (net.input_dim != input_dim) {
            throw cmr::DimensionMismatch("conv input size does not match triple feature size");
        }
    } else {
        net = cmr::make_mlp(input_dim, o.hidden, topics, o.seed, loss_kind);
    }
    auto opt = cmr::make_optimizer(net, o.lr, o.decay_factor, o.decay_every, o.momentum);

    cmr::TrainConfig config;
    config.epochs = o.epochs;
    config.batch_size = o.batch;
    config.shuffle_seed = o.shuffle_seed_set ? o.shuffle_seed : o.seed;
    config.curve_csv_path = o.curve;
    const auto history = cmr::train(net, cache.triples, opt, config);
    cmr::save_checkpoint(net, opt, o.out);
    echo_config(o.out);
    if (!history.epoch_loss.empty()) {
        std::printf("trained %d epochs on %zu triples; loss %.6f -> %.6f\n", o.epochs,
                    cache.triples.size(), history.epoch_loss.front(), history.epoch_loss.back());
    }
}

// ---------------------------------------------------------------------------
// build-index

struct BuildIndexOpts {
    std::vector<std::string> item_files;
    std::string net;
    std::string corpus;
    FilterFlags filter;
    std::string head = "local";
    std::string out;
};

void run_build_index(const BuildIndexOpts& o) {
    std::vector<cmr::IndexedItem> items;
    for (const auto& file : o.item_files) {
        auto loaded = cmr::load_index_items(file);
        items.insert(items.end(), std::make_move_iterator(loaded.begin()),
                     std::make_move_iterator(loaded.end()));
    }
    if (!o.net.empty()) {
        const auto checkpoint = cmr::load_checkpoint(o.net);
        const auto docs = load_filtered(o.corpus, o.filter);
        for (const auto& doc : docs) {
            for (const auto& image : doc.images) {
                const auto [global, local] =
                    cmr::embed_image(checkpoint.net, cmr::resolve_features(image));
                items.push_back({image.image_id, cmr::Modality::image,
                                 o.head == "global" ? global : local, doc.class_label});
            }
        }
    }
    const auto index = cmr::build_index(std::move(items));
    cmr::save_index(index, o.out);
    echo_config(o.out);
    std::cout << "indexed " << index.items.size() << " items -> " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// retrieve

struct RetrieveOpts {
    std::string index;
    std::string text;
    std::string features_file;
    std::vector<double> features;
    int top_k = 8;
    std::string model;
    std::string vocab;
    std::string net;
    std::string head = "local";
    double eps = cmr::defaults::kl_epsilon;
    bool symmetric = false;
    int sweeps = cmr::defaults::infer_sweeps;
    int burn_in = cmr::defaults::infer_burn_in;
    std::uint64_t seed = 0;
    std::string out;
};

void run_retrieve(const RetrieveOpts& o) {
    const auto index = cmr::load_index(o.index);
    std::map<std::string, std::string> labels;
    for (const auto& item : index.items) labels[item.item_id] = item.class_label;

    cmr::CrossModalOptions options;
    options.top_k = o.top_k;
    options.head = o.head == "global" ? cmr::QueryHead::global : cmr::QueryHead::local;
    options.query.eps = o.eps;
    options.query.symmetric = o.symmetric;
    options.infer = {.sweeps = o.sweeps, .burn_in = o.burn_in, .seed = o.seed};

    std::vector<cmr::RankedItem> ranked;
    if (!o.text.empty()) {
        const auto model = cmr::load_model(o.model);
        const auto vocab = cmr::load_vocabulary(o.vocab);
        cmr::Network unused;
        ranked = cmr::cross_modal_retrieve(unused, model, vocab, index, o.text, options);
    } else {
        Eigen::VectorXd x;
        if (!o.features_file.empty()) {
            cmr::ImageRef ref;
            ref.image_id = "query";
            ref.features_path = o.features_file;
            x = cmr::resolve_features(ref);
        } else {
            x = Eigen::Map<const Eigen::VectorXd>(o.features.data(),
                                                  static_cast<Eigen::Index>(o.features.size()));
        }
        const auto checkpoint = cmr::load_checkpoint(o.net);
        cmr::TopicModel unused_model;
        cmr::Vocabulary unused_vocab;
        ranked = cmr::cross_modal_retrieve(checkpoint.net, unused_model, unused_vocab, index, x,
                                           options);
    }

    std::ostream* dest = &std::cout;
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) throw cmr::IoError("cannot open for writing: " + o.out);
        dest = &file;
    }
    char line[512];
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        std::snprintf(line, sizeof(line), "%zu\t%s\t%.9f\t%s\n", r + 1,
                      ranked[r].item_id.c_str(), ranked[r].divergence,
                      labels[ranked[r].item_id].c_str());
        *dest << line;
    }
    if (!o.out.empty()) echo_config(o.out);
}

// ---------------------------------------------------------------------------
// evaluate-map

struct EvaluateMapOpts {
    std::string index;
    double eps = cmr::defaults::kl_epsilon;
    bool symmetric = false;
    std::string out;
    std::string per_class;
};

void run_evaluate_map(const EvaluateMapOpts& o) {
    const auto index = cmr::load_index(o.index);
    cmr::QueryOptions options;
    options.eps = o.eps;
    options.symmetric = o.symmetric;

    const auto run_direction = [&](cmr::Modality query_modality) {
        std::vector<cmr::MapQuery> queries;
        const auto target =
            query_modality == cmr::Modality::image ? cmr::Modality::text : cmr::Modality::image;
        for (const auto& item : index.items) {
            if (item.modality != query_modality || item.class_label.empty()) continue;
            queries.push_back({item.distribution, item.class_label, target});
        }
        if (queries.empty()) {
            throw cmr::NoRelevantItems("no labeled " + cmr::to_string(query_modality) +
                                       " items to use as queries");
        }
        return cmr::map_score(index, queries, options);
    };

    const auto image_result = run_direction(cmr::Modality::image);
    const auto text_result = run_direction(cmr::Modality::text);
    cmr::write_summary_csv(image_result.map, text_result.map, o.out);
    echo_config(o.out);

    if (!o.per_class.empty()) {
        // Per-class mean AP across both query directions.
        std::map<std::string, std::pair<double, int>> acc;
        for (const auto& [label, ap] : image_result.per_class) {
            acc[label].first += ap;
            acc[label].second += 1;
        }
        for (const auto& [label, ap] : text_result.per_class) {
            acc[label].first += ap;
            acc[label].second += 1;
        }
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& [label, sum_count] : acc) {
            rows.emplace_back(label, sum_count.first / sum_count.second);
        }
        cmr::write_per_class_csv(rows, o.per_class);
    }
    std::printf("Image Query MAP %.6f | Text Query MAP %.6f | Average %.6f\n", image_result.map,
                text_result.map, 0.5 * (image_result.map + text_result.map));
}

// ---------------------------------------------------------------------------
// probe

struct ProbeOpts {
    std::string items;
    int epochs = 200;
    std::vector<double> lrs = {0.1, 0.01};
    std::vector<double> l2s = {1e-4, 1e-3, 1e-2};
    double val_fraction = 0.5;
    std::uint64_t split_seed = 0;
    std::string out;
};

void run_probe(const ProbeOpts& o) {
    const auto items = cmr::load_index_items(o.items);
    std::set<std::string> label_set;
    for (const auto& item : items) {
        if (!item.class_label.empty()) label_set.insert(item.class_label);
    }
    if (label_set.size() < 2) {
        throw cmr::DegenerateSplit("probe needs items labeled with at least two classes");
    }
    std::map<std::string, int> label_ids;
    std::vector<std::string> label_names;
    for (const auto& label : label_set) {
        label_ids[label] = static_cast<int>(label_names.size());
        label_names.push_back(label);
    }

    std::vector<const cmr::IndexedItem*> labeled;
    for (const auto& item : items) {
        if (!item.class_label.empty()) labeled.push_back(&item);
    }
    Eigen::MatrixXd features(labeled.size(), labeled.front()->distribution.size());
    std::vector<int> labels(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        features.row(static_cast<Eigen::Index>(i)) = labeled[i]->distribution.transpose();
        labels[i] = label_ids[labeled[i]->class_label];
    }

    cmr::ProbeConfig config;
    config.epochs = o.epochs;
    config.learning_rates = o.lrs;
    config.l2_penalties = o.l2s;
    config.validation_fraction = o.val_fraction;
    config.split_seed = o.split_seed;
    const auto result = cmr::linear_probe(features, labels, static_cast<int>(label_names.size()),
                                          config);

    std::vector<std::pair<std::string, double>> rows;
    for (std::size_t c = 0; c < label_names.size(); ++c) {
        rows.emplace_back(label_names[c], result.per_class_ap[c]);
    }
    cmr::write_per_class_csv(rows, o.out);
    echo_config(o.out);
    std::printf("linear probe mean AP %.6f over %zu classes\n", result.mean_ap,
                label_names.size());
}

// ---------------------------------------------------------------------------
// grad-check

struct GradCheckOpts {
    int input_dim = 5;
    std::vector<int> hidden = {8};
    int k = 3;
    int batch = 4;
    double epsilon = 1e-5;
    double tolerance = 1e-5;
    std::string loss = "sigmoid";
    std::vector<int> conv;
    std::uint64_t seed = 0;
};

void run_grad_check(const GradCheckOpts& o) {
    const cmr::LossKind loss_kind = parse_loss(o.loss);
    cmr::Network net;
    if (!o.conv.empty()) {
        if (o.conv.size() != 6) {
            throw CLI::ValidationError("--conv", "expects in_ch,h,w,out_ch,kh,kw");
        }
        const cmr::ConvSpec spec{o.conv[0], o.conv[1], o.conv[2], o.conv[3], o.conv[4], o.conv[5]};
        net = cmr::make_conv_net(spec, o.hidden, o.k, o.seed, loss_kind);
    } else {
        net = cmr::make_mlp(o.input_dim, o.hidden, o.k, o.seed, loss_kind);
    }

    cmr::Rng rng(o.seed ^ 0x2545f4914f6cdd1dull);
    Eigen::MatrixXd batch(o.batch, net.input_dim);
    Eigen::MatrixXd tg(o.batch, o.k), tl(o.batch, o.k);
    for (int r = 0; r < o.batch; ++r) {
        for (int c = 0; c < net.input_dim; ++c) batch(r, c) = rng.normal();
        tg.row(r) = rng.dirichlet_symmetric(o.k, 0.7).transpose();
        tl.row(r) = rng.dirichlet_symmetric(o.k, 0.7).transpose();
    }
    const double max_rel = cmr::grad_check(net, batch, tg, tl, o.epsilon);
    std::printf("max relative gradient error: %.3e (tolerance %.3e)\n", max_rel, o.tolerance);
    if (max_rel > o.tolerance) {
        throw cmr::InternalConsistencyError("gradient check exceeded tolerance");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised cross-modal retrieval: LDA topic targets, a two-headed "
                 "network on image features, KL-divergence ranking"};
    root_app = &app;
    app.set_config("--config", "", "key=value configuration file; explicit flags override it");
    app.set_version_flag("--version", version_text);
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "Cap on module-level parallelism")
        ->capture_default_str();

    // gen-synth
    GenSynthOpts gen;
    auto* gen_cmd = app.add_subcommand(
        "gen-synth", "Generate a ground-truth-known multimodal corpus plus truth sidecar");
    gen_cmd->add_option("--k", gen.k, "Topic count")->capture_default_str();
    gen_cmd->add_option("--vocab-size", gen.vocab_size, "Synthetic vocabulary size")
        ->capture_default_str();
    gen_cmd->add_option("--articles", gen.articles, "Number of articles")->capture_default_str();
    gen_cmd->add_option("--images-per-article", gen.images_per_article, "Images per article")
        ->capture_default_str();
    gen_cmd->add_option("--article-len", gen.article_len, "Tokens per article")
        ->capture_default_str();
    gen_cmd->add_option("--caption-len", gen.caption_len, "Tokens per caption")
        ->capture_default_str();
    gen_cmd->add_option("--feature-dim", gen.feature_dim, "Image feature dimension (>= K)")
        ->capture_default_str();
    gen_cmd->add_option("--alpha", gen.alpha, "Dirichlet concentration")->capture_default_str();
    gen_cmd->add_option("--noise-sigma", gen.noise_sigma, "Feature noise sigma")
        ->capture_default_str();
    gen_cmd->add_option("--phi", gen.phi_kind, "Topic-word structure: disjoint|random")
        ->check(CLI::IsMember({"disjoint", "random"}))
        ->capture_default_str();
    gen_cmd->add_option("--phi-concentration", gen.phi_concentration,
                        "Row concentration for --phi random")
        ->capture_default_str();
    gen_cmd->add_option("--embedding", gen.embedding,
                        "Feature map: orthonormal|identity")
        ->check(CLI::IsMember({"orthonormal", "identity"}))
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Random seed")->required();
    gen_cmd->add_option("--out", gen.out, "Corpus JSON-Lines output")->required();
    gen_cmd->add_option("--truth-out", gen.truth_out, "Truth sidecar path (default <out>.truth.json)");
    gen_cmd->callback([&] { run_gen_synth(gen); });

    // build-vocab
    BuildVocabOpts vocab_opts;
    auto* vocab_cmd =
        app.add_subcommand("build-vocab", "Build the vocabulary from filtered article texts");
    vocab_cmd->add_option("--corpus", vocab_opts.corpus, "Corpus JSON-Lines file")->required();
    vocab_cmd->add_option("--out", vocab_opts.out, "Vocabulary output file")->required();
    add_filter_flags(vocab_cmd, vocab_opts.filter);
    vocab_cmd->add_option("--min-df", vocab_opts.min_df, "Minimum document frequency")
        ->capture_default_str();
    vocab_cmd
        ->add_option("--max-df-fraction", vocab_opts.max_df_fraction,
                     "Maximum document frequency as a fraction of the corpus")
        ->capture_default_str();
    vocab_cmd->add_option("--max-size", vocab_opts.max_size, "Maximum vocabulary size")
        ->capture_default_str();
    vocab_cmd->callback([&] { run_build_vocab(vocab_opts); });

    // train-lda
    TrainLdaOpts lda_opts;
    auto* lda_cmd = app.add_subcommand("train-lda",
                                       "Fit the topic model on article texts by collapsed Gibbs");
    lda_cmd->add_option("--corpus", lda_opts.corpus, "Corpus JSON-Lines file")->required();
    lda_cmd->add_option("--vocab", lda_opts.vocab, "Vocabulary file")->required();
    add_filter_flags(lda_cmd, lda_opts.filter);
    lda_cmd->add_option("--k", lda_opts.k, "Topic count")->capture_default_str();
    lda_cmd->add_option("--alpha", lda_opts.alpha, "Document-topic prior (default 50/K)");
    lda_cmd->add_option("--beta", lda_opts.beta, "Topic-word prior")->capture_default_str();
    lda_cmd->add_option("--sweeps", lda_opts.sweeps, "Gibbs sweeps")->capture_default_str();
    lda_cmd->add_option("--seed", lda_opts.seed, "Random seed")->required();
    lda_cmd->add_option("--out", lda_opts.out, "Model output file")->required();
    lda_cmd->callback([&] { run_train_lda(lda_opts); });

    // infer-topics
    InferTopicsOpts infer_opts;
    auto* infer_cmd = app.add_subcommand(
        "infer-topics", "Project articles or captions into the topic space as text index items");
    infer_cmd->add_option("--model", infer_opts.model, "Topic model file")->required();
    infer_cmd->add_option("--vocab", infer_opts.vocab, "Vocabulary file")->required();
    infer_cmd->add_option("--corpus", infer_opts.corpus, "Corpus JSON-Lines file")->required();
    add_filter_flags(infer_cmd, infer_opts.filter);
    infer_cmd->add_option("--what", infer_opts.what, "articles|captions")
        ->check(CLI::IsMember({"articles", "captions"}))
        ->capture_default_str();
    infer_cmd->add_option("--sweeps", infer_opts.sweeps, "Inference sweeps")->capture_default_str();
    infer_cmd->add_option("--burn-in", infer_opts.burn_in, "Burn-in sweeps")->capture_default_str();
    infer_cmd->add_option("--seed", infer_opts.seed, "Random seed")->required();
    infer_cmd->add_option("--out", infer_opts.out, "Items JSON-Lines output")->required();
    infer_cmd->callback([&] { run_infer_topics(infer_opts); });

    // build-triples
    BuildTriplesOpts triples_opts;
    auto* triples_cmd = app.add_subcommand(
        "build-triples", "Assemble (features, global target, local target) training triples");
    triples_cmd->add_option("--corpus", triples_opts.corpus, "Corpus JSON-Lines file")->required();
    triples_cmd->add_option("--model", triples_opts.model, "Topic model file")->required();
    triples_cmd->add_option("--vocab", triples_opts.vocab, "Vocabulary file")->required();
    add_filter_flags(triples_cmd, triples_opts.filter);
    triples_cmd->add_option("--sweeps", triples_opts.sweeps, "Inference sweeps")
        ->capture_default_str();
    triples_cmd->add_option("--burn-in", triples_opts.burn_in, "Burn-in sweeps")
        ->capture_default_str();
    triples_cmd->add_option("--seed", triples_opts.seed, "Random seed")->required();
    triples_cmd->add_option("--out", triples_opts.out, "Triples cache output")->required();
    triples_cmd->callback([&] { run_build_triples(triples_opts, threads); });

    // train-net
    TrainNetOpts net_opts;
    auto* net_cmd =
        app.add_subcommand("train-net", "Train the two-headed network on cached triples");
    net_cmd->add_option("--triples", net_opts.triples, "Triples cache file")->required();
    net_cmd->add_option("--epochs", net_opts.epochs, "Training epochs")->required();
    net_cmd->add_option("--batch", net_opts.batch, "Mini-batch size")->capture_default_str();
    net_cmd->add_option("--lr", net_opts.lr, "Base learning rate")->capture_default_str();
    net_cmd->add_option("--momentum", net_opts.momentum, "SGD momentum")->capture_default_str();
    net_cmd->add_option("--decay-factor", net_opts.decay_factor, "Step-decay factor")
        ->capture_default_str();
    net_cmd->add_option("--decay-every", net_opts.decay_every, "Iterations between decays")
        ->capture_default_str();
    net_cmd->add_option("--hidden", net_opts.hidden, "Trunk widths, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    net_cmd->add_option("--conv", net_opts.conv,
                        "Leading convolution: in_ch,h,w,out_ch,kh,kw")
        ->delimiter(',');
    net_cmd->add_option("--loss", net_opts.loss, "sigmoid|softmax")
        ->check(CLI::IsMember({"sigmoid", "softmax"}))
        ->capture_default_str();
    net_cmd->add_option("--seed", net_opts.seed, "Initialization seed")->required();
    auto* shuffle_opt = net_cmd->add_option("--shuffle-seed", net_opts.shuffle_seed,
                                            "Data-order seed (default: --seed)");
    net_cmd->add_option("--out", net_opts.out, "Checkpoint output")->required();
    net_cmd->add_option("--curve", net_opts.curve, "Per-iteration loss CSV");
    net_cmd->callback([&] {
        net_opts.shuffle_seed_set = shuffle_opt->count() > 0;
        run_train_net(net_opts);
    });

    // build-index
    BuildIndexOpts index_opts;
    auto* index_cmd = app.add_subcommand(
        "build-index", "Merge item files and/or embed corpus images into a retrieval index");
    index_cmd->add_option("--items", index_opts.item_files, "Item JSON-Lines files to merge");
    auto* index_net = index_cmd->add_option("--net", index_opts.net,
                                            "Checkpoint for embedding corpus images");
    auto* index_corpus =
        index_cmd->add_option("--corpus", index_opts.corpus, "Corpus whose images to embed");
    index_net->needs(index_corpus);
    index_corpus->needs(index_net);
    add_filter_flags(index_cmd, index_opts.filter);
    index_cmd->add_option("--head", index_opts.head, "Head for image items: local|global")
        ->check(CLI::IsMember({"local", "global"}))
        ->capture_default_str();
    index_cmd->add_option("--out", index_opts.out, "Index JSON-Lines output")->required();
    index_cmd->callback([&] { run_build_index(index_opts); });

    // retrieve
    RetrieveOpts retrieve_opts;
    auto* retrieve_cmd =
        app.add_subcommand("retrieve", "Rank the opposite modality for a text or image query");
    retrieve_cmd->add_option("--index", retrieve_opts.index, "Index JSON-Lines file")->required();
    auto* text_opt = retrieve_cmd->add_option("--text", retrieve_opts.text, "Text query");
    auto* ffile_opt = retrieve_cmd->add_option("--features-file", retrieve_opts.features_file,
                                               "Feature-vector file (text floats or .ppm)");
    auto* fvec_opt = retrieve_cmd
                         ->add_option("--features", retrieve_opts.features,
                                      "Inline feature vector, comma separated")
                         ->delimiter(',');
    retrieve_cmd->add_option("--top", retrieve_opts.top_k, "Results to return")
        ->capture_default_str();
    auto* model_opt = retrieve_cmd->add_option("--model", retrieve_opts.model,
                                               "Topic model (text queries)");
    auto* vocab_opt = retrieve_cmd->add_option("--vocab", retrieve_opts.vocab,
                                               "Vocabulary (text queries)");
    auto* net_opt = retrieve_cmd->add_option("--net", retrieve_opts.net,
                                             "Checkpoint (image queries)");
    retrieve_cmd->add_option("--head", retrieve_opts.head, "Query head: local|global")
        ->check(CLI::IsMember({"local", "global"}))
        ->capture_default_str();
    retrieve_cmd->add_option("--eps", retrieve_opts.eps, "KL smoothing epsilon")
        ->capture_default_str();
    retrieve_cmd->add_flag("--symmetric", retrieve_opts.symmetric, "Symmetrized KL");
    retrieve_cmd->add_option("--sweeps", retrieve_opts.sweeps, "Inference sweeps (text queries)")
        ->capture_default_str();
    retrieve_cmd->add_option("--burn-in", retrieve_opts.burn_in, "Burn-in (text queries)")
        ->capture_default_str();
    auto* seed_opt =
        retrieve_cmd->add_option("--seed", retrieve_opts.seed, "Inference seed (text queries)");
    retrieve_cmd->add_option("--out", retrieve_opts.out, "TSV output (default stdout)");

    text_opt->excludes(ffile_opt)->excludes(fvec_opt);
    ffile_opt->excludes(fvec_opt);
    text_opt->needs(model_opt)->needs(vocab_opt)->needs(seed_opt);
    ffile_opt->needs(net_opt);
    fvec_opt->needs(net_opt);
    retrieve_cmd->callback([&] {
        if (retrieve_opts.text.empty() && retrieve_opts.features_file.empty() &&
            retrieve_opts.features.empty()) {
            throw CLI::RequiredError("one of --text, --features-file, --features");
        }
        run_retrieve(retrieve_opts);
    });

    // evaluate-map
    EvaluateMapOpts map_opts;
    auto* map_cmd = app.add_subcommand(
        "evaluate-map", "MAP for image->text and text->image under label relevance");
    map_cmd->add_option("--index", map_opts.index, "Index JSON-Lines file")->required();
    map_cmd->add_option("--eps", map_opts.eps, "KL smoothing epsilon")->capture_default_str();
    map_cmd->add_flag("--symmetric", map_opts.symmetric, "Symmetrized KL");
    map_cmd->add_option("--out", map_opts.out, "Summary CSV output")->required();
    map_cmd->add_option("--per-class", map_opts.per_class, "Per-class AP CSV output");
    map_cmd->callback([&] { run_evaluate_map(map_opts); });

    // probe
    ProbeOpts probe_opts;
    auto* probe_cmd = app.add_subcommand(
        "probe", "One-vs-all linear probe over item distributions with label ground truth");
    probe_cmd->add_option("--items", probe_opts.items, "Item JSON-Lines file")->required();
    probe_cmd->add_option("--epochs", probe_opts.epochs, "Gradient-descent epochs")
        ->capture_default_str();
    probe_cmd->add_option("--lrs", probe_opts.lrs, "Learning-rate grid")
        ->delimiter(',')
        ->capture_default_str();
    probe_cmd->add_option("--l2s", probe_opts.l2s, "L2-penalty grid")
        ->delimiter(',')
        ->capture_default_str();
    probe_cmd->add_option("--val-fraction", probe_opts.val_fraction, "Validation fraction")
        ->capture_default_str();
    probe_cmd->add_option("--split-seed", probe_opts.split_seed, "Split seed")->required();
    probe_cmd->add_option("--out", probe_opts.out, "Per-class AP CSV output")->required();
    probe_cmd->callback([&] { run_probe(probe_opts); });

    // grad-check
    GradCheckOpts grad_opts;
    auto* grad_cmd = app.add_subcommand(
        "grad-check", "Compare analytic gradients against central finite differences");
    grad_cmd->add_option("--input-dim", grad_opts.input_dim, "Input dimension")
        ->capture_default_str();
    grad_cmd->add_option("--hidden", grad_opts.hidden, "Trunk widths, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    grad_cmd->add_option("--k", grad_opts.k, "Topic count")->capture_default_str();
    grad_cmd->add_option("--batch", grad_opts.batch, "Batch size")->capture_default_str();
    grad_cmd->add_option("--epsilon", grad_opts.epsilon, "Finite-difference step")
        ->capture_default_str();
    grad_cmd->add_option("--tolerance", grad_opts.tolerance, "Maximum acceptable relative error")
        ->capture_default_str();
    grad_cmd->add_option("--loss", grad_opts.loss, "sigmoid|softmax")
        ->check(CLI::IsMember({"sigmoid", "softmax"}))
        ->capture_default_str();
    grad_cmd->add_option("--conv", grad_opts.conv, "Leading convolution: in_ch,h,w,out_ch,kh,kw")
        ->delimiter(',');
    grad_cmd->add_option("--seed", grad_opts.seed, "Fixture seed")->required();
    grad_cmd->callback([&] { run_grad_check(grad_opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return 1;
    } catch (const cmr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
