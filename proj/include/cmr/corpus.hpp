#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cmr/common.hpp"

namespace cmr {

// One image inside a multimodal document. Features are either inline or a
// reference to an external vector file (plain text floats, or a binary
// portable-pixmap when the path ends in ".ppm").
struct ImageRef {
    std::string image_id;
    std::string caption;
    Eigen::VectorXd features;
    std::string features_path;
};

struct RawDocument {
    std::string doc_id;
    std::string article_text;
    std::vector<ImageRef> images;
    std::string class_label;  // empty = unlabeled; required only by evaluation
};

struct Vocabulary {
    std::vector<std::string> words;                    // id -> word
    std::unordered_map<std::string, int> word_to_id;   // word -> id
    std::vector<int> doc_freq;                         // id -> document frequency

    int size() const { return static_cast<int>(words.size()); }

    // Order-sensitive fingerprint over the word list; stored in model files
    // for mismatch detection.
    std::uint64_t hash() const;
};

// Bag-of-words encoding: entries sorted by strictly increasing word_id,
// total_tokens equal to the sum of counts.
struct SparseDoc {
    std::vector<std::pair<int, int>> entries;
    int total_tokens = 0;
};

// Lowercased maximal alphanumeric runs of length >= 2, stopwords removed,
// original order preserved. Bytes outside ASCII alphanumerics separate
// tokens.
std::vector<std::string> tokenize(const std::string& text,
                                  const std::unordered_set<std::string>& stopwords);

// Bundled English stopword list used by the pipeline.
const std::unordered_set<std::string>& english_stopwords();

// Keeps documents whose tokenized article has at least min_words tokens;
// when require_caption, images with empty captions are dropped first.
// Documents left without images are dropped. Idempotent.
std::vector<RawDocument> filter_corpus(std::vector<RawDocument> docs, int min_words,
                                       bool require_caption,
                                       const std::unordered_set<std::string>& stopwords);

// Words with document frequency in [min_df, max_df_fraction * n_docs],
// truncated to max_size by descending total count (ties broken
// lexicographically); ids assigned in that order.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& tokenized_docs,
                            int min_df, double max_df_fraction, int max_size);

// Counts in-vocabulary tokens; out-of-vocabulary tokens are dropped.
SparseDoc encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// JSON-Lines corpus file, one document per line.
std::vector<RawDocument> load_corpus(const std::string& path);
void save_corpus(const std::vector<RawDocument>& docs, const std::string& path);

// Plain-text vocabulary file: header "V=<count>", then one word per line
// (line number = id).
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

}  // namespace cmr
