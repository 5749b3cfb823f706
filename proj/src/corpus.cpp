#include "cmr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cmr {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

}  // namespace

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& w : words) {
        h = fnv1a64_bytes(w.data(), w.size(), h);
        h ^= '\n';
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& text,
                                  const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (current.size() >= 2 && stopwords.find(current) == stopwords.end()) {
            tokens.push_back(current);
        }
        current.clear();
    };
    for (unsigned char c : text) {
        if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

const std::unordered_set<std::string>& english_stopwords() {
    static const std::unordered_set<std::string> words = {
        "about", "above", "after", "again", "against", "all", "am", "an", "and", "any",
        "are", "aren", "as", "at", "be", "because", "been", "before", "being", "below",
        "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does",
        "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
        "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
        "how", "if", "in", "into", "is", "isn", "it", "its", "itself", "just", "me",
        "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
        "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over",
        "own", "same", "she", "should", "so", "some", "such", "than", "that", "the",
        "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
        "those", "through", "to", "too", "under", "until", "up", "very", "was", "we",
        "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
        "with", "would", "you", "your", "yours", "yourself", "yourselves",
    };
    return words;
}

std::vector<RawDocument> filter_corpus(std::vector<RawDocument> docs, int min_words,
                                       bool require_caption,
                                       const std::unordered_set<std::string>& stopwords) {
    std::vector<RawDocument> kept;
    kept.reserve(docs.size());
    for (auto& doc : docs) {
        const auto tokens = tokenize(doc.article_text, stopwords);
        if (static_cast<int>(tokens.size()) < min_words) continue;
        if (require_caption) {
            std::erase_if(doc.images, [](const ImageRef& img) { return img.caption.empty(); });
        }
        if (doc.images.empty()) continue;
        kept.push_back(std::move(doc));
    }
    return kept;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& tokenized_docs,
                            int min_df, double max_df_fraction, int max_size) {
    if (min_df < 1) throw InvalidHyperparameter("min_df must be >= 1");
    if (!(max_df_fraction > 0.0 && max_df_fraction <= 1.0)) {
        throw InvalidHyperparameter("max_df_fraction must be in (0, 1]");
    }
    if (max_size < 1) throw InvalidHyperparameter("max_size must be >= 1");

    std::map<std::string, int> df;
    std::map<std::string, long long> total;
    for (const auto& doc : tokenized_docs) {
        std::unordered_set<std::string> seen;
        for (const auto& tok : doc) {
            ++total[tok];
            if (seen.insert(tok).second) ++df[tok];
        }
    }

    const double max_df = max_df_fraction * static_cast<double>(tokenized_docs.size());
    struct Candidate {
        std::string word;
        long long count;
    };
    std::vector<Candidate> survivors;
    for (const auto& [word, freq] : df) {
        if (freq >= min_df && static_cast<double>(freq) <= max_df) {
            survivors.push_back({word, total[word]});
        }
    }
    if (survivors.empty()) {
        throw EmptyVocabulary("no word satisfies the document-frequency constraints");
    }
    std::sort(survivors.begin(), survivors.end(), [](const Candidate& a, const Candidate& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.word < b.word;
    });
    if (static_cast<int>(survivors.size()) > max_size) survivors.resize(max_size);

    Vocabulary vocab;
    vocab.words.reserve(survivors.size());
    vocab.doc_freq.reserve(survivors.size());
    for (const auto& c : survivors) {
        vocab.word_to_id.emplace(c.word, static_cast<int>(vocab.words.size()));
        vocab.words.push_back(c.word);
        vocab.doc_freq.push_back(df[c.word]);
    }
    return vocab;
}

SparseDoc encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    if (vocab.size() == 0) throw EmptyVocabulary("cannot encode against an empty vocabulary");
    std::map<int, int> counts;
    for (const auto& tok : tokens) {
        const auto it = vocab.word_to_id.find(tok);
        if (it != vocab.word_to_id.end()) ++counts[it->second];
    }
    SparseDoc doc;
    doc.entries.reserve(counts.size());
    for (const auto& [id, count] : counts) {
        doc.entries.emplace_back(id, count);
        doc.total_tokens += count;
    }
    return doc;
}

namespace {

Eigen::VectorXd parse_feature_array(const json& arr, const std::string& path, long line) {
    if (!arr.is_array()) throw ParseError(path, line, "\"features\" must be an array of numbers");
    Eigen::VectorXd v(arr.size());
    Eigen::Index i = 0;
    for (const auto& x : arr) {
        if (!x.is_number()) throw ParseError(path, line, "\"features\" must be an array of numbers");
        v[i++] = x.get<double>();
    }
    return v;
}

RawDocument parse_document_line(const std::string& line, const std::string& path, long line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(path, line_no, "document record must be a JSON object");
    if (!j.contains("doc_id") || !j["doc_id"].is_string()) {
        throw ParseError(path, line_no, "missing string field \"doc_id\"");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
        throw ParseError(path, line_no, "missing string field \"text\"");
    }

    RawDocument doc;
    doc.doc_id = j["doc_id"].get<std::string>();
    doc.article_text = j["text"].get<std::string>();
    if (j.contains("label")) {
        if (!j["label"].is_string()) throw ParseError(path, line_no, "\"label\" must be a string");
        doc.class_label = j["label"].get<std::string>();
    }
    if (j.contains("images")) {
        if (!j["images"].is_array()) throw ParseError(path, line_no, "\"images\" must be an array");
        for (const auto& ji : j["images"]) {
            if (!ji.is_object() || !ji.contains("image_id") || !ji["image_id"].is_string()) {
                throw ParseError(path, line_no, "every image needs a string \"image_id\"");
            }
            ImageRef img;
            img.image_id = ji["image_id"].get<std::string>();
            if (img.image_id.empty()) {
                throw ParseError(path, line_no, "image_id must be non-empty");
            }
            if (ji.contains("caption")) {
                if (!ji["caption"].is_string()) {
                    throw ParseError(path, line_no, "\"caption\" must be a string");
                }
                img.caption = ji["caption"].get<std::string>();
            }
            if (ji.contains("features")) {
                img.features = parse_feature_array(ji["features"], path, line_no);
            }
            if (ji.contains("features_path")) {
                if (!ji["features_path"].is_string()) {
                    throw ParseError(path, line_no, "\"features_path\" must be a string");
                }
                img.features_path = ji["features_path"].get<std::string>();
            }
            doc.images.push_back(std::move(img));
        }
    }
    return doc;
}

}  // namespace

std::vector<RawDocument> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);

    std::vector<RawDocument> docs;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RawDocument doc = parse_document_line(line, path, line_no);
        if (!seen_ids.insert(doc.doc_id).second) {
            throw DuplicateId(path + ":" + std::to_string(line_no) + ": duplicate doc_id \"" +
                              doc.doc_id + "\"");
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_corpus(const std::vector<RawDocument>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& doc : docs) {
        ordered_json j;
        j["doc_id"] = doc.doc_id;
        j["text"] = doc.article_text;
        ordered_json images = ordered_json::array();
        for (const auto& img : doc.images) {
            ordered_json ji;
            ji["image_id"] = img.image_id;
            ji["caption"] = img.caption;
            if (img.features.size() > 0) {
                ordered_json arr = ordered_json::array();
                for (Eigen::Index i = 0; i < img.features.size(); ++i) arr.push_back(img.features[i]);
                ji["features"] = std::move(arr);
            }
            if (!img.features_path.empty()) ji["features_path"] = img.features_path;
            images.push_back(std::move(ji));
        }
        j["images"] = std::move(images);
        if (!doc.class_label.empty()) j["label"] = doc.class_label;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("V=", 0) != 0) {
        throw ParseError(path, 1, "expected header line \"V=<count>\"");
    }
    long expected = 0;
    try {
        expected = std::stol(header.substr(2));
    } catch (const std::exception&) {
        throw ParseError(path, 1, "expected header line \"V=<count>\"");
    }
    if (expected < 1) throw ParseError(path, 1, "vocabulary must have V >= 1");

    Vocabulary vocab;
    std::string word;
    long line_no = 1;
    while (std::getline(in, word)) {
        ++line_no;
        if (word.empty()) throw ParseError(path, line_no, "empty word line");
        if (!vocab.word_to_id.emplace(word, static_cast<int>(vocab.words.size())).second) {
            throw ParseError(path, line_no, "duplicate word \"" + word + "\"");
        }
        vocab.words.push_back(word);
    }
    if (static_cast<long>(vocab.words.size()) != expected) {
        throw ParseError(path, line_no, "header declared V=" + std::to_string(expected) +
                                            " but file has " + std::to_string(vocab.words.size()) +
                                            " words");
    }
    vocab.doc_freq.assign(vocab.words.size(), 0);
    return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "V=" << vocab.words.size() << '\n';
    for (const auto& w : vocab.words) out << w << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cmr
