#include <doctest.h>

#include "cmr/corpus.hpp"
#include "helpers.hpp"

using namespace cmr;

TEST_CASE("tokenize lowercases, strips punctuation and removes stopwords") {
    const std::unordered_set<std::string> the = {"the"};
    CHECK(tokenize("The cat, the CAT.", the) == std::vector<std::string>{"cat", "cat"});
    CHECK(tokenize("", {}) == std::vector<std::string>{});
    CHECK(tokenize("A1 b2-c3", {}) == std::vector<std::string>{"a1", "b2", "c3"});
}

TEST_CASE("tokenize drops tokens shorter than two characters") {
    CHECK(tokenize("a b cd", {}) == std::vector<std::string>{"cd"});
}

namespace {

std::string words(int n, const std::string& prefix = "tok") {
    std::string text;
    for (int i = 0; i < n; ++i) text += prefix + std::to_string(i) + " ";
    return text;
}

RawDocument doc_with_images(const std::string& id, int n_words,
                            std::vector<std::string> captions) {
    RawDocument doc;
    doc.doc_id = id;
    doc.article_text = words(n_words);
    int i = 0;
    for (auto& caption : captions) {
        ImageRef img;
        img.image_id = id + "-img" + std::to_string(i++);
        img.caption = std::move(caption);
        doc.images.push_back(std::move(img));
    }
    return doc;
}

}  // namespace

TEST_CASE("filter_corpus enforces the word-count and caption rules") {
    std::vector<RawDocument> docs;
    docs.push_back(doc_with_images("short", 49, {"a caption"}));
    docs.push_back(doc_with_images("boundary", 50, {"a caption"}));
    docs.push_back(doc_with_images("twoimg", 200, {"", "kept caption"}));
    docs.push_back(doc_with_images("noimg", 200, {}));

    const auto kept = filter_corpus(docs, 50, true, {});
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].doc_id == "boundary");
    CHECK(kept[1].doc_id == "twoimg");
    CHECK(kept[1].images.size() == 1);
    CHECK(kept[1].images[0].caption == "kept caption");
}

TEST_CASE("filter_corpus is idempotent") {
    std::vector<RawDocument> docs;
    docs.push_back(doc_with_images("a", 60, {"c1", "", "c2"}));
    docs.push_back(doc_with_images("b", 10, {"c"}));
    docs.push_back(doc_with_images("c", 120, {""}));

    const auto once = filter_corpus(docs, 50, true, {});
    const auto twice = filter_corpus(once, 50, true, {});
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].doc_id == twice[i].doc_id);
        CHECK(once[i].images.size() == twice[i].images.size());
    }
}

TEST_CASE("build_vocabulary applies document-frequency bounds") {
    const std::vector<std::vector<std::string>> docs = {{"a", "b"}, {"a", "c"}};
    SUBCASE("min_df=2 keeps only the shared word") {
        const auto vocab = build_vocabulary(docs, 2, 1.0, 100);
        REQUIRE(vocab.size() == 1);
        CHECK(vocab.words[0] == "a");
        CHECK(vocab.doc_freq[0] == 2);
    }
    SUBCASE("min_df=1 keeps everything") {
        const auto vocab = build_vocabulary(docs, 1, 1.0, 100);
        CHECK(vocab.size() == 3);
    }
    SUBCASE("min_df=3 leaves nothing") {
        CHECK_THROWS_AS(build_vocabulary(docs, 3, 1.0, 100), EmptyVocabulary);
    }
    SUBCASE("max_df_fraction drops ubiquitous words") {
        const auto vocab = build_vocabulary(docs, 1, 0.5, 100);
        REQUIRE(vocab.size() == 2);
        CHECK(vocab.word_to_id.count("a") == 0);
    }
}

TEST_CASE("build_vocabulary orders by total count then lexicographically") {
    const std::vector<std::vector<std::string>> docs = {{"z", "z", "z", "m", "b"},
                                                        {"z", "m", "b"}};
    const auto vocab = build_vocabulary(docs, 1, 1.0, 2);
    REQUIRE(vocab.size() == 2);
    CHECK(vocab.words[0] == "z");   //ount 4
    CHECK(vocab.words[1] == "b");   // count 2, ties with m, lexicographic
    CHECK(vocab.word_to_id.at("z") == 0);
}

TEST_CASE("encode counts in-vocabulary tokens sorted by id") {
    Vocabulary vocab;
    vocab.words = {"cat", "dog"};
    vocab.word_to_id = {{"cat", 0}, {"dog", 1}};
    vocab.doc_freq = {1, 1};

    const auto doc = encode({"cat", "cat", "dog"}, vocab);
    CHECK(doc.entries == std::vector<std::pair<int, int>>{{0, 2}, {1, 1}});
    CHECK(doc.total_tokens == 3);

    const auto oov = encode({"zebra"}, vocab);
    CHECK(oov.entries.empty());
    CHECK(oov.total_tokens == 0);

    const auto mixed = encode({"dog", "cat", "dog"}, vocab);
    CHECK(mixed.entries == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
}

TEST_CASE("encode of tokenize is deterministic and conserves totals") {
    const std::vector<std::vector<std::string>> raw = {
        {"alpha", "beta", "beta", "gamma"}, {"beta", "gamma", "gamma", "delta", "delta"}};
    const auto vocab = build_vocabulary(raw, 1, 1.0, 100);
    const std::string text = "Alpha beta BETA gamma; delta delta!";
    const auto a = encode(tokenize(text, {}), vocab);
    const auto b = encode(tokenize(text, {}), vocab);
    CHECK(a.entries == b.entries);
    CHECK(a.total_tokens == b.total_tokens);
    int total = 0;
    for (const auto& [w, c] : a.entries) total += c;
    CHECK(total == a.total_tokens);
}

TEST_CASE("corpus files round-trip and report malformed lines") {
    test::TempDir tmp;
    const auto path = tmp.path("corpus.jsonl");

    SUBCASE("round trip") {
        std::vector<RawDocument> docs;
        auto doc = doc_with_images("d1", 3, {"caption one"});
        doc.images[0].features = Eigen::Vector3d(0.25, 0.5, 0.125);
        doc.class_label = "music";
        docs.push_back(doc);
        docs.push_back(doc_with_images("d2", 2, {}));
        save_corpus(docs, path);

        const auto loaded = load_corpus(path);
        REQUIRE(loaded.size() == 2);
        CHECK(loaded[0].doc_id == "d1");
        CHECK(loaded[0].class_label == "music");
        REQUIRE(loaded[0].images.size() == 1);
        CHECK(loaded[0].images[0].caption == "caption one");
        CHECK(loaded[0].images[0].features == Eigen::Vector3d(0.25, 0.5, 0.125));
        CHECK(loaded[1].images.empty());
    }

    SUBCASE("parse error carries the line number") {
        test::write_file(path, R"({"doc_id":"a","text":"x"})"
                               "\nnot json\n");
        CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"), ParseError);
    }

    SUBCASE("duplicate ids are rejected") {
        test::write_file(path, R"({"doc_id":"a","text":"x"})"
                               "\n"
                               R"({"doc_id":"a","text":"y"})"
                               "\n");
        CHECK_THROWS_AS(load_corpus(path), DuplicateId);
    }

    SUBCASE("images require a non-empty image_id") {
        test::write_file(path, R"({"doc_id":"a","text":"x","images":[{"image_id":""}]})"
                               "\n");
        CHECK_THROWS_AS(load_corpus(path), ParseError);
    }
}

TEST_CASE("vocabulary file round-trips bit-exactly") {
    test::TempDir tmp;
    const auto path = tmp.path("vocab.txt");
    test::write_file(path, "V=3\nalpha\nbeta\ngamma\n");

    const auto vocab = load_vocabulary(path);
    REQUIRE(vocab.size() == 3);
    CHECK(vocab.word_to_id.at("beta") == 1);

    const auto copy = tmp.path("copy.txt");
    save_vocabulary(vocab, copy);
    CHECK(test::read_file(copy) == test::read_file(path));

    SUBCASE("header must match the word count") {
        test::write_file(path, "V=5\nalpha\nbeta\n");
        CHECK_THROWS_AS(load_vocabulary(path), ParseError);
    }
    SUBCASE("vocabulary hash is order-sensitive") {
        Vocabulary reordered = vocab;
        std::swap(reordered.words[0], reordered.words[1]);
        CHECK(reordered.hash() != vocab.hash());
    }
}
