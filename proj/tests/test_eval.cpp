#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "cmr/eval.hpp"
#include "cmr/rng.hpp"
#include "helpers.hpp"

using namespace cmr;

namespace {

// Independent O(n^2) re-implementation: precision at each relevant rank is
// recounted from scratch by scanning the prefix.
double brute_force_ap(const std::vector<bool>& relevance) {
    double sum = 0.0;
    int n_relevant = 0;
    for (std::size_t r = 0; r < relevance.size(); ++r) {
        if (!relevance[r]) continue;
        ++n_relevant;
        int in_prefix = 0;
        for (std::size_t j = 0; j <= r; ++j) in_prefix += relevance[j] ? 1 : 0;
        sum += static_cast<double>(in_prefix) / static_cast<double>(r + 1);
    }
    return sum / n_relevant;
}

TopicDistribution dist(std::initializer_list<double> values) {
    TopicDistribution p(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) p[i++] = v;
    return p;
}

}  // namespace

TEST_CASE("average_precision hand values") {
    CHECK(average_precision({true, false, true}) == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
    CHECK(average_precision({true, true, true, true}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(average_precision({false, false, true}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(average_precision({false, false}), NoRelevantItems);
    CHECK_THROWS_AS(average_precision({}), NoRelevantItems);
}

TEST_CASE("average_precision matches the brute-force oracle on random lists") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(30));
        std::vector<bool> relevance(static_cast<std::size_t>(n));
        bool any = false;
        for (int i = 0; i < n; ++i) {
            relevance[static_cast<std::size_t>(i)] = rng.uniform() < 0.4;
            any = any || relevance[static_cast<std::size_t>(i)];
        }
        if (!any) relevance[static_cast<std::size_t>(rng.uniform_int(n))] = true;
        const double ap = average_precision(relevance);
        CHECK(ap == doctest::Approx(brute_force_ap(relevance)).epsilon(1e-12));
        CHECK(ap >= 0.0);
        CHECK(ap <= 1.0);
    }
}

TEST_CASE("AP is 1 exactly when all relevant items precede all irrelevant ones") {
    CHECK(average_precision({true, true, false, false}) == doctest::Approx(1.0));
    CHECK(average_precision({true, false, true, false}) < 1.0);
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int n_rel = 1 + static_cast<int>(rng.uniform_int(5));
        const int n_irr = static_cast<int>(rng.uniform_int(5));
        std::vector<bool> sorted(static_cast<std::size_t>(n_rel + n_irr), false);
        std::fill(sorted.begin(), sorted.begin() + n_rel, true);
        CHECK(average_precision(sorted) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

namespace {

RetrievalIndex one_hot_index() {
    // Two items per class, one per modality, distributions one-hot by class.
    std::vector<IndexedItem> items;
    for (int c = 0; c < 3; ++c) {
        TopicDistribution p = TopicDistribution::Zero(3);
        p[c] = 1.0;
        items.push_back({"img" + std::to_string(c), Modality::image, p, "c" + std::to_string(c)});
        items.push_back({"txt" + std::to_string(c), Modality::text, p, "c" + std::to_string(c)});
    }
    return build_index(std::move(items));
}

}  // namespace

TEST_CASE("map_score on separable one-hot classes is 1.0") {
    const auto index = one_hot_index();
    std::vector<MapQuery> queries;
    for (int c = 0; c < 3; ++c) {
        TopicDistribution p = TopicDistribution::Zero(3);
        p[c] = 1.0;
        queries.push_back({p, "c" + std::to_string(c), Modality::image});
    }
    const auto result = map_score(index, queries);
    CHECK(result.map == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(result.per_class.size() == 3);
    for (const auto& [label, ap] : result.per_class) CHECK(ap == doctest::Approx(1.0));
}

TEST_CASE("map is the arithmetic mean of per-query APs") {
    // Craft a two-query setup with APs 1.0 and 0.5: query c1 ranks the c0
    // image first, c1 second -> AP = 1/2.
    std::vector<IndexedItem> items;
    items.push_back({"img0", Modality::image, dist({0.9, 0.1}), "c0"});
    items.push_back({"img1", Modality::image, dist({0.6, 0.4}), "c1"});
    const auto index = build_index(items);

    std::vector<MapQuery> queries;
    queries.push_back({dist({0.9, 0.1}), "c0", Modality::image});  // AP 1.0
    queries.push_back({dist({0.9, 0.1}), "c1", Modality::image});  // AP 0.5
    const auto result = map_score(index, queries);
    CHECK(result.per_query_ap[0] == doctest::Approx(1.0));
    CHECK(result.per_query_ap[1] == doctest::Approx(0.5));
    CHECK(result.map == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("map_score is invariant under query reordering") {
    const auto index = one_hot_index();
    std::vector<MapQuery> queries;
    Rng rng(9);
    for (int i = 0; i < 12; ++i) {
        const int c = static_cast<int>(rng.uniform_int(3));
        queries.push_back({rng.dirichlet_symmetric(3, 0.4), "c" + std::to_string(c),
                           i % 2 == 0 ? Modality::image : Modality::text});
    }
    const auto forward_result = map_score(index, queries);
    std::reverse(queries.begin(), queries.end());
    const auto reversed_result = map_score(index, queries);
    CHECK(forward_result.map == doctest::Approx(reversed_result.map).epsilon(1e-12));
}

TEST_CASE("map_score reports queries whose label has no relevant target") {
    const auto index = one_hot_index();
    std::vector<MapQuery> queries;
    queries.push_back({dist({1.0, 0.0, 0.0}), "c0", Modality::image});
    queries.push_back({dist({1.0, 0.0, 0.0}), "nonexistent", Modality::image});
    CHECK_THROWS_WITH_AS(map_score(index, queries), doctest::Contains("nonexistent"),
                         NoRelevantItems);
}

TEST_CASE("structured distributions beat label-permuted MAP by 3x") {
    // Class-concentrated Dirichlet items; the label permutation uses the
    // same scoring path, so the ratio isolates real structure.
    const int n_classes = 4, per_class = 50;
    Rng rng(33);
    std::vector<IndexedItem> items;
    std::vector<MapQuery> queries;
    for (int c = 0; c < n_classes; ++c) {
        Eigen::VectorXd alpha = Eigen::VectorXd::Constant(n_classes, 0.2);
        alpha[c] = 8.0;
        for (int i = 0; i < per_class; ++i) {
            IndexedItem item;
            item.item_id = "img-" + std::to_string(c) + "-" + std::to_string(i);
            item.modality = Modality::image;
            item.distribution = rng.dirichlet(alpha);
            item.class_label = "c" + std::to_string(c);
            items.push_back(std::move(item));
        }
        for (int q = 0; q < 10; ++q) {
            queries.push_back({rng.dirichlet(alpha), "c" + std::to_string(c), Modality::image});
        }
    }
    const auto structured = map_score(build_index(items), queries);

    double permuted_total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto permuted_items = items;
        std::vector<std::string> labels;
        for (const auto& item : permuted_items) labels.push_back(item.class_label);
        Rng perm_rng(100 + seed);
        perm_rng.shuffle(labels);
        for (std::size_t i = 0; i < permuted_items.size(); ++i) {
            permuted_items[i].class_label = labels[i];
        }
        permuted_total += map_score(build_index(permuted_items), queries).map;
    }
    const double permuted_map = permuted_total / 5.0;
    CHECK(structured.map >= 3.0 * permuted_map);
}

namespace {

// Two well-separated Gaussian blobs in 2-D.
void make_blobs(int per_class, Eigen::MatrixXd& features, std::vector<int>& labels,
                std::uint64_t seed) {
    Rng rng(seed);
    features.resize(2 * per_class, 2);
    labels.assign(static_cast<std::size_t>(2 * per_class), 0);
    for (int i = 0; i < per_class; ++i) {
        features(i, 0) = 3.0 + 0.3 * rng.normal();
        features(i, 1) = 3.0 + 0.3 * rng.normal();
        labels[static_cast<std::size_t>(i)] = 0;
        features(per_class + i, 0) = -3.0 + 0.3 * rng.normal();
        features(per_class + i, 1) = -3.0 + 0.3 * rng.normal();
        labels[static_cast<std::size_t>(per_class + i)] = 1;
    }
}

}  // namespace

TEST_CASE("linear probe separates clean blobs perfectly") {
    Eigen::MatrixXd features;
    std::vector<int> labels;
    make_blobs(60, features, labels, 5);
    ProbeConfig config;
    config.split_seed = 1;
    const auto result = linear_probe(features, labels, 2, config);
    CHECK(result.mean_ap == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("linear probe on shuffled labels collapses to the class prior") {
    Eigen::MatrixXd features;
    std::vector<int> labels;
    make_blobs(100, features, labels, 6);
    Rng rng(7);
    rng.shuffle(labels);
    ProbeConfig config;
    config.split_seed = 2;
    const auto result = linear_probe(features, labels, 2, config);
    CHECK(std::abs(result.mean_ap - 0.5) < 0.1);  // balanced classes: prior 0.5
}

TEST_CASE("informative features beat noise of the same dimension per class") {
    // Features carrying the class-concentrated distribution versus pure
    // Gaussian noise, judged by the same probe.
    const int n_classes = 3, per_class = 60;
    Rng rng(8);
    Eigen::MatrixXd informative(n_classes * per_class, n_classes);
    Eigen::MatrixXd noise(n_classes * per_class, n_classes);
    std::vector<int> labels(static_cast<std::size_t>(n_classes * per_class));
    int row = 0;
    for (int c = 0; c < n_classes; ++c) {
        Eigen::VectorXd alpha = Eigen::VectorXd::Constant(n_classes, 0.3);
        alpha[c] = 6.0;
        for (int i = 0; i < per_class; ++i, ++row) {
            informative.row(row) = rng.dirichlet(alpha).transpose();
            for (int d = 0; d < n_classes; ++d) noise(row, d) = rng.normal();
            labels[static_cast<std::size_t>(row)] = c;
        }
    }
    ProbeConfig config;
    config.split_seed = 3;
    const auto with_signal = linear_probe(informative, labels, n_classes, config);
    const auto with_noise = linear_probe(noise, labels, n_classes, config);
    for (int c = 0; c < n_classes; ++c) {
        CHECK(with_signal.per_class_ap[static_cast<std::size_t>(c)] >
              with_noise.per_class_ap[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("linear probe rejects degenerate inputs") {
    Eigen::MatrixXd features(4, 2);
    features << 1, 0, 0, 1, 1, 1, 0, 0;
    SUBCASE("class too small to split") {
        const std::vector<int> labels = {0, 0, 0, 1};
        CHECK_THROWS_AS(linear_probe(features, labels, 2, {}), DegenerateSplit);
    }
    SUBCASE("label count mismatch") {
        const std::vector<int> labels = {0, 1};
        CHECK_THROWS_AS(linear_probe(features, labels, 2, {}), DimensionMismatch);
    }
    SUBCASE("non-finite features") {
        Eigen::MatrixXd bad = features;
        bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
        const std::vector<int> labels = {0, 0, 1, 1};
        CHECK_THROWS_AS(linear_probe(bad, labels, 2, {}), InvalidHyperparameter);
    }
}

TEST_CASE("report files carry the expected rows") {
    test::TempDir tmp;
    SUBCASE("per-class table") {
        const auto path = tmp.path("per_class.csv");
        write_per_class_csv({{"birds", 0.5}, {"music", 0.25}}, path);
        CHECK(test::read_file(path) == "class,AP\nbirds,0.500000\nmusic,0.250000\n");
    }
    SUBCASE("summary table mirrors image/text/average") {
        const auto path = tmp.path("summary.csv");
        write_summary_csv(0.25, 0.75, path);
        CHECK(test::read_file(path) ==
              "query_modality,MAP\nImage Query,0.250000\nText Query,0.750000\nAverage,0.500000\n");
    }
}
