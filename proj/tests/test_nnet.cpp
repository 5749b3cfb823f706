#include <doctest.h>

#include <cmath>

#include "cmr/nnet.hpp"
#include "cmr/rng.hpp"
#include "helpers.hpp"

using namespace cmr;

namespace {

Eigen::MatrixXd random_simplex_rows(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        m.row(r) = rng.dirichlet_symmetric(cols, 0.7).transpose();
    }
    return m;
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

void zero_params(Network& net) {
    for (auto& layer : net.trunk) {
        std::visit(
            [](auto& l) {
                l.weight.setZero();
                l.bias.setZero();
            },
            layer);
    }
    net.head_global.weight.setZero();
    net.head_global.bias.setZero();
    net.head_local.weight.setZero();
    net.head_local.bias.setZero();
}

}  // namespace

TEST_CASE("forward with all-zero parameters outputs 0.5 everywhere") {
    auto net = make_mlp(4, {6}, 3, 1);
    zero_params(net);
    const auto cache = forward(net, random_matrix(5, 4, 2));
    CHECK((cache.global_out.array() == 0.5).all());
    CHECK((cache.local_out.array() == 0.5).all());
}

TEST_CASE("identity head on a basis vector gives logistic(1)") {
    // No trunk; both heads are the identity map, so output j = logistic(e_1[j]).
    auto net = make_mlp(3, {}, 3, 1);
    net.head_global.weight.setIdentity();
    net.head_global.bias.setZero();
    net.head_local.weight.setIdentity();
    net.head_local.bias.setZero();

    Eigen::MatrixXd input = Eigen::MatrixXd::Zero(1, 3);
    input(0, 1) = 1.0;
    const auto cache = forward(net, input);
    CHECK(cache.global_out(0, 1) == doctest::Approx(0.7310585786).epsilon(1e-9));
    CHECK(cache.global_out(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cache.local_out(0, 1) == doctest::Approx(0.7310585786).epsilon(1e-9));
}

TEST_CASE("identical batch rows produce identical outputs") {
    const auto net = make_mlp(5, {7, 4}, 3, 9);
    Eigen::MatrixXd batch = random_matrix(1, 5, 3).replicate(6, 1);
    const auto cache = forward(net, batch);
    for (int r = 1; r < 6; ++r) {
        CHECK(cache.global_out.row(r) == cache.global_out.row(0));
        CHECK(cache.local_out.row(r) == cache.local_out.row(0));
    }
}

TEST_CASE("forward rejects mismatched input width") {
    const auto net = make_mlp(5, {4}, 2, 1);
    CHECK_THROWS_AS(forward(net, random_matrix(2, 4, 1)), DimensionMismatch);
}

TEST_CASE("loss reproduces hand-computed values") {
    SUBCASE("K=1, t=1, o=0.5 gives ln 2 per head") {
        Eigen::MatrixXd o(1, 1), t(1, 1);
        o << 0.5;
        t << 1.0;
        CHECK(loss(o, o, t, t) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("K=2, t=[1,0], o=[0.9,0.1] gives -2 ln 0.9 per head") {
        Eigen::MatrixXd o(1, 2), t(1, 2);
        o << 0.9, 0.1;
        t << 1.0, 0.0;
        const double expected = -2.0 * std::log(0.9);
        CHECK(loss(o, o, t, t) == doctest::Approx(2.0 * expected).epsilon(1e-12));
        CHECK(head_loss(o, t) == doctest::Approx(0.2107).epsilon(1e-3));
    }
    SUBCASE("t = o attains the binary-entropy minimum") {
        const Eigen::MatrixXd t = random_simplex_rows(3, 4, 5);
        const double at_target = head_loss(t, t);
        Eigen::MatrixXd perturbed = t;
        perturbed.array() += 0.05;
        CHECK(at_target < head_loss(perturbed, t));
        Eigen::MatrixXd down = t;
        down.array() *= 0.8;
        CHECK(at_target < head_loss(down, t));
    }
}

TEST_CASE("head gradient vanishes when outputs equal targets") {
    auto net = make_mlp(3, {}, 2, 4);
    const Eigen::MatrixXd batch = random_matrix(4, 3, 6);
    auto cache = forward(net, batch);
    // Feed the network's own outputs back as targets.
    const auto grads = backward(net, cache, cache.global_out, cache.local_out);
    CHECK(grads.weights[0].cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(grads.biases[1].cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("analytic gradients match central finite differences") {
    const Eigen::MatrixXd batch = random_matrix(4, 5, 11);
    const Eigen::MatrixXd tg = random_simplex_rows(4, 3, 12);
    const Eigen::MatrixXd tl = random_simplex_rows(4, 3, 13);
    SUBCASE("dense trunk, sigmoid loss") {
        const auto net = make_mlp(5, {8}, 3, 21);
        CHECK(grad_check(net, batch, tg, tl, 1e-5) < 1e-5);
    }
    SUBCASE("dense trunk, softmax loss") {
        const auto net = make_mlp(5, {8}, 3, 22, LossKind::softmax_cross_entropy);
        CHECK(grad_check(net, batch, tg, tl, 1e-5) < 1e-5);
    }
    SUBCASE("convolutional trunk") {
        // 2-channel 4x4 raster input, 3 filters of 2x2, then a dense layer.
        ConvSpec spec{2, 4, 4, 3, 2, 2};
        const auto net = make_conv_net(spec, {6}, 3, 23);
        const Eigen::MatrixXd raster = random_matrix(3, 32, 14);
        const Eigen::MatrixXd g = random_simplex_rows(3, 3, 15);
        const Eigen::MatrixXd l = random_simplex_rows(3, 3, 16);
        CHECK(grad_check(net, raster, g, l, 1e-5) < 1e-5);
    }
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
    const auto net = make_mlp(4, {5}, 2, 31);
    const Eigen::MatrixXd batch = random_matrix(3, 4, 32);
    const Eigen::MatrixXd tg = random_simplex_rows(3, 2, 33);
    const Eigen::MatrixXd tl = random_simplex_rows(3, 2, 34);

    const auto single = backward(net, forward(net, batch), tg, tl);

    Eigen::MatrixXd batch2(6, 4), tg2(6, 2), tl2(6, 2);
    batch2 << batch, batch;
    tg2 << tg, tg;
    tl2 << tl, tl;
    const auto doubled = backward(net, forward(net, batch2), tg2, tl2);

    for (std::size_t i = 0; i < single.weights.size(); ++i) {
        CHECK((single.weights[i] - doubled.weights[i]).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((single.biases[i] - doubled.biases[i]).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("learning-rate schedule follows the step decay") {
    const auto net = make_mlp(2, {}, 2, 1);
    auto opt = make_optimizer(net, 0.001, 0.1, 200000, 0.9);
    CHECK(opt.learning_rate_at(0) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(opt.learning_rate_at(199999) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(opt.learning_rate_at(200000) == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(opt.learning_rate_at(400000) == doctest::Approx(0.00001).epsilon(1e-12));
}

TEST_CASE("sgd without momentum is a plain gradient step") {
    auto net = make_mlp(3, {}, 2, 7);
    const Eigen::MatrixXd w_before = net.head_global.weight;
    auto opt = make_optimizer(net, 0.001, 0.1, 200000, 0.0);

    const Eigen::MatrixXd batch = random_matrix(2, 3, 8);
    const Eigen::MatrixXd tg = random_simplex_rows(2, 2, 9);
    const Eigen::MatrixXd tl = random_simplex_rows(2, 2, 10);
    const auto grads = backward(net, forward(net, batch), tg, tl);
    sgd_step(net, grads, opt);

    const Eigen::MatrixXd expected = w_before - 0.001 * grads.weights[0];
    CHECK((net.head_global.weight - expected).cwiseAbs().maxCoeff() < 1e-18);
    CHECK(opt.iteration == 1);
}

TEST_CASE("velocity decays geometrically once gradients vanish") {
    auto net = make_mlp(2, {}, 2, 3);
    auto opt = make_optimizer(net, 0.01, 0.1, 1000000, 0.9);

    Gradients grads;
    grads.weights = {Eigen::MatrixXd::Constant(2, 2, 1.0), Eigen::MatrixXd::Zero(2, 2)};
    grads.biases = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    sgd_step(net, grads, opt);
    const double v0 = opt.velocity_w[0](0, 0);
    CHECK(v0 == doctest::Approx(-0.01).epsilon(1e-12));

    Gradients zeros = grads;
    zeros.weights[0].setZero();
    double expected = v0;
    for (int step = 0; step < 3; ++step) {
        sgd_step(net, zeros, opt);
        expected *= 0.9;
        CHECK(opt.velocity_w[0](0, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("grad_check behaves like the oracle it is") {
    const Eigen::MatrixXd batch = random_matrix(4, 5, 41);
    const Eigen::MatrixXd tg = random_simplex_rows(4, 3, 42);
    const Eigen::MatrixXd tl = random_simplex_rows(4, 3, 43);
    const auto net = make_mlp(5, {8}, 3, 44);

    SUBCASE("zero inputs and zero targets give zero error") {
        auto zeroed = make_mlp(5, {8}, 3, 45);
        zero_params(zeroed);
        // With zero weights the loss is constant in the input-side weights;
        // analytic and numeric gradients agree (bias gradients are equal and
        // non-zero, weight gradients are both zero).
        const Eigen::MatrixXd zbatch = Eigen::MatrixXd::Zero(2, 5);
        const Eigen::MatrixXd zt = Eigen::MatrixXd::Constant(2, 3, 0.5);
        CHECK(grad_check(zeroed, zbatch, zt, zt, 1e-5) < 1e-7);
    }
    SUBCASE("coarse epsilon is strictly worse") {
        const double fine = grad_check(net, batch, tg, tl, 1e-5);
        const double coarse = grad_check(net, batch, tg, tl, 1e-1);
        CHECK(fine < 1e-5);
        CHECK(coarse > fine);
    }
}

TEST_CASE("full-batch descent yields non-increasing loss for 100 steps") {
    Rng rng(51);
    const int n = 50;
    Eigen::MatrixXd batch(n, 6);
    Eigen::MatrixXd tg(n, 3), tl(n, 3);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < 6; ++c) batch(r, c) = rng.normal();
        tg.row(r) = rng.dirichlet_symmetric(3, 0.5).transpose();
        tl.row(r) = rng.dirichlet_symmetric(3, 0.5).transpose();
    }
    auto net = make_mlp(6, {8}, 3, 52);
    auto opt = make_optimizer(net, 0.01, 0.1, 1000000, 0.0);

    double previous = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 100; ++step) {
        const auto cache = forward(net, batch);
        const double current = loss(cache.global_out, cache.local_out, tg, tl);
        CHECK(current <= previous + 1e-12);
        previous = current;
        sgd_step(net, backward(net, cache, tg, tl), opt);
    }
}

TEST_CASE("read_ppm parses P6 and normalizes to [0,1]") {
    test::TempDir tmp;
    const auto path = tmp.path("img.ppm");
    SUBCASE("valid file") {
        // 2x1 image: red pixel then mid-gray.
        std::string data = "P6\n# comment\n2 1\n255\n";
        const unsigned char pixels[6] = {255, 0, 0, 128, 128, 128};
        data.append(reinterpret_cast<const char*>(pixels), 6);
        test::write_file(path, data);

        const auto v = read_ppm(path);
        REQUIRE(v.size() == 6);
        CHECK(v[0] == doctest::Approx(1.0));
        CHECK(v[1] == doctest::Approx(0.0));
        CHECK(v[3] == doctest::Approx(128.0 / 255.0));
    }
    SUBCASE("wrong magic") {
        test::write_file(path, "P3\n2 1\n255\n1 2 3 4 5 6\n");
        CHECK_THROWS_AS(read_ppm(path), UnsupportedFormat);
    }
    SUBCASE("unsupported max value") {
        test::write_file(path, "P6\n2 1\n65535\n");
        CHECK_THROWS_AS(read_ppm(path), UnsupportedFormat);
    }
    SUBCASE("truncated pixel data") {
        std::string data = "P6\n2 1\n255\n";
        data.append(3, '\0');
        test::write_file(path, data);
        CHECK_THROWS_AS(read_ppm(path), TruncatedFile);
    }
}

TEST_CASE("checkpoints restore the exact network and optimizer") {
    test::TempDir tmp;
    ConvSpec spec{1, 4, 4, 2, 3, 3};
    auto net = make_conv_net(spec, {5}, 3, 61);
    auto opt = make_optimizer(net, 0.002, 0.5, 1000, 0.8);

    // Take one step so the optimizer has non-trivial state.
    const Eigen::MatrixXd batch = random_matrix(2, 16, 62);
    const Eigen::MatrixXd tg = random_simplex_rows(2, 3, 63);
    const Eigen::MatrixXd tl = random_simplex_rows(2, 3, 64);
    sgd_step(net, backward(net, forward(net, batch), tg, tl), opt);

    const auto path = tmp.path("net.bin");
    save_checkpoint(net, opt, path);
    const auto restored = load_checkpoint(path);

    CHECK(restored.net.input_dim == net.input_dim);
    CHECK(restored.net.topics == net.topics);
    CHECK(restored.opt.iteration == 1);
    CHECK(restored.opt.momentum == 0.8);
    const auto a = forward(net, batch);
    const auto b = forward(restored.net, batch);
    CHECK(a.global_out == b.global_out);
    CHECK(a.local_out == b.local_out);

    // Byte-identical re-save.
    const auto path2 = tmp.path("net2.bin");
    save_checkpoint(restored.net, restored.opt, path2);
    CHECK(test::read_file(path) == test::read_file(path2));
}
