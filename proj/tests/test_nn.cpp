#include <cmath>
#include <filesystem>
#include <fstream>

#include "decfd/adam.hpp"
#include "decfd/checkpoint.hpp"
#include "decfd/errors.hpp"
#include "decfd/grad_check.hpp"
#include "decfd/graph.hpp"
#include "decfd/rng.hpp"
#include "decfd/tensor.hpp"
#include "doctest.h"

using namespace decfd;
using nn::Graph;
using nn::NodeId;
using nn::Param;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);
    CHECK(Tensor::scalar(3.5).item() == 3.5);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK(!t.all_finite());
}

TEST_CASE("affine identity and zero input") {
    Graph g;
    Param W("w", Tensor({2, 2}, {1, 0, 0, 1}));
    Param b("b", Tensor({2}, {0, 0}));
    const NodeId x = g.input(Tensor({2}, {3.0, -1.5}));
    const NodeId y = g.affine(x, g.param(W), g.param(b));
    CHECK(g.value(y)[0] == 3.0);
    CHECK(g.value(y)[1] == -1.5);

    Param b2("b2", Tensor({2}, {0.5, -2.0}));
    const NodeId zero = g.input(Tensor({2}));
    const NodeId y2 = g.affine(zero, g.param(W), g.param(b2));
    CHECK(g.value(y2)[0] == 0.5);
    CHECK(g.value(y2)[1] == -2.0);
}

TEST_CASE("affine random case vs dense multiply oracle") {
    Rng rng(11);
    Param W("w", random_tensor({3, 2}, rng));
    Param b("b", random_tensor({3}, rng));
    const Tensor x = random_tensor({2}, rng);
    Graph g;
    const NodeId y = g.affine(g.input(x), g.param(W), g.param(b));
    for (std::size_t i = 0; i < 3; ++i) {
        double expect = b.value[i];
        for (std::size_t j = 0; j < 2; ++j) expect += W.value.at(i, j) * x[j];
        CHECK(g.value(y)[i] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("activation closed forms") {
    Graph g;
    const NodeId x = g.input(Tensor({1}, {0.0}));
    CHECK(g.value(g.softplus(x)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(g.value(g.sigmoid(x)).item() == 0.5);
    const NodeId two = g.input(Tensor({2}, {0.0, 0.0}));
    const NodeId sm = g.softmax(two);
    CHECK(g.value(sm)[0] == 0.5);
    CHECK(g.value(sm)[1] == 0.5);
}

TEST_CASE("softmax rows are simplices") {
    Rng rng(5);
    Graph g;
    const NodeId x = g.input(random_tensor({7, 9}, rng, 8.0));
    const NodeId sm = g.softmax_rows(x);
    for (std::size_t i = 0; i < 7; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 9; ++j) {
            const double v = g.value(sm).at(i, j);
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("gradients of every op match finite differences") {
    Rng rng(42);
    Param W("w", random_tensor({4, 3}, rng));
    Param b("b", random_tensor({4}, rng));
    Param M("m", random_tensor({5, 4}, rng));
    Param g2("g2", Tensor({3}, {1.0, 1.1, 0.9}));
    Param g2b("g2b", random_tensor({3}, rng, 0.1));
    const Tensor x = random_tensor({3}, rng);
    const Tensor w = random_tensor({4}, rng);
    const Tensor X2 = random_tensor({2, 3}, rng);
    std::vector<Param*> params = {&W, &b, &M, &g2, &g2b};

    SUBCASE("affine + activations chain") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId a = g.affine(g.input(x), g.param(W), g.param(b));
            const NodeId h =
                g.add(g.mul(g.softplus(a), g.sigmoid(a)), g.add(g.tanh(a), g.relu(a)));
            const NodeId out = g.weighted_sum(g.square(h), w);
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b}) < 1e-6);
    }
    SUBCASE("softmax / log_softmax") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId a = g.affine(g.input(x), g.param(W), g.param(b));
            const NodeId out =
                g.add(g.weighted_sum(g.softmax(a), w), g.weighted_sum(g.log_softmax(a), w));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b}) < 1e-6);
    }
    SUBCASE("log_softmax_rows") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId ar = g.affine_rows(g.input(X2), g.param(W), g.param(b));  // [2 x 4]
            const NodeId ls = g.log_softmax_rows(ar);
            const NodeId out = g.sum(g.mul(ls, ls));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b}) < 1e-6);
        Graph g;
        const NodeId ls = g.log_softmax_rows(g.input(random_tensor({3, 5}, rng, 4.0)));
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) s += std::exp(g.value(ls).at(i, j));
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("matrix ops") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId X = g.input(X2);
            const NodeId ar = g.affine_rows(X, g.param(W), g.param(b));  // [2 x 4]
            const NodeId mm = g.matmul_nt(ar, g.gather_rows(g.param(M), {0, 2, 4}));  // [2x3]?
            // gather_rows(M,[0,2,4]) is [3 x 4]; ar [2 x 4]; matmul_nt -> [2 x 3]
            const NodeId sm = g.softmax_rows(mm);
            const NodeId out = g.add(g.sum(g.row_sums(sm)), g.sum(g.row(ar, 1)));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b, &M}) < 1e-6);
    }
    SUBCASE("matmul, concat, slices, repeat") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId m = g.param(M);              // [5 x 4]
            const NodeId a = g.slice_cols(m, 0, 2);   // [5 x 2]
            const NodeId bb = g.slice_cols(m, 2, 2);  // [5 x 2]
            const NodeId sq = g.matmul_nt(a, bb);     // [5 x 5]
            const NodeId prod = g.matmul(sq, bb);     // [5 x 2]
            const NodeId cat = g.concat_cols(prod, a);  // [5 x 4]
            const NodeId rep = g.repeat_row(g.row(cat, 0), 5);
            const NodeId vec = g.concat(g.row(cat, 1), g.row(rep, 2));
            const NodeId out = g.add(g.sum(g.mul(cat, rep)), g.sum(vec));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&M}) < 1e-6);
    }
    SUBCASE("layer norm") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId X = g.input(X2);
            const NodeId ln = g.layer_norm_rows(X, g.param(g2), g.param(g2b), 1e-5);
            const NodeId W3 = g.gather_rows(g.param(W), {0, 1, 2});  // [3 x 3]
            const NodeId out = g.sum(g.matmul(ln, W3));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&g2, &g2b, &W}) < 1e-6);
    }
    SUBCASE("div, scale_by, sqrt, clamp, exp, dot") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId a = g.affine(g.input(x), g.param(W), g.param(b));  // [4]
            const NodeId pos = g.add_scalar(g.square(a), 0.3);
            const NodeId r = g.div(a, g.sqrt(pos));
            const NodeId cl = g.clamp(r, -0.8, 0.8);
            const NodeId sc = g.scale_by(cl, g.dot(a, a));
            const NodeId out = g.add(g.mean(g.exp(g.scale(sc, 0.01))), g.sum(cl));
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b}) < 1e-6);
    }
    SUBCASE("bce_with_logits") {
        auto fn = [&]() {
            for (Param* p : params) p->zero_grad();
            Graph g;
            const NodeId a = g.affine(g.input(x), g.param(W), g.param(b));
            const NodeId logit = g.sum(a);
            const NodeId out = g.bce_with_logits(logit, 1.0);
            g.backward(out);
            return g.value(out).item();
        };
        CHECK(nn::grad_check(fn, {&W, &b}) < 1e-6);
    }
}

TEST_CASE("quadratic grad_check is near exact") {
    Param w("w", Tensor({1}, {1.0}));
    auto fn = [&]() {
        w.zero_grad();
        Graph g;
        const NodeId out = g.square(g.param(w));
        g.backward(out);
        return g.value(out).item();
    };
    CHECK(nn::grad_check(fn, {&w}) < 1e-8);
}

TEST_CASE("backward accumulates into params across graphs") {
    Param w("w", Tensor({1}, {2.0}));
    Graph g1;
    g1.backward(g1.square(g1.param(w)));
    CHECK(w.grad[0] == doctest::Approx(4.0));
    Graph g2;
    g2.backward(g2.square(g2.param(w)));
    CHECK(w.grad[0] == doctest::Approx(8.0));  // accumulated
    w.zero_grad();
    CHECK(w.grad[0] == 0.0);
}

TEST_CASE("value checks trap non-finite values when enabled") {
    const bool was = Graph::value_checks();
    Graph::set_value_checks(true);
    Graph g;
    const NodeId x = g.input(Tensor({1}, {1e308}));
    CHECK_THROWS(g.exp(x));
    Graph::set_value_checks(was);
}

TEST_CASE("adam zero grad and first step") {
    SUBCASE("zero grad, zero decay leaves params unchanged") {
        Param w("w", Tensor({2}, {1.0, -2.0}));
        nn::Adam adam({&w}, {0.1, 0.9, 0.999, 1e-8, 0.0});
        adam.zero_grad();
        adam.step();
        CHECK(w.value[0] == 1.0);
        CHECK(w.value[1] == -2.0);
    }
    SUBCASE("first step moves by about lr") {
        Param w("w", Tensor({1}, {1.0}));
        nn::Adam adam({&w}, {0.01, 0.9, 0.999, 1e-8, 0.0});
        w.grad[0] = 1.0;
        adam.step();
        CHECK(w.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    }
}

TEST_CASE("adam 10 steps on f(w)=w^2 matches scripted trace") {
    Param w("w", Tensor({1}, {1.0}));
    nn::AdamConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
    nn::Adam adam({&w}, cfg);

    // independent transcription of the update equations
    double ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        const double g = 2.0 * ref;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / (1.0 - std::pow(cfg.beta1, t));
        const double vhat = v / (1.0 - std::pow(cfg.beta2, t));
        ref -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);

        w.zero_grad();
        Graph gr;
        gr.backward(gr.square(gr.param(w)));
        adam.step();
    }
    CHECK(w.value[0] == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("adam updates are order-independent across params") {
    Rng rng(44);
    Param a1("a", random_tensor({6}, rng)), b1("b", random_tensor({4}, rng));
    Param a2 = a1, b2 = b1;
    const Tensor ga = random_tensor({6}, rng), gb = random_tensor({4}, rng);
    nn::Adam fwd({&a1, &b1}, {0.05, 0.9, 0.999, 1e-8, 1e-4});
    nn::Adam rev({&b2, &a2}, {0.05, 0.9, 0.999, 1e-8, 1e-4});
    for (int t = 0; t < 5; ++t) {
        for (std::size_t i = 0; i < 6; ++i) a1.grad[i] = a2.grad[i] = ga[i];
        for (std::size_t i = 0; i < 4; ++i) b1.grad[i] = b2.grad[i] = gb[i];
        fwd.step();
        rev.step();
    }
    for (std::size_t i = 0; i < 6; ++i) CHECK(a1.value[i] == a2.value[i]);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b1.value[i] == b2.value[i]);
}

TEST_CASE("adam applies weight decay as grad-added L2") {
    Param w("w", Tensor({1}, {2.0}));
    nn::Adam adam({&w}, {0.1, 0.9, 0.999, 1e-8, 0.5});
    // zero gradient: effective grad = 0.5 * 2.0 = 1.0, first step ~ lr
    adam.step();
    CHECK(w.value[0] == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("checkpoint round trip is byte identical") {
    namespace fs = std::filesystem;
    Rng rng(77);
    const fs::path dir = fs::temp_directory_path() / "decfd_ckpt_test";
    fs::create_directories(dir);

    std::vector<nn::NamedTensor> tensors;
    tensors.push_back({"alpha", random_tensor({3, 4}, rng), nn::Dtype::f64});
    tensors.push_back({"beta/scalar", Tensor::scalar(-0.25), nn::Dtype::f64});
    tensors.push_back({"gamma32", random_tensor({7}, rng), nn::Dtype::f32});

    const fs::path p1 = dir / "a.ckpt";
    const fs::path p2 = dir / "b.ckpt";
    nn::save_checkpoint(p1, tensors);
    auto loaded = nn::load_checkpoint(p1);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].name == "alpha");
    CHECK(loaded[0].tensor.shape() == std::vector<std::size_t>({3, 4}));
    CHECK(loaded[2].dtype == nn::Dtype::f32);
    nn::save_checkpoint(p2, loaded);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(p1) == slurp(p2));

    // f64 payload survives exactly
    for (std::size_t i = 0; i < tensors[0].tensor.size(); ++i) {
        CHECK(loaded[0].tensor[i] == tensors[0].tensor[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects corrupt input") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "decfd_bad.ckpt";
    {
        std::ofstream out(p, std::ios::binary);
        out << "NOPE0000";
    }
    CHECK_THROWS_AS((void)nn::load_checkpoint(p), CheckpointError);
    fs::remove(p);
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(9);
    double mean = 0.0, var = 0.0;
    const int n = 200000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = r.normal();
        mean += xs[i];
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));

    auto d = r.dirichlet({0.5, 0.5, 0.5});
    double s = 0.0;
    for (double x : d) {
        CHECK(x >= 0.0);
        s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}
