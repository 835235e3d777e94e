#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "n2f/adam.hpp"
#include "n2f/fft.hpp"
#include "n2f/graph.hpp"
#include "n2f/layers.hpp"
#include "n2f/ops.hpp"
#include "n2f/rng.hpp"
#include "n2f/tensor.hpp"

using namespace n2f;

TEST_CASE("tensor shape and data invariants") {
    Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
    CHECK(t.volume() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.at2(1, 2) == 6.0f);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>{1, 2}), ConfigError);
    CHECK_THROWS_AS(Tensor({0, 3}), ConfigError);
    Tensor s = Tensor::scalar(4.5f);
    CHECK(s.rank() == 0);
    CHECK(s.volume() == 1);
    CHECK(s[0] == 4.5f);
}

TEST_CASE("rng streams are seed-deterministic and statistically sane") {
    Rng a(42), b(42), c(7);
    for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 10; ++i)
        if (a2.uniform() != c.uniform()) differs = true;
    CHECK(differs);

    Rng r(1);
    double sum = 0, sum2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        sum += v;
        sum2 += v * v;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);

    Rng u(2);
    int counts[10] = {0};
    for (int i = 0; i < 100000; ++i) ++counts[u.uniform_index(10)];
    for (int k = 0; k < 10; ++k) CHECK(std::abs(counts[k] - 10000) < 500);
}

TEST_CASE("fft magnitude: analytic signals") {
    const int64_t L = 256;
    SUBCASE("pure cosine at an exact bin reads back its amplitude") {
        const int k = 17;
        const double A = 1.8;
        std::vector<double> x(L);
        for (int64_t i = 0; i < L; ++i)
            x[i] = A * std::cos(2.0 * M_PI * k * static_cast<double>(i) / L);
        auto mag = fft_magnitude(x);
        CHECK(mag.size() == static_cast<size_t>(L / 2 + 1));
        CHECK(mag[k] == doctest::Approx(A).epsilon(1e-9));
        CHECK(mag[k + 5] == doctest::Approx(0.0).epsilon(1e-9));
        int argmax = 0;
        for (size_t i = 1; i < mag.size(); ++i)
            if (mag[i] > mag[argmax]) argmax = static_cast<int>(i);
        CHECK(argmax == k);
    }
    SUBCASE("constant signal concentrates at DC") {
        std::vector<double> x(L, 3.25);
        auto mag = fft_magnitude(x);
        CHECK(mag[0] == doctest::Approx(3.25).epsilon(1e-12));
        for (size_t i = 1; i < mag.size(); ++i) CHECK(std::abs(mag[i]) < 1e-9);
    }
}

TEST_CASE("fft magnitude matches a direct DFT on a non-power-of-two burst") {
    const int64_t L = 200;
    Rng rng(9);
    std::vector<double> x(L);
    for (auto& v : x) v = rng.normal();
    auto mag = fft_magnitude(x);

    // Independent quadratic-time DFT of the zero-padded signal, same scaling.
    const int64_t P = 256;
    std::vector<double> ref(P / 2 + 1);
    for (int64_t k = 0; k <= P / 2; ++k) {
        double re = 0, im = 0;
        for (int64_t i = 0; i < L; ++i) {
            const double ang = -2.0 * M_PI * k * i / static_cast<double>(P);
            re += x[i] * std::cos(ang);
            im += x[i] * std::sin(ang);
        }
        const double scl = (k == 0 || k == P / 2) ? 1.0 / L : 2.0 / L;
        ref[k] = std::hypot(re, im) * scl;
    }
    CHECK(mag.size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) CHECK(mag[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("conv1d hand examples") {
    GraphT<float> g;
    SUBCASE("identity kernel passes the signal through") {
        int x = g.constant(Tensor({1, 3}, std::vector<float>{1, 2, 3}));
        int w = g.constant(Tensor({1, 1, 1}, std::vector<float>{1}));
        int y = conv1d(g, x, w, -1, 1, 0);
        CHECK(g.val(y).shape() == std::vector<int64_t>{1, 3});
        CHECK(g.val(y)[0] == 1.0f);
        CHECK(g.val(y)[1] == 2.0f);
        CHECK(g.val(y)[2] == 3.0f);
    }
    SUBCASE("unit impulse with stride 2 reads out kernel taps") {
        int x = g.constant(Tensor({1, 4}, std::vector<float>{1, 0, 0, 0}));
        int w = g.constant(Tensor({1, 1, 2}, std::vector<float>{2.5f, -1.5f}));
        int y = conv1d(g, x, w, -1, 2, 0);
        CHECK(g.val(y).shape() == std::vector<int64_t>{1, 2});
        CHECK(g.val(y)[0] == 2.5f);
        CHECK(g.val(y)[1] == 0.0f);
    }
    SUBCASE("invalid output length is a configuration error") {
        int x = g.constant(Tensor({1, 3}, std::vector<float>{1, 2, 3}));
        int w = g.constant(Tensor({1, 1, 5}, std::vector<float>{1, 1, 1, 1, 1}));
        CHECK_THROWS_AS(conv1d(g, x, w, -1, 1, 0), ConfigError);
    }
}

TEST_CASE("conv_transpose1d hand examples") {
    GraphT<float> g;
    SUBCASE("a single tap spreads the kernel") {
        int x = g.constant(Tensor({1, 1}, std::vector<float>{1}));
        int w = g.constant(Tensor({1, 1, 2}, std::vector<float>{0.5f, -2.0f}));
        int y = conv_transpose1d(g, x, w, -1, 1, 0);
        CHECK(g.val(y).shape() == std::vector<int64_t>{1, 2});
        CHECK(g.val(y)[0] == 0.5f);
        CHECK(g.val(y)[1] == -2.0f);
    }
    SUBCASE("stride 2 with kernel 4 pad 1 doubles the length") {
        int x = g.constant(Tensor({1, 4}, 1.0f));
        int w = g.constant(Tensor({1, 1, 4}, 0.25f));
        int y = conv_transpose1d(g, x, w, -1, 2, 1);
        CHECK(g.val(y).shape() == std::vector<int64_t>{1, 8});
    }
}

TEST_CASE("conv adjoint identity on one fixed shape") {
    Rng rng(11);
    const int64_t cin = 3, cout = 2, L = 16, K = 4, stride = 2, pad = 1;
    GraphT<float> g;
    Tensor xt({cin, L}), wt({cout, cin, K});
    for (int64_t i = 0; i < xt.volume(); ++i) xt[i] = static_cast<float>(rng.normal());
    for (int64_t i = 0; i < wt.volume(); ++i) wt[i] = static_cast<float>(rng.normal());
    int x = g.constant(xt);
    int w = g.constant(wt);
    int cx = conv1d(g, x, w, -1, stride, pad);
    const int64_t lo = g.val(cx).dim(1);
    Tensor yt({cout, lo});
    for (int64_t i = 0; i < yt.volume(); ++i) yt[i] = static_cast<float>(rng.normal());
    int y = g.constant(yt);
    int ty = conv_transpose1d(g, y, w, -1, stride, pad);
    CHECK(g.val(ty).shape() == xt.shape());
    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < yt.volume(); ++i) lhs += double(g.val(cx)[i]) * double(yt[i]);
    for (int64_t i = 0; i < xt.volume(); ++i) rhs += double(xt[i]) * double(g.val(ty)[i]);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("maxpool1d examples") {
    GraphT<float> g;
    SUBCASE("hand example") {
        int x = g.constant(Tensor({1, 4}, std::vector<float>{1, 3, 2, 5}));
        int y = maxpool1d(g, x, 2, 2);
        CHECK(g.val(y)[0] == 3.0f);
        CHECK(g.val(y)[1] == 5.0f);
    }
    SUBCASE("constant input stays constant") {
        int x = g.constant(Tensor({2, 8}, 4.0f));
        int y = maxpool1d(g, x, 2);
        CHECK(g.val(y).shape() == std::vector<int64_t>{2, 4});
        for (int64_t i = 0; i < g.val(y).volume(); ++i) CHECK(g.val(y)[i] == 4.0f);
    }
    SUBCASE("window larger than length errors") {
        int x = g.constant(Tensor({1, 4}, 0.0f));
        CHECK_THROWS_AS(maxpool1d(g, x, 5), ConfigError);
    }
    SUBCASE("gradient routes to first argmax on ties") {
        GraphT<float> gt;
        int x = gt.input(Tensor({1, 4}, std::vector<float>{2, 2, 1, 1}), true);
        int y = maxpool1d(gt, x, 4);
        int loss = reduce_mean(gt, y);
        gt.backward(loss);
        CHECK(gt.grad(x)[0] == 1.0f);
        CHECK(gt.grad(x)[1] == 0.0f);
    }
}

TEST_CASE("activation examples") {
    GraphT<float> g;
    int x = g.constant(Tensor({3}, std::vector<float>{-1.0f, 0.0f, 2.0f}));
    int lr = leaky_relu(g, x, 0.2f);
    CHECK(g.val(lr)[0] == doctest::Approx(-0.2));
    CHECK(g.val(lr)[2] == doctest::Approx(2.0));
    int rl = relu(g, x);
    CHECK(g.val(rl)[0] == 0.0f);

    int z = g.constant(Tensor({1, 6}, 0.37f));
    int s = softmax(g, z);
    for (int64_t i = 0; i < 6; ++i) CHECK(g.val(s)[i] == doctest::Approx(1.0 / 6).epsilon(1e-6));

    // softmax rows sum to one even for extreme logits
    int big = g.constant(Tensor({2, 3}, std::vector<float>{1e6f, 0, -1e6f, 30, 29, 28}));
    int sb = softmax(g, big);
    for (int r = 0; r < 2; ++r) {
        float total = 0;
        for (int j = 0; j < 3; ++j) total += g.val(sb).at2(r, j);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
        for (int j = 0; j < 3; ++j) CHECK(std::isfinite(g.val(sb).at2(r, j)));
    }
}

TEST_CASE("no NaN/Inf escapes elementwise ops at extreme magnitudes") {
    GraphT<float> g;
    int x = g.input(Tensor({4}, std::vector<float>{1e6f, -1e6f, 1e-6f, 0.0f}), true);
    for (int id : {relu(g, x), leaky_relu(g, x, 0.2f), sigmoid_op(g, x), tanh_op(g, x)})
        CHECK(g.val(id).all_finite());
    int bce = sigmoid_cross_entropy(g, x, 1.0f);
    CHECK(g.val(bce).all_finite());
    g.backward(bce);
    CHECK(g.all_finite());
}

TEST_CASE("dropout contract") {
    Rng rng(3);
    SUBCASE("p = 0 and infer mode are identities") {
        GraphT<float> g(Mode::Train, &rng);
        int x = g.constant(Tensor({8}, 1.5f));
        CHECK(dropout(g, x, 0.0) == x);
        GraphT<float> gi(Mode::Infer, &rng);
        int xi = gi.constant(Tensor({8}, 1.5f));
        CHECK(dropout(gi, xi, 0.9) == xi);
    }
    SUBCASE("sample mode keeps dropout active; zero fraction near p") {
        GraphT<float> g(Mode::Sample, &rng);
        int x = g.constant(Tensor({100000}, 1.0f));
        int y = dropout(g, x, 0.5);
        REQUIRE(y != x);
        int64_t zeros = 0;
        for (int64_t i = 0; i < g.val(y).volume(); ++i)
            if (g.val(y)[i] == 0.0f) ++zeros;
        const double frac = double(zeros) / double(g.val(y).volume());
        CHECK(frac > 0.49);
        CHECK(frac < 0.51);
        // survivors are scaled by 1/(1-p)
        for (int64_t i = 0; i < 100; ++i) {
            float v = g.val(y)[i];
            CHECK((v == 0.0f || v == doctest::Approx(2.0f)));
        }
    }
    SUBCASE("p >= 1 rejected") {
        GraphT<float> g(Mode::Train, &rng);
        int x = g.constant(Tensor({4}, 1.0f));
        CHECK_THROWS_AS(dropout(g, x, 1.0), ConfigError);
    }
}

TEST_CASE("dense examples") {
    GraphT<float> g;
    SUBCASE("identity weights, zero bias") {
        int x = g.constant(Tensor({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}));
        Tensor wI({3, 3}, 0.0f);
        for (int i = 0; i < 3; ++i) wI.at2(i, i) = 1.0f;
        int w = g.constant(wI);
        int b = g.constant(Tensor({3}, 0.0f));
        int y = dense(g, x, w, b);
        for (int64_t i = 0; i < 6; ++i) CHECK(g.val(y)[i] == g.val(x)[i]);
    }
    SUBCASE("1x1 affine") {
        int x = g.constant(Tensor({1, 1}, std::vector<float>{3}));
        int w = g.constant(Tensor({1, 1}, std::vector<float>{2}));
        int b = g.constant(Tensor({1}, std::vector<float>{1}));
        int y = dense(g, x, w, b);
        CHECK(g.val(y)[0] == 7.0f);
    }
    SUBCASE("transposed form shares the weight tensor") {
        int x = g.constant(Tensor({1, 2}, std::vector<float>{1, 2}));
        int w = g.constant(Tensor({3, 2}, std::vector<float>{1, 2, 3, 4, 5, 6}));
        int y = dense(g, x, w, -1, true);  // x · wᵀ -> [1,3]
        CHECK(g.val(y).shape() == std::vector<int64_t>{1, 3});
        CHECK(g.val(y)[0] == doctest::Approx(5.0));   // 1*1+2*2
        CHECK(g.val(y)[1] == doctest::Approx(11.0));  // 1*3+2*4
        CHECK(g.val(y)[2] == doctest::Approx(17.0));  // 1*5+2*6
    }
}

TEST_CASE("batchnorm1d train-mode statistics") {
    Rng rng(5);
    GraphT<float> g(Mode::Train, &rng);
    const int64_t N = 4, C = 3, L = 50;
    Tensor xt({N, C, L});
    for (int64_t i = 0; i < xt.volume(); ++i)
        xt[i] = static_cast<float>(rng.normal(2.0, 3.0));
    int x = g.constant(xt);
    int gamma = g.constant(Tensor({C}, 1.0f));
    int beta = g.constant(Tensor({C}, 0.0f));
    Tensor rmean({C}, 0.0f), rvar({C}, 1.0f);
    int y = batchnorm1d(g, x, gamma, beta, &rmean, &rvar);
    for (int64_t c = 0; c < C; ++c) {
        double mean = 0, var = 0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t t = 0; t < L; ++t) mean += g.val(y).at3(n, c, t);
        mean /= double(N * L);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t t = 0; t < L; ++t) {
                double d = g.val(y).at3(n, c, t) - mean;
                var += d * d;
            }
        var /= double(N * L);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
    SUBCASE("already standardized input passes through with unit affine") {
        GraphT<float> g2(Mode::Train, &rng);
        Tensor zt({8, 1, 64});
        double m = 0, s2 = 0;
        for (int64_t i = 0; i < zt.volume(); ++i) zt[i] = static_cast<float>(rng.normal());
        for (int64_t i = 0; i < zt.volume(); ++i) m += zt[i];
        m /= double(zt.volume());
        for (int64_t i = 0; i < zt.volume(); ++i) s2 += (zt[i] - m) * (zt[i] - m);
        s2 /= double(zt.volume());
        for (int64_t i = 0; i < zt.volume(); ++i)
            zt[i] = static_cast<float>((zt[i] - m) / std::sqrt(s2));
        int z = g2.constant(zt);
        int ga = g2.constant(Tensor({1}, 1.0f));
        int be = g2.constant(Tensor({1}, 0.0f));
        Tensor rm({1}, 0.0f), rv({1}, 1.0f);
        int out = batchnorm1d(g2, z, ga, be, &rm, &rv);
        for (int64_t i = 0; i < zt.volume(); ++i)
            CHECK(g2.val(out)[i] == doctest::Approx(zt[i]).epsilon(5e-3));
    }
    SUBCASE("train mode with a single value per channel errors") {
        GraphT<float> g3(Mode::Train, &rng);
        int x1 = g3.constant(Tensor({1, 2, 1}, 1.0f));
        int ga = g3.constant(Tensor({2}, 1.0f));
        int be = g3.constant(Tensor({2}, 0.0f));
        Tensor rm({2}, 0.0f), rv({2}, 1.0f);
        CHECK_THROWS_AS(batchnorm1d(g3, x1, ga, be, &rm, &rv), NumericError);
    }
}

TEST_CASE("lstm degenerate behaviors") {
    Rng rng(6);
    SUBCASE("all-zero parameters and inputs give all-zero outputs") {
        ParamStoreT<float> store;
        LstmLayerT<float> lstm = LstmLayerT<float>::create(store, "lstm", 4, 3, rng);
        lstm.w->value.fill(0.0f);
        lstm.b->value.fill(0.0f);
        GraphT<float> g;
        int seq = g.constant(Tensor({2, 5, 4}, 0.0f));
        int out = lstm.forward(g, seq);
        CHECK(g.val(out).shape() == std::vector<int64_t>{2, 5, 3});
        for (int64_t i = 0; i < g.val(out).volume(); ++i) CHECK(g.val(out)[i] == 0.0f);
    }
    SUBCASE("saturated forget gate preserves the cell state") {
        ParamStoreT<float> store;
        LstmLayerT<float> lstm = LstmLayerT<float>::create(store, "lstm", 2, 3, rng);
        lstm.w->value.fill(0.0f);
        lstm.b->value.fill(0.0f);
        // forget-gate bias (second gate block) to +20, input gate to -20
        for (int64_t j = 0; j < 3; ++j) {
            lstm.b->value[0 * 3 + j] = -20.0f;  // input gate shut
            lstm.b->value[1 * 3 + j] = 20.0f;   // forget gate open
        }
        GraphT<float> g;
        int seq = g.constant(Tensor({1, 5, 2}, 0.3f));
        Tensor c0t({1, 3}, std::vector<float>{0.7f, -0.4f, 1.1f});
        int h0 = g.constant(Tensor({1, 3}, 0.0f));
        int c0 = g.constant(c0t);
        int c_final = -1, h_final = -1;
        lstm.forward_state(g, seq, h0, c0, &h_final, &c_final);
        for (int64_t j = 0; j < 3; ++j)
            CHECK(std::abs(g.val(c_final)[j] - c0t[j]) < 1e-6);
    }
}

TEST_CASE("loss values") {
    GraphT<float> g;
    SUBCASE("sigmoid cross-entropy anchors") {
        int z0 = g.constant(Tensor({4}, 0.0f));
        int l = sigmoid_cross_entropy(g, z0, 0.5f);
        CHECK(g.val(l)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
        int zbig = g.constant(Tensor({4}, 30.0f));
        int l2 = sigmoid_cross_entropy(g, zbig, 1.0f);
        CHECK(g.val(l2)[0] < 1e-12);
    }
    SUBCASE("sigmoid cross-entropy matches the naive formula on moderate logits") {
        Rng rng(8);
        const int64_t n = 64;
        Tensor zt({n}), yt({n});
        for (int64_t i = 0; i < n; ++i) {
            zt[i] = static_cast<float>(rng.uniform(-4.0, 4.0));
            yt[i] = static_cast<float>(rng.uniform(0.0, 1.0));
        }
        int z = g.constant(zt);
        int l = sigmoid_cross_entropy(g, z, yt);
        double naive = 0;
        for (int64_t i = 0; i < n; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-double(zt[i])));
            naive += -(double(yt[i]) * std::log(s) + (1.0 - yt[i]) * std::log(1.0 - s));
        }
        naive /= double(n);
        CHECK(g.val(l)[0] == doctest::Approx(naive).epsilon(1e-6));
    }
    SUBCASE("softmax cross-entropy anchors") {
        int z = g.constant(Tensor({2, 6}, 1.23f));
        int l = softmax_cross_entropy(g, z, {0, 3});
        CHECK(g.val(l)[0] == doctest::Approx(std::log(6.0)).epsilon(1e-6));
        Tensor hot({1, 4}, -30.0f);
        hot[2] = 30.0f;
        int z2 = g.constant(hot);
        int l2 = softmax_cross_entropy(g, z2, {2});
        CHECK(g.val(l2)[0] < 1e-12);
        CHECK_THROWS_AS(softmax_cross_entropy(g, z2, {7}), ConfigError);
    }
    SUBCASE("l1 loss") {
        int a = g.constant(Tensor({4}, std::vector<float>{1, 2, 3, 4}));
        int b = g.constant(Tensor({4}, std::vector<float>{2, 2, 1, 4}));
        int l = l1_loss(g, a, b);
        CHECK(g.val(l)[0] == doctest::Approx(0.75));
    }
}

TEST_CASE("backward basics") {
    SUBCASE("d(x^2)/dx at 3 is 6") {
        GraphT<float> g;
        int x = g.input(Tensor::scalar(3.0f), true);
        int y = square(g, x);
        g.backward(y);
        CHECK(g.grad(x)[0] == doctest::Approx(6.0));
    }
    SUBCASE("gradient of a sum is all ones") {
        GraphT<float> g;
        int x = g.input(Tensor({1, 5}, std::vector<float>{1, 2, 3, 4, 5}), true);
        int s = reduce_sum_rows(g, x);
        g.backward(s);
        for (int64_t i = 0; i < 5; ++i) CHECK(g.grad(x)[i] == 1.0f);
    }
    SUBCASE("non-scalar loss is rejected") {
        GraphT<float> g;
        int x = g.input(Tensor({2}, 1.0f), true);
        int y = relu(g, x);
        CHECK_THROWS_AS(g.backward(y), NumericError);
    }
    SUBCASE("double backward on one graph is rejected") {
        GraphT<float> g;
        int x = g.input(Tensor::scalar(2.0f), true);
        int y = square(g, x);
        g.backward(y);
        CHECK_THROWS_AS(g.backward(y), NumericError);
    }
    SUBCASE("parameters unreachable from the loss keep zero gradients") {
        ParamStoreT<float> store;
        ParamT<float>* used = store.add("used", Tensor({2}, 1.0f));
        ParamT<float>* unused = store.add("unused", Tensor({2}, 1.0f));
        store.zero_grad();
        GraphT<float> g;
        int u = g.param(*used);
        g.param(*unused);
        int loss = reduce_mean(g, square(g, u));
        g.backward(loss);
        CHECK(used->grad[0] == doctest::Approx(1.0));
        CHECK(unused->grad[0] == 0.0f);
        CHECK(unused->grad[1] == 0.0f);
    }
}

TEST_CASE("adam contract") {
    SUBCASE("zero gradient leaves parameters unchanged but advances the step") {
        ParamStoreT<float> store;
        ParamT<float>* p = store.add("p", Tensor({3}, 1.5f));
        AdamT<float> opt(store.trainable(), {});
        store.zero_grad();
        opt.step();
        CHECK(opt.step_count() == 1);
        for (int i = 0; i < 3; ++i) CHECK(p->value[i] == 1.5f);
    }
    SUBCASE("unit gradient, first step moves by about -lr") {
        ParamStoreT<float> store;
        ParamT<float>* p = store.add("p", Tensor({1}, 0.0f));
        AdamConfigT<float> cfg;  // lr 2e-4
        AdamT<float> opt(store.trainable(), cfg);
        p->grad[0] = 1.0f;
        opt.step();
        // m-hat = 1, v-hat = 1 -> update = -lr / (1 + eps)
        CHECK(p->value[0] == doctest::Approx(-2e-4).epsilon(1e-4));
    }
    SUBCASE("same seed, same data: bitwise-identical parameters after 100 steps") {
        auto run = [](uint64_t seed) {
            Rng rng(seed);
            ParamStoreT<float> store;
            DenseLayerT<float> layer = DenseLayerT<float>::create(store, "fc", 4, 2, rng);
            AdamT<float> opt(store.trainable(), {});
            Rng data_rng(seed + 1);
            for (int step = 0; step < 100; ++step) {
                Tensor xt({8, 4});
                for (int64_t i = 0; i < xt.volume(); ++i)
                    xt[i] = static_cast<float>(data_rng.normal());
                GraphT<float> g;
                int x = g.constant(xt);
                int y = layer.forward(g, x);
                int loss = reduce_mean(g, square(g, y));
                store.zero_grad();
                g.backward(loss);
                opt.step();
            }
            return std::make_pair(layer.w->value.vec(), layer.b->value.vec());
        };
        auto a = run(12), b = run(12);
        CHECK(std::memcmp(a.first.data(), b.first.data(), a.first.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(a.second.data(), b.second.data(), a.second.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("cross-entropy of the true distribution equals its entropy") {
    // Uniform case: softmax of equal logits is uniform; CE = log C = entropy.
    GraphT<float> g;
    const int C = 7;
    int z = g.constant(Tensor({1, C}, 0.0f));
    int l = softmax_cross_entropy(g, z, {3});
    CHECK(g.val(l)[0] == doctest::Approx(std::log(double(C))).epsilon(1e-6));
}
