#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "n2f/data.hpp"
#include "n2f/gan.hpp"
#include "n2f/ops.hpp"

using namespace n2f;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "n2f_gan_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// Small spec pair used wherever the default sizes would be wasteful.
GeneratorSpec slim_gspec(int64_t len) {
    GeneratorSpec s;
    s.input_len = len;
    s.block_widths = {24, 16};
    s.latent_dim = 8;
    return s;
}
DiscriminatorSpec slim_dspec(int64_t len) {
    DiscriminatorSpec s;
    s.input_len = len;
    s.block_widths = {12, 24, 48};
    return s;
}

std::vector<PairedBurst> surrogate_pairs(int n, int64_t len, Condition cond, uint64_t seed) {
    Rng rng(seed);
    auto normals = surrogate_generate(0, cond, n, len, rng);
    auto faults = surrogate_generate(1, cond, n, len, rng);
    Rng pair_rng(seed + 1);
    return make_pairs(normals, faults, pair_rng);
}

double held_out_l1(const Checkpoint& cp, const std::vector<PairedBurst>& held) {
    Rng build_rng(1);
    Generator gen(cp.gspec, build_rng);
    apply_params(gen.params(), cp.gen_params);
    const int64_t len = cp.gspec.input_len;
    Tensor x({(int64_t)held.size(), 1, len}), y({(int64_t)held.size(), 1, len});
    for (size_t i = 0; i < held.size(); ++i) {
        auto nn = normalize(held[i].normal).samples;
        auto nf = normalize(held[i].fault).samples;
        for (int64_t t = 0; t < len; ++t) {
            x[(int64_t)i * len + t] = nn[(size_t)t];
            y[(int64_t)i * len + t] = nf[(size_t)t];
        }
    }
    Rng rng(9);
    Graph g(Mode::Infer, &rng);
    const Tensor& out = g.val(gen.forward(g, g.input(x)));
    double s = 0;
    for (int64_t i = 0; i < out.volume(); ++i) s += std::abs(double(out[i]) - double(y[i]));
    return s / double(out.volume());
}

bool tensors_bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.volume(); ++i)
        if (std::bit_cast<uint32_t>(a[i]) != std::bit_cast<uint32_t>(b[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("generator shape contract and structure") {
    SUBCASE("default spec: output equals input shape at supported lengths") {
        for (int64_t len : {256, 512, 1024}) {
            Rng rng(1);
            GeneratorSpec spec;
            spec.input_len = len;
            Generator gen = build_generator(spec, rng);
            Tensor x({2, 1, len}, 0.25f);
            Rng frng(2);
            Graph g(Mode::Train, &frng);
            const Tensor& y = g.val(gen.forward(g, g.input(x)));
            REQUIRE(y.rank() == 3);
            CHECK(y.dim(0) == 2);
            CHECK(y.dim(1) == 1);
            CHECK(y.dim(2) == len);
        }
    }
    SUBCASE("default spec bottlenecks at 64 channels over 4 stride-2 stages") {
        Rng rng(1);
        Generator gen = build_generator(GeneratorSpec{}, rng);
        const Param* latent = gen.params().find("enc3.w");
        REQUIRE(latent != nullptr);
        CHECK(latent->value.dim(0) == 64);  // out channels
        CHECK(latent->value.dim(1) == 64);  // in channels
        CHECK(gen.params().find("enc4.w") == nullptr);
    }
    SUBCASE("zero weights and tanh output give identically zero output") {
        Rng rng(3);
        Generator gen = build_generator(slim_gspec(64), rng);
        for (size_t i = 0; i < gen.params().size(); ++i)
            if (gen.params()[i].trainable) gen.params()[i].value.fill(0.0f);
        Tensor x({3, 1, 64});
        Rng xr(4);
        for (int64_t i = 0; i < x.volume(); ++i) x[i] = float(xr.normal());
        Rng frng(5);
        Graph g(Mode::Train, &frng);
        const Tensor& y = g.val(gen.forward(g, g.input(x)));
        for (int64_t i = 0; i < y.volume(); ++i) CHECK(y[i] == 0.0f);
    }
    SUBCASE("indivisible input length is rejected") {
        Rng rng(6);
        GeneratorSpec bad;
        bad.input_len = 500;  // not divisible by 2^4
        CHECK_THROWS_AS((void)build_generator(bad, rng), ConfigError);
    }
}

TEST_CASE("parameter counts match the analytic oracle") {
    // Hand-derived totals for the default configurations.
    CHECK(generator_param_count(GeneratorSpec{}) == 529025);
    CHECK(discriminator_param_count(DiscriminatorSpec{}) == 166017);

    auto count_trainable = [](const ParamStore& store) {
        int64_t n = 0;
        for (size_t i = 0; i < store.size(); ++i)
            if (store[i].trainable) n += store[i].value.volume();
        return n;
    };
    Rng rng(7);
    Generator gen = build_generator(GeneratorSpec{}, rng);
    Discriminator disc = build_discriminator(DiscriminatorSpec{}, rng);
    CHECK(count_trainable(gen.params()) == 529025);
    CHECK(count_trainable(disc.params()) == 166017);

    GeneratorSpec odd = slim_gspec(128);
    odd.skip_connections = false;
    Rng rng2(8);
    Generator gen2 = build_generator(odd, rng2);
    CHECK(count_trainable(gen2.params()) == generator_param_count(odd));

    DiscriminatorSpec d2 = slim_dspec(128);
    Rng rng3(9);
    Discriminator disc2 = build_discriminator(d2, rng3);
    CHECK(count_trainable(disc2.params()) == discriminator_param_count(d2));
}

TEST_CASE("discriminator emits a patch logit map and is order-sensitive") {
    Rng rng(11);
    Discriminator disc = build_discriminator(DiscriminatorSpec{}, rng);
    CHECK(disc.patch_len() == 64);

    Tensor a({1, 1, 512}), b({1, 1, 512});
    Rng xr(12);
    for (int64_t i = 0; i < a.volume(); ++i) a[i] = float(xr.normal());
    for (int64_t i = 0; i < b.volume(); ++i) b[i] = float(xr.normal());

    Rng frng(13);
    Graph g(Mode::Infer, &frng);
    int na = g.input(a), nb = g.input(b);
    // Take copies: recording more nodes may reallocate value storage.
    const Tensor ab = g.val(disc.forward(g, concat_channels(g, na, nb)));
    const Tensor ba = g.val(disc.forward(g, concat_channels(g, nb, na)));
    REQUIRE(ab.rank() == 3);
    CHECK(ab.dim(1) == 1);
    CHECK(ab.dim(2) == 64);
    double max_diff = 0;
    for (int64_t i = 0; i < ab.volume(); ++i)
        max_diff = std::max(max_diff, std::abs(double(ab[i]) - double(ba[i])));
    CHECK(max_diff > 1e-6);
}

TEST_CASE("loss contracts") {
    Rng rng(21);
    SUBCASE("identical generated and target zero the L1 term") {
        Graph g(Mode::Train, &rng);
        Tensor t({2, 1, 8});
        for (int64_t i = 0; i < t.volume(); ++i) t[i] = float(rng.normal());
        int gen_id = g.input(t, true);
        int tgt = g.constant(t);
        Tensor logits({2, 1, 4}, 0.3f);
        auto gl = generator_loss(g, g.input(logits, true), gen_id, tgt, 100.0f);
        CHECK(g.val(gl.l1)[0] == 0.0f);
        CHECK(g.val(gl.total)[0] == g.val(gl.adversarial)[0]);
    }
    SUBCASE("lambda zero reduces the total to the adversarial term") {
        Graph g(Mode::Train, &rng);
        Tensor gen_v({1, 1, 8}, 0.5f), tgt_v({1, 1, 8}, -0.25f), logits({1, 1, 4}, -0.7f);
        auto gl = generator_loss(g, g.input(logits, true), g.input(gen_v, true),
                                 g.constant(tgt_v), 0.0f);
        CHECK(g.val(gl.total)[0] == g.val(gl.adversarial)[0]);
        CHECK(g.val(gl.l1)[0] == doctest::Approx(0.75f));
    }
    SUBCASE("adversarial 0.7 plus lambda 100 of L1 0.01 totals 1.7") {
        Graph g(Mode::Train, &rng);
        // BCE(z, 1) = 0.7 at z = -ln(e^0.7 - 1)
        const float z = float(-std::log(std::exp(0.7) - 1.0));
        Tensor logits({1, 1, 16}, z);
        Tensor gen_v({1, 1, 32}, 0.51f), tgt_v({1, 1, 32}, 0.5f);
        auto gl = generator_loss(g, g.input(logits, true), g.input(gen_v, true),
                                 g.constant(tgt_v), 100.0f);
        CHECK(double(g.val(gl.adversarial)[0]) == doctest::Approx(0.7).epsilon(1e-5));
        CHECK(double(g.val(gl.l1)[0]) == doctest::Approx(0.01).epsilon(1e-4));
        CHECK(double(g.val(gl.total)[0]) == doctest::Approx(1.7).epsilon(1e-4));
    }
    SUBCASE("total re-sums from components within 1e-7 on random inputs") {
        for (int it = 0; it < 50; ++it) {
            Graph g(Mode::Train, &rng);
            Tensor logits({2, 1, 8}), gen_v({2, 1, 16}), tgt_v({2, 1, 16});
            for (int64_t i = 0; i < logits.volume(); ++i) logits[i] = float(rng.normal(0, 2));
            for (int64_t i = 0; i < gen_v.volume(); ++i) {
                gen_v[i] = float(rng.normal());
                tgt_v[i] = float(rng.normal());
            }
            const float lambda = it % 2 ? 100.0f : 7.5f;
            auto gl = generator_loss(g, g.input(logits, true), g.input(gen_v, true),
                                     g.constant(tgt_v), lambda);
            const double resum =
                double(g.val(gl.adversarial)[0]) + double(lambda) * double(g.val(gl.l1)[0]);
            CHECK(std::abs(double(g.val(gl.total)[0]) - resum) <
                  1e-7 * std::max(1.0, std::abs(resum)));
        }
    }
    SUBCASE("discriminator loss at zero logits is 2 log 2") {
        Graph g(Mode::Train, &rng);
        Tensor zeros({3, 1, 8}, 0.0f);
        auto dl = discriminator_loss(g, g.input(zeros, true), g.input(zeros, true));
        CHECK(double(g.val(dl.total)[0]) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
        CHECK(g.val(dl.real_term)[0] == g.val(dl.fake_term)[0]);
    }
    SUBCASE("a perfect discriminator scores essentially zero loss") {
        Graph g(Mode::Train, &rng);
        Tensor high({2, 1, 4}, 30.0f), low({2, 1, 4}, -30.0f);
        auto dl = discriminator_loss(g, g.input(high, true), g.input(low, true));
        CHECK(double(g.val(dl.total)[0]) < 1e-12);
    }
    SUBCASE("matches a direct evaluation of the two-sided value function") {
        Graph g(Mode::Train, &rng);
        Tensor lr({4, 1, 8}), lf({4, 1, 8});
        for (int64_t i = 0; i < lr.volume(); ++i) {
            lr[i] = float(rng.normal(0.0, 1.5));
            lf[i] = float(rng.normal(0.0, 1.5));
        }
        auto dl = discriminator_loss(g, g.input(lr, true), g.input(lf, true));
        double expect = 0;
        for (int64_t i = 0; i < lr.volume(); ++i) {
            const double sr = 1.0 / (1.0 + std::exp(-double(lr[i])));
            const double sf = 1.0 / (1.0 + std::exp(-double(lf[i])));
            expect += -std::log(sr) - std::log(1.0 - sf);
        }
        expect /= double(lr.volume());
        CHECK(double(g.val(dl.total)[0]) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("training validates its inputs") {
    auto pairs = surrogate_pairs(8, 64, {1797, 0}, 31);
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS((void)train({}, slim_gspec(64), slim_dspec(64), cfg), ConfigError);

    auto mixed = pairs;
    mixed[3].condition.rpm = 1730;
    CHECK_THROWS_AS((void)train(mixed, slim_gspec(64), slim_dspec(64), cfg), ConfigError);

    auto mixed_class = pairs;
    mixed_class[2].fault.label = 4;
    CHECK_THROWS_AS((void)train(mixed_class, slim_gspec(64), slim_dspec(64), cfg), ConfigError);

    CHECK_THROWS_AS((void)train(pairs, slim_gspec(128), slim_dspec(128), cfg), ConfigError);
}

TEST_CASE("short adversarial training runs, traces, and reproduces bitwise") {
    auto pairs = surrogate_pairs(24, 64, {1797, 0}, 41);
    TrainConfig cfg;
    cfg.steps = 25;
    cfg.batch_size = 4;
    cfg.seed = 42;
    cfg.checkpoint_every = 10;

    std::vector<int64_t> sink_steps;
    auto [cp, trace] = train(pairs, slim_gspec(64), slim_dspec(64), cfg,
                             [&](const Checkpoint&, int64_t s) { sink_steps.push_back(s); });

    REQUIRE(trace.g_l1.size() == 25);
    REQUIRE(trace.d_real.size() == 25);
    for (size_t i = 0; i < trace.g_l1.size(); ++i) {
        CHECK(std::isfinite(trace.g_l1[i]));
        CHECK(std::isfinite(trace.g_adversarial[i]));
        CHECK(std::isfinite(trace.d_real[i]));
        CHECK(std::isfinite(trace.d_fake[i]));
    }
    CHECK(sink_steps == std::vector<int64_t>{10, 20, 25});
    CHECK(cp.step == 25);
    CHECK(cp.fault_label == 1);
    CHECK(cp.condition.rpm == 1797);
    CHECK(cp.gen_opt_steps == 25);
    CHECK(cp.disc_opt_steps == 25);

    auto [cp2, trace2] = train(pairs, slim_gspec(64), slim_dspec(64), cfg);
    CHECK(trace2.g_l1 == trace.g_l1);
    CHECK(trace2.g_adversarial == trace.g_adversarial);
    CHECK(trace2.d_real == trace.d_real);
    CHECK(trace2.d_fake == trace.d_fake);
    REQUIRE(cp2.gen_params.size() == cp.gen_params.size());
    for (size_t i = 0; i < cp.gen_params.size(); ++i) {
        CHECK(cp2.gen_params[i].first == cp.gen_params[i].first);
        CHECK(tensors_bitwise_equal(cp2.gen_params[i].second, cp.gen_params[i].second));
    }
    for (size_t i = 0; i < cp.opt_state.size(); ++i)
        CHECK(tensors_bitwise_equal(cp2.opt_state[i].second, cp.opt_state[i].second));
}

TEST_CASE("pure L1 training decreases held-out reconstruction monotonically") {
    auto pairs = surrogate_pairs(64, 128, {1797, 0}, 51);
    std::vector<PairedBurst> train_pairs(pairs.begin(), pairs.begin() + 48);
    std::vector<PairedBurst> held(pairs.begin() + 48, pairs.end());

    TrainConfig cfg;
    cfg.steps = 600;
    cfg.batch_size = 8;
    cfg.seed = 52;
    cfg.lambda_l1 = 1e4f;
    cfg.freeze_adversarial = true;
    cfg.checkpoint_every = 100;

    std::vector<double> window_l1;
    auto [cp, trace] = train(train_pairs, slim_gspec(128), slim_dspec(128), cfg,
                             [&](const Checkpoint& c, int64_t) {
                                 window_l1.push_back(held_out_l1(c, held));
                             });
    REQUIRE(window_l1.size() == 6);
    for (size_t i = 0; i + 1 < window_l1.size(); ++i) CHECK(window_l1[i + 1] < window_l1[i]);
    for (float v : trace.g_adversarial) CHECK(v == 0.0f);  // frozen pathway records nothing
}

TEST_CASE("short adversarial training already beats the no-translation baseline") {
    auto pairs = surrogate_pairs(96, 128, {1797, 0}, 61);
    std::vector<PairedBurst> train_pairs(pairs.begin(), pairs.begin() + 80);
    std::vector<PairedBurst> held(pairs.begin() + 80, pairs.end());

    TrainConfig cfg;
    cfg.steps = 400;
    cfg.batch_size = 8;
    cfg.seed = 62;
    auto [cp, trace] = train(train_pairs, slim_gspec(128), slim_dspec(128), cfg);

    const double synth_l1 = held_out_l1(cp, held);
    double base = 0;
    int64_t n = 0;
    for (const auto& p : held) {
        auto nn = normalize(p.normal).samples;
        auto nf = normalize(p.fault).samples;
        for (size_t t = 0; t < nn.size(); ++t) base += std::abs(double(nn[t]) - double(nf[t]));
        n += int64_t(nn.size());
    }
    base /= double(n);
    MESSAGE("held-out L1: synthetic ", synth_l1, " vs baseline ", base);
    CHECK(synth_l1 < base);
}

TEST_CASE("generation stamps labels, preserves conditions, and controls noise") {
    auto pairs = surrogate_pairs(16, 64, {1797, 0}, 71);
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.batch_size = 4;
    cfg.seed = 72;
    auto [cp, trace] = train(pairs, slim_gspec(64), slim_dspec(64), cfg);

    Rng drng(73);
    auto new_normals = surrogate_generate(0, {1772, 1}, 5, 64, drng);
    auto synth = generate(cp, new_normals, 99);
    REQUIRE(synth.size() == 5);
    for (size_t i = 0; i < synth.size(); ++i) {
        CHECK(synth[i].label == 1);
        CHECK(synth[i].condition.rpm == 1772);
        CHECK(synth[i].condition.load_hp == 1);
        CHECK(synth[i].samples.size() == 64);
    }

    auto again_same_seed = generate(cp, new_normals, 99);
    auto different_seed = generate(cp, new_normals, 100);
    bool same = true, diff = false;
    for (size_t i = 0; i < synth.size(); ++i) {
        for (size_t t = 0; t < 64; ++t) {
            same = same && synth[i].samples[t] == again_same_seed[i].samples[t];
            diff = diff || synth[i].samples[t] != different_seed[i].samples[t];
        }
    }
    CHECK(same);
    CHECK(diff);  // sampling noise (dropout) is live by default

    auto det1 = generate(cp, new_normals, 1, true);
    auto det2 = generate(cp, new_normals, 2, true);
    for (size_t i = 0; i < det1.size(); ++i)
        for (size_t t = 0; t < 64; ++t) CHECK(det1[i].samples[t] == det2[i].samples[t]);

    auto short_bursts = new_normals;
    short_bursts[0].samples.resize(32);
    CHECK_THROWS_AS((void)generate(cp, short_bursts), ConfigError);
}

TEST_CASE("checkpoints round-trip byte-exactly and reject corruption") {
    auto pairs = surrogate_pairs(12, 64, {1750, 2}, 81);
    TrainConfig cfg;
    cfg.steps = 8;
    cfg.batch_size = 4;
    cfg.seed = 82;
    auto [cp, trace] = train(pairs, slim_gspec(64), slim_dspec(64), cfg);

    const fs::path p1 = temp_dir() / "cp.n2fc";
    save_checkpoint(cp, p1.string());
    Checkpoint loaded = load_checkpoint(p1.string());

    CHECK(loaded.gspec.input_len == cp.gspec.input_len);
    CHECK(loaded.gspec.block_widths == cp.gspec.block_widths);
    CHECK(loaded.dspec.block_widths == cp.dspec.block_widths);
    CHECK(loaded.condition.rpm == 1750);
    CHECK(loaded.condition.load_hp == 2);
    CHECK(loaded.fault_label == cp.fault_label);
    CHECK(loaded.seed == cp.seed);
    CHECK(loaded.step == cp.step);
    CHECK(loaded.gen_opt_steps == cp.gen_opt_steps);
    REQUIRE(loaded.gen_params.size() == cp.gen_params.size());
    for (size_t i = 0; i < cp.gen_params.size(); ++i)
        CHECK(tensors_bitwise_equal(loaded.gen_params[i].second, cp.gen_params[i].second));
    REQUIRE(loaded.opt_state.size() == cp.opt_state.size());
    for (size_t i = 0; i < cp.opt_state.size(); ++i)
        CHECK(tensors_bitwise_equal(loaded.opt_state[i].second, cp.opt_state[i].second));

    // Saving the loaded checkpoint reproduces the file byte for byte.
    const fs::path p2 = temp_dir() / "cp2.n2fc";
    save_checkpoint(loaded, p2.string());
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // Forward outputs from the loaded checkpoint are bitwise identical.
    Rng drng(83);
    auto normals = surrogate_generate(0, {1730, 0}, 3, 64, drng);
    auto out_a = generate(cp, normals, 7);
    auto out_b = generate(loaded, normals, 7);
    for (size_t i = 0; i < out_a.size(); ++i)
        for (size_t t = 0; t < out_a[i].samples.size(); ++t)
            CHECK(std::bit_cast<uint32_t>(out_a[i].samples[t]) ==
                  std::bit_cast<uint32_t>(out_b[i].samples[t]));

    SUBCASE("corrupt magic is rejected") {
        std::string bytes = b1;
        bytes[1] = 'X';
        const fs::path q = temp_dir() / "bad.n2fc";
        {
            std::ofstream out(q, std::ios::binary);
            out << bytes;
        }
        CHECK_THROWS_AS((void)load_checkpoint(q.string()), IoError);
    }
    SUBCASE("truncation is rejected with an offset") {
        std::string bytes = b1.substr(0, b1.size() / 2);
        const fs::path q = temp_dir() / "trunc.n2fc";
        {
            std::ofstream out(q, std::ios::binary);
            out << bytes;
        }
        try {
            (void)load_checkpoint(q.string());
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
    SUBCASE("tensor names must match the declared specs") {
        Checkpoint tampered = cp;
        tampered.gen_params[0].first = "enc9.w";
        const fs::path q = temp_dir() / "tamper.n2fc";
        save_checkpoint(tampered, q.string());
        CHECK_THROWS_AS((void)load_checkpoint(q.string()), IoError);
    }
}
