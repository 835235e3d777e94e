#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "n2f/adam.hpp"
#include "n2f/data.hpp"
#include "n2f/fft.hpp"
#include "n2f/graph.hpp"
#include "n2f/layers.hpp"
#include "n2f/ops.hpp"
#include "n2f/rng.hpp"

using namespace n2f;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "n2f_data_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

double kurtosis_of(const std::vector<float>& x) {
    double m = 0;
    for (float v : x) m += v;
    m /= double(x.size());
    double s2 = 0, s4 = 0;
    for (float v : x) {
        const double d = v - m;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    s2 /= double(x.size());
    s4 /= double(x.size());
    return s4 / (s2 * s2);
}

bool bursts_equal(const Burst& a, const Burst& b) {
    if (a.label != b.label || !(a.condition == b.condition) || a.source_offset != b.source_offset)
        return false;
    if (a.samples.size() != b.samples.size()) return false;
    for (size_t i = 0; i < a.samples.size(); ++i)
        if (std::bit_cast<uint32_t>(a.samples[i]) != std::bit_cast<uint32_t>(b.samples[i]))
            return false;
    return true;
}

}  // namespace

TEST_CASE("class names and ids are a bijection") {
    for (int i = 0; i < kNumClasses; ++i) CHECK(class_id_from_name(class_name(i)) == i);
    CHECK(std::string(class_name(0)) == "normal");
    CHECK_THROWS_AS((void)class_name(6), ConfigError);
    CHECK_THROWS_AS((void)class_id_from_name("outer"), ConfigError);
    CHECK(signal_format_from_name("csv-single-column") == SignalFormat::CsvSingleColumn);
    CHECK(signal_format_from_name("raw-f32le") == SignalFormat::RawF32le);
    CHECK_THROWS_AS((void)signal_format_from_name("tsv"), ConfigError);
}

TEST_CASE("csv ingestion parses samples and reports failures by line") {
    const fs::path p = temp_dir() / "in.csv";
    {
        std::ofstream f(p);
        f << "# header comment\n1.0\n2.0\n\n3.0\n";
    }
    SignalRecord rec = ingest(p.string(), SignalFormat::CsvSingleColumn, {1797, 0}, 0);
    REQUIRE(rec.series.size() == 3);
    CHECK(rec.series[0] == 1.0f);
    CHECK(rec.series[1] == 2.0f);
    CHECK(rec.series[2] == 3.0f);
    CHECK(rec.condition.rpm == 1797);

    {
        std::ofstream f(p);
        f << "1.0\n2.x5\n3.0\n";
    }
    try {
        (void)ingest(p.string(), SignalFormat::CsvSingleColumn, {1797, 0}, 0);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    {
        std::ofstream f(p);
        f << "# only a comment\n";
    }
    CHECK_THROWS_AS((void)ingest(p.string(), SignalFormat::CsvSingleColumn, {1797, 0}, 0), IoError);
    CHECK_THROWS_AS((void)ingest((temp_dir() / "missing.csv").string(),
                                 SignalFormat::CsvSingleColumn, {1797, 0}, 0),
                    IoError);
}

TEST_CASE("raw ingestion reads packed floats and rejects stray bytes") {
    const fs::path p = temp_dir() / "in.raw";
    const std::vector<float> vals{1.5f, -2.25f, 1e-3f};
    export_series(p.string(), SignalFormat::RawF32le, vals);
    CHECK(fs::file_size(p) == 12);
    SignalRecord rec = ingest(p.string(), SignalFormat::RawF32le, {1730, 3}, 2);
    REQUIRE(rec.series.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(rec.series[i] == vals[i]);
    CHECK(rec.label == 2);

    {
        std::ofstream f(p, std::ios::binary | std::ios::app);
        f << "zz";
    }
    try {
        (void)ingest(p.string(), SignalFormat::RawF32le, {1730, 3}, 2);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("byte offset 12") != std::string::npos);
    }
}

TEST_CASE("export then ingest reproduces the series bitwise in both formats") {
    Rng rng(11);
    std::vector<float> series(257);
    for (float& v : series) v = float(rng.normal(0.0, 3.7));
    series[0] = 0.1f;  // a value with no exact binary representation
    for (SignalFormat fmt : {SignalFormat::CsvSingleColumn, SignalFormat::RawF32le}) {
        const fs::path p = temp_dir() / "rt.dat";
        export_series(p.string(), fmt, series);
        SignalRecord rec = ingest(p.string(), fmt, {1772, 1}, 0);
        REQUIRE(rec.series.size() == series.size());
        for (size_t i = 0; i < series.size(); ++i)
            CHECK(std::bit_cast<uint32_t>(rec.series[i]) == std::bit_cast<uint32_t>(series[i]));
    }
}

TEST_CASE("segmentation counts, offsets, and bounds") {
    SignalRecord rec;
    rec.condition = {1750, 2};
    rec.label = 3;

    rec.series.assign(1000, 0.0f);
    CHECK(segment(rec, 200, 200).size() == 5);

    rec.series.assign(200, 0.0f);
    auto one = segment(rec, 200, 200);
    REQUIRE(one.size() == 1);
    CHECK(one[0].source_offset == 0);
    CHECK(one[0].label == 3);
    CHECK(one[0].condition.rpm == 1750);

    rec.series.assign(1024, 0.0f);
    for (size_t i = 0; i < rec.series.size(); ++i) rec.series[i] = float(i);
    auto three = segment(rec, 512, 256);
    REQUIRE(three.size() == 3);
    CHECK(three[0].source_offset == 0);
    CHECK(three[1].source_offset == 256);
    CHECK(three[2].source_offset == 512);
    CHECK(three[1].samples[0] == 256.0f);

    rec.series.assign(100, 0.0f);
    CHECK_THROWS_AS((void)segment(rec, 101, 1), ConfigError);

    SUBCASE("count formula holds across randomized geometry") {
        Rng rng(21);
        for (int it = 0; it < 200; ++it) {
            const int64_t L = 1 + int64_t(rng.uniform_index(3000));
            const int64_t bl = 1 + int64_t(rng.uniform_index(size_t(L)));
            const int64_t stride = 1 + int64_t(rng.uniform_index(400));
            rec.series.assign(size_t(L), 0.0f);
            auto bursts = segment(rec, bl, stride);
            CHECK(int64_t(bursts.size()) == (L - bl) / stride + 1);
            for (size_t i = 0; i + 1 < bursts.size(); ++i) {
                CHECK(bursts[i + 1].source_offset - bursts[i].source_offset ==
                      uint32_t(stride));
                if (stride >= bl)  // non-overlap guarantee
                    CHECK(bursts[i].source_offset + uint32_t(bl) <= bursts[i + 1].source_offset);
            }
        }
    }
}

TEST_CASE("noise injection hits the requested SNR") {
    Burst b;
    b.condition = {1797, 0};
    const size_t L = 100000;
    b.samples.resize(L);
    for (size_t t = 0; t < L; ++t)
        b.samples[t] = float(std::sqrt(2.0) * std::sin(2.0 * M_PI * 50.0 * double(t) / 12000.0));

    SUBCASE("infinite SNR is the identity") {
        Rng rng(1);
        Burst out = add_noise(b, std::numeric_limits<double>::infinity(), rng);
        CHECK(bursts_equal(out, b));
    }
    SUBCASE("0 dB on a unit-power signal adds unit-power noise") {
        Rng rng(2);
        Burst out = add_noise(b, 0.0, rng);
        double p = 0;
        for (size_t i = 0; i < L; ++i) {
            const double d = double(out.samples[i]) - double(b.samples[i]);
            p += d * d;
        }
        p /= double(L);
        CHECK(p > 0.9);
        CHECK(p < 1.1);
    }
    SUBCASE("100 dB noise standard deviation is about 1e-5") {
        Rng rng(3);
        Burst out = add_noise(b, 100.0, rng);
        double p = 0;
        for (size_t i = 0; i < L; ++i) {
            const double d = double(out.samples[i]) - double(b.samples[i]);
            p += d * d;
        }
        const double std_hat = std::sqrt(p / double(L));
        CHECK(std_hat == doctest::Approx(1e-5).epsilon(0.05));
    }
    SUBCASE("empirical SNR within half a dB across targets") {
        Rng rng(4);
        for (double target : {-3.0, 5.0, 10.0, 20.0}) {
            Burst out = add_noise(b, target, rng);
            double pn = 0;
            for (size_t i = 0; i < L; ++i) {
                const double d = double(out.samples[i]) - double(b.samples[i]);
                pn += d * d;
            }
            pn /= double(L);
            const double snr_hat = 10.0 * std::log10(1.0 / pn);
            CHECK(std::abs(snr_hat - target) < 0.5);
        }
    }
    SUBCASE("zero-power burst is rejected") {
        Burst z;
        z.samples.assign(64, 0.0f);
        Rng rng(5);
        CHECK_THROWS_AS((void)add_noise(z, 10.0, rng), ConfigError);
    }
}

TEST_CASE("pairing draws normals uniformly and validates metadata") {
    auto mk = [](int label, int rpm, uint32_t off) {
        Burst b;
        b.label = label;
        b.condition = {rpm, 0};
        b.source_offset = off;
        b.samples.assign(16, float(off));
        return b;
    };

    SUBCASE("single normal is shared by every pair") {
        std::vector<Burst> normals{mk(0, 1797, 7)};
        std::vector<Burst> faults{mk(1, 1797, 0), mk(1, 1797, 1), mk(1, 1797, 2)};
        Rng rng(6);
        auto pairs = make_pairs(normals, faults, rng);
        REQUIRE(pairs.size() == 3);
        for (const auto& p : pairs) {
            CHECK(p.normal.source_offset == 7);
            CHECK(p.fault.label == 1);
            CHECK(p.condition.rpm == 1797);
        }
    }
    SUBCASE("480 by 480 pairing covers every fault once") {
        std::vector<Burst> normals, faults;
        for (uint32_t i = 0; i < 480; ++i) {
            normals.push_back(mk(0, 1797, i));
            faults.push_back(mk(1, 1797, i));
        }
        Rng rng(7);
        auto pairs = make_pairs(normals, faults, rng);
        REQUIRE(pairs.size() == 480);
        for (uint32_t i = 0; i < 480; ++i) CHECK(pairs[i].fault.source_offset == i);
        Rng rng2(7);
        auto again = make_pairs(normals, faults, rng2);
        for (uint32_t i = 0; i < 480; ++i)
            CHECK(again[i].normal.source_offset == pairs[i].normal.source_offset);
    }
    SUBCASE("condition mismatch and mislabeled sets are rejected") {
        Rng rng(8);
        std::vector<Burst> normals{mk(0, 1797, 0)};
        std::vector<Burst> wrong_cond{mk(1, 1772, 0)};
        CHECK_THROWS_AS((void)make_pairs(normals, wrong_cond, rng), ConfigError);
        std::vector<Burst> not_normal{mk(2, 1797, 0)};
        std::vector<Burst> faults{mk(1, 1797, 0)};
        CHECK_THROWS_AS((void)make_pairs(not_normal, faults, rng), ConfigError);
        CHECK_THROWS_AS((void)make_pairs({}, faults, rng), ConfigError);
    }
}

TEST_CASE("splits are seeded, disjoint, and honest about deficits") {
    std::vector<Burst> all;
    for (int label = 0; label < 3; ++label)
        for (uint32_t i = 0; i < 50; ++i) {
            Burst b;
            b.label = label;
            b.condition = {1797, 0};
            b.source_offset = i;
            b.samples.assign(8, float(i));
            all.push_back(b);
        }

    std::map<int, int> train{{0, 30}, {1, 20}};
    std::map<int, int> test{{0, 10}, {1, 20}, {2, 5}};
    DatasetSplit s = split(all, train, test, 99);
    CHECK(s.train.size() == 50);
    CHECK(s.test.size() == 35);

    int train_c0 = 0, test_c2 = 0;
    for (const auto& b : s.train) train_c0 += b.label == 0;
    for (const auto& b : s.test) test_c2 += b.label == 2;
    CHECK(train_c0 == 30);
    CHECK(test_c2 == 5);

    std::set<std::pair<int, uint32_t>> seen;
    for (const auto& b : s.train) CHECK(seen.insert({b.label, b.source_offset}).second);
    for (const auto& b : s.test) CHECK(seen.insert({b.label, b.source_offset}).second);

    DatasetSplit s2 = split(all, train, test, 99);
    REQUIRE(s2.train.size() == s.train.size());
    for (size_t i = 0; i < s.train.size(); ++i) CHECK(bursts_equal(s.train[i], s2.train[i]));

    DatasetSplit s3 = split(all, train, test, 100);
    bool any_differ = false;
    for (size_t i = 0; i < s.train.size(); ++i)
        any_differ = any_differ || !bursts_equal(s.train[i], s3.train[i]);
    CHECK(any_differ);

    try {
        (void)split(all, {{1, 40}}, {{1, 20}}, 1);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("inner") != std::string::npos);
        CHECK(msg.find("deficit 10") != std::string::npos);
    }
}

TEST_CASE("surrogate signals have the advertised statistics") {
    SUBCASE("healthy bursts are near-Gaussian") {
        Rng rng(31);
        auto bursts = surrogate_generate(0, {1797, 0}, 10, 8192, rng);
        for (const auto& b : bursts) {
            const double k = kurtosis_of(b.samples);
            CHECK(k > 2.5);
            CHECK(k < 3.5);
        }
    }
    SUBCASE("fault bursts are impulsive") {
        Rng rng(32);
        for (int label = 1; label < kNumClasses; ++label) {
            auto bursts = surrogate_generate(label, {1772, 1}, 8, 4096, rng);
            double mean_k = 0;
            for (const auto& b : bursts) mean_k += kurtosis_of(b.samples);
            mean_k /= double(bursts.size());
            CHECK(mean_k > 3.5);
        }
    }
    SUBCASE("dominant spectral bin separates every pair of conditions") {
        Rng rng(33);
        std::vector<size_t> bins;
        for (int rpm : {1797, 1772, 1750, 1730}) {
            auto b = surrogate_generate(0, {rpm, 0}, 1, 4096, rng, 1024.0);
            auto mag = fft_magnitude(b[0].samples);
            size_t arg = 1;  // skip DC
            for (size_t k = 1; k < mag.size(); ++k)
                if (mag[k] > mag[arg]) arg = k;
            bins.push_back(arg);
        }
        for (size_t i = 0; i < bins.size(); ++i)
            for (size_t j = i + 1; j < bins.size(); ++j) CHECK(bins[i] != bins[j]);
    }
    SUBCASE("identical seeds reproduce bursts bitwise") {
        Rng a(34), b(34);
        auto ba = surrogate_generate(4, {1750, 2}, 3, 512, a);
        auto bb = surrogate_generate(4, {1750, 2}, 3, 512, b);
        for (size_t i = 0; i < ba.size(); ++i) CHECK(bursts_equal(ba[i], bb[i]));
    }
}

TEST_CASE("normalization maps to [-1,1] and inverts exactly") {
    Burst b;
    b.samples = {2.0f, 4.0f, 3.0f, 2.5f};
    NormParams p;
    Burst n = normalize(b, &p);
    CHECK(p.min_v == 2.0f);
    CHECK(p.max_v == 4.0f);
    CHECK(n.samples[0] == -1.0f);
    CHECK(n.samples[1] == 1.0f);
    CHECK(n.samples[2] == doctest::Approx(0.0f));

    Burst back = denormalize(n, p);
    for (size_t i = 0; i < b.samples.size(); ++i)
        CHECK(back.samples[i] == doctest::Approx(b.samples[i]).epsilon(1e-6));

    Burst sym;
    sym.samples = {-1.0f, -0.25f, 0.5f, 1.0f};
    Burst nsym = normalize(sym, &p);
    for (size_t i = 0; i < sym.samples.size(); ++i) CHECK(nsym.samples[i] == sym.samples[i]);

    Burst flat;
    flat.samples.assign(16, 3.0f);
    CHECK_THROWS_AS((void)normalize(flat), ConfigError);

    Rng rng(41);
    auto real = surrogate_generate(1, {1797, 0}, 2, 512, rng);
    Burst nr = normalize(real[0], &p);
    Burst rr = denormalize(nr, p);
    for (size_t i = 0; i < rr.samples.size(); ++i)
        CHECK(std::abs(rr.samples[i] - real[0].samples[i]) < 1e-5f);
}

TEST_CASE("dataset container round-trips bitwise and rejects corruption") {
    Rng rng(51);
    std::vector<Burst> bursts;
    for (int label : {0, 1, 5}) {
        auto more = surrogate_generate(label, {label % 2 ? 1730 : 1797, label % 4}, 4, 128, rng);
        bursts.insert(bursts.end(), more.begin(), more.end());
    }
    const fs::path p = temp_dir() / "set.n2fd";
    save_dataset(p.string(), bursts);

    // header 14 bytes + 12 bursts * (8 + 128*4)
    CHECK(fs::file_size(p) == 14 + 12 * (8 + 512));

    auto loaded = load_dataset(p.string());
    REQUIRE(loaded.size() == bursts.size());
    for (size_t i = 0; i < bursts.size(); ++i) CHECK(bursts_equal(loaded[i], bursts[i]));

    SUBCASE("bad magic") {
        std::string bytes;
        {
            std::ifstream in(p, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        bytes[0] = 'X';
        const fs::path q = temp_dir() / "bad_magic.n2fd";
        {
            std::ofstream out(q, std::ios::binary);
            out << bytes;
        }
        CHECK_THROWS_AS((void)load_dataset(q.string()), IoError);
    }
    SUBCASE("truncation reports the byte offset") {
        std::string bytes;
        {
            std::ifstream in(p, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        bytes.resize(20);
        const fs::path q = temp_dir() / "trunc.n2fd";
        {
            std::ofstream out(q, std::ios::binary);
            out << bytes;
        }
        try {
            (void)load_dataset(q.string());
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("truncated at byte offset") != std::string::npos);
        }
    }
    SUBCASE("mixed lengths are rejected at save time") {
        auto bad = bursts;
        bad[1].samples.resize(64);
        CHECK_THROWS_AS(save_dataset((temp_dir() / "bad.n2fd").string(), bad), ConfigError);
    }
}

TEST_CASE("surrogate classes are separable by a small convolutional network") {
    // Gate for every downstream desk-scale experiment: a 2-block network must
    // reach at least 95% on a 6-class surrogate set of 200 bursts per class.
    Rng data_rng(61);
    const int per_class = 200, burst_len = 256;
    std::vector<Burst> all;
    for (int label = 0; label < kNumClasses; ++label) {
        auto bs = surrogate_generate(label, {1797, 0}, per_class, burst_len, data_rng);
        all.insert(all.end(), bs.begin(), bs.end());
    }
    std::map<int, int> train_n, test_n;
    for (int c = 0; c < kNumClasses; ++c) {
        train_n[c] = 160;
        test_n[c] = 40;
    }
    DatasetSplit ds = split(all, train_n, test_n, 62);

    auto to_batch = [&](const std::vector<Burst>& src, const std::vector<size_t>& ids) {
        Tensor x({int64_t(ids.size()), 1, burst_len});
        std::vector<int> y(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) {
            Burst nb = normalize(src[ids[i]]);
            for (int64_t t = 0; t < burst_len; ++t)
                x[int64_t(i) * burst_len + t] = nb.samples[size_t(t)];
            y[i] = src[ids[i]].label;
        }
        return std::pair(x, y);
    };

    Rng rng(63);
    ParamStore store;
    auto c1 = Conv1dLayer::create(store, "c1", 1, 8, 5, 2, 2, rng);
    auto c2 = Conv1dLayer::create(store, "c2", 8, 16, 5, 2, 2, rng);
    auto fc = DenseLayer::create(store, "fc", 16 * 16, kNumClasses, rng);
    Adam opt(store.trainable(), AdamConfig{1e-3f, 0.9f, 0.999f, 1e-8f});

    auto forward = [&](Graph& g, int x) {
        int h = maxpool1d(g, relu(g, c1.forward(g, x)), 2);
        h = maxpool1d(g, relu(g, c2.forward(g, h)), 2);
        return fc.forward(g, flatten_samples(g, h));
    };

    std::vector<size_t> order(ds.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    const int epochs = 12, batch = 32;
    for (int e = 0; e < epochs; ++e) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        for (size_t off = 0; off + batch <= order.size(); off += batch) {
            std::vector<size_t> ids(order.begin() + off, order.begin() + off + batch);
            auto [x, y] = to_batch(ds.train, ids);
            Graph g(Mode::Train, &rng);
            int logits = forward(g, g.input(x));
            int loss = softmax_cross_entropy(g, logits, y);
            g.backward(loss);
            opt.step();
            store.zero_grad();
        }
    }

    std::vector<size_t> test_ids(ds.test.size());
    for (size_t i = 0; i < test_ids.size(); ++i) test_ids[i] = i;
    auto [tx, ty] = to_batch(ds.test, test_ids);
    Graph g(Mode::Infer, &rng);
    int logits = forward(g, g.input(tx));
    const Tensor& lv = g.val(logits);
    int correct = 0;
    for (size_t i = 0; i < ty.size(); ++i) {
        int best = 0;
        for (int c = 1; c < kNumClasses; ++c)
            if (lv.at2(int64_t(i), c) > lv.at2(int64_t(i), best)) best = c;
        correct += best == ty[i];
    }
    const double acc = double(correct) / double(ty.size());
    MESSAGE("separability accuracy: ", acc);
    CHECK(acc >= 0.95);
}
