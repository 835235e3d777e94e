#include "n2f/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>

#include "n2f/binio.hpp"

namespace n2f {

namespace {

const char* kClassNames[kNumClasses] = {"normal",         "inner",
                                        "ball",           "outer_centered",
                                        "outer_orthogonal", "outer_opposite"};

// Surrogate recipe constants. The healthy signature is two sinusoids plus
// noise; faults add ring-down impulse trains. Rates are multiples of the
// rotation frequency; ring carriers are fixed (condition-independent), which
// is what lets a classifier recognize a fault class across conditions.
constexpr double kFaultRateMult[kNumClasses] = {0.0, 5.4, 4.9, 3.6, 3.6 * 1.1, 3.6 * 1.2};
constexpr double kFaultRingHz[kNumClasses] = {0.0, 2600.0, 2050.0, 1500.0, 1150.0, 850.0};
constexpr double kBgAmp1 = 0.45;        // rotation-frequency sinusoid amplitude
constexpr double kBgAmp2 = 0.25;        // harmonic amplitude
constexpr double kBgHarmonic = 3.2;     // harmonic ratio
constexpr double kNoiseStd = 0.55;      // background Gaussian noise
constexpr double kRingAmp = 3.0;        // ring-down peak amplitude before jitter
constexpr double kRingTauSec = 0.0005;  // ring-down decay time constant
constexpr double kRingAmpJitter = 0.15; // per-impulse relative amplitude jitter
constexpr double kPhaseJitter = 0.25;   // per-burst sinusoid phase jitter (radians)
constexpr double kRefRpm = 1797.0;      // amplitude reference condition

double frac(double x) { return x - std::floor(x); }

}  // namespace

const char* class_name(int id) {
    N2F_CHECK(id >= 0 && id < kNumClasses, "class id %d out of range [0, %d)", id, kNumClasses);
    return kClassNames[id];
}

int class_id_from_name(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i)
        if (name == kClassNames[i]) return i;
    throw ConfigError(strformat("unknown class name '%s'", name.c_str()));
}

SignalFormat signal_format_from_name(const std::string& name) {
    if (name == "csv-single-column") return SignalFormat::CsvSingleColumn;
    if (name == "raw-f32le") return SignalFormat::RawF32le;
    throw ConfigError(strformat(
        "unknown signal format '%s' (expected csv-single-column or raw-f32le)", name.c_str()));
}

SignalRecord ingest(const std::string& path, SignalFormat format, Condition condition, int label,
                    double sample_rate_hz) {
    N2F_CHECK(sample_rate_hz > 0, "sample rate must be positive, got %g", sample_rate_hz);
    N2F_CHECK(label >= 0 && label < kNumClasses, "label %d out of range [0, %d)", label,
              kNumClasses);
    SignalRecord rec;
    rec.sample_rate_hz = sample_rate_hz;
    rec.condition = condition;
    rec.label = label;

    if (format == SignalFormat::CsvSingleColumn) {
        std::ifstream in(path);
        N2F_CHECK_IO(in.good(), "cannot open %s", path.c_str());
        std::string line;
        int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            while (!line.empty() && (line.back() == '\r' || std::isspace(uint8_t(line.back()))))
                line.pop_back();
            size_t start = 0;
            while (start < line.size() && std::isspace(uint8_t(line[start]))) ++start;
            if (start > 0) line.erase(0, start);
            if (line.empty() || line[0] == '#') continue;
            char* end = nullptr;
            const double v = std::strtod(line.c_str(), &end);
            N2F_CHECK_IO(end != line.c_str() && *end == '\0' && std::isfinite(v),
                         "%s: line %lld: cannot parse sample '%s'", path.c_str(),
                         static_cast<long long>(line_no), line.c_str());
            rec.series.push_back(static_cast<float>(v));
        }
        N2F_CHECK_IO(!in.bad(), "read failure on %s", path.c_str());
    } else {
        const std::string bytes = binio::read_file(path);
        N2F_CHECK_IO(bytes.size() % 4 == 0,
                     "%s: size %zu is not a multiple of 4 (stray bytes start at byte offset %zu)",
                     path.c_str(), bytes.size(), bytes.size() - bytes.size() % 4);
        binio::Reader r(bytes, path);
        rec.series.resize(bytes.size() / 4);
        r.read_f32_block(rec.series.data(), rec.series.size(), "samples");
    }
    N2F_CHECK_IO(!rec.series.empty(), "%s: empty series", path.c_str());
    return rec;
}

void export_series(const std::string& path, SignalFormat format,
                   const std::vector<float>& series) {
    if (format == SignalFormat::CsvSingleColumn) {
        std::ofstream out(path, std::ios::trunc);
        N2F_CHECK_IO(out.good(), "cannot open %s for writing", path.c_str());
        char buf[64];
        for (float v : series) {
            std::snprintf(buf, sizeof buf, "%.9g\n", double(v));
            out << buf;
        }
        out.flush();
        N2F_CHECK_IO(out.good(), "failed writing %s", path.c_str());
    } else {
        std::string bytes;
        bytes.reserve(series.size() * 4);
        for (float v : series) binio::put_f32(bytes, v);
        binio::write_file(path, bytes);
    }
}

std::vector<Burst> segment(const SignalRecord& record, int64_t burst_len, int64_t stride) {
    const int64_t L = static_cast<int64_t>(record.series.size());
    N2F_CHECK(burst_len >= 1, "burst length must be >= 1, got %lld",
              static_cast<long long>(burst_len));
    N2F_CHECK(stride >= 1, "stride must be >= 1, got %lld", static_cast<long long>(stride));
    N2F_CHECK(burst_len <= L, "burst length %lld exceeds series length %lld",
              static_cast<long long>(burst_len), static_cast<long long>(L));
    const int64_t count = (L - burst_len) / stride + 1;
    std::vector<Burst> bursts;
    bursts.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int64_t off = i * stride;
        Burst b;
        b.samples.assign(record.series.begin() + off, record.series.begin() + off + burst_len);
        b.label = record.label;
        b.condition = record.condition;
        b.source_offset = static_cast<uint32_t>(off);
        bursts.push_back(std::move(b));
    }
    return bursts;
}

Burst add_noise(const Burst& burst, double snr_db, Rng& rng) {
    N2F_CHECK(!burst.samples.empty(), "empty burst");
    if (std::isinf(snr_db) && snr_db > 0) return burst;
    N2F_CHECK(std::isfinite(snr_db), "SNR must be finite or +inf, got %g", snr_db);
    double power = 0;
    for (float v : burst.samples) power += double(v) * double(v);
    power /= double(burst.samples.size());
    N2F_CHECK(power > 0, "zero-power burst: SNR-relative noise is undefined");
    const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Burst out = burst;
    for (float& v : out.samples) v = static_cast<float>(double(v) + rng.normal(0.0, noise_std));
    return out;
}

std::vector<PairedBurst> make_pairs(const std::vector<Burst>& normals,
                                    const std::vector<Burst>& faults, Rng& rng) {
    N2F_CHECK(!normals.empty() && !faults.empty(), "pairing needs non-empty normal and fault sets");
    const Condition cond = normals.front().condition;
    const size_t len = normals.front().samples.size();
    for (const Burst& b : normals) {
        N2F_CHECK(b.label == 0, "normal set contains a burst with label %d", b.label);
        N2F_CHECK(b.condition == cond, "normal set mixes conditions (%d rpm vs %d rpm)",
                  b.condition.rpm, cond.rpm);
        N2F_CHECK(b.samples.size() == len, "normal set mixes burst lengths");
    }
    for (const Burst& b : faults) {
        N2F_CHECK(b.label != 0, "fault set contains a healthy burst");
        N2F_CHECK(b.condition == cond, "fault burst condition (%d rpm) differs from normal (%d rpm)",
                  b.condition.rpm, cond.rpm);
        N2F_CHECK(b.samples.size() == len, "fault set mixes burst lengths");
    }
    std::vector<PairedBurst> pairs;
    pairs.reserve(faults.size());
    for (const Burst& f : faults) {
        const size_t idx = rng.uniform_index(normals.size());
        pairs.push_back(PairedBurst{normals[idx], f, cond});
    }
    return pairs;
}

DatasetSplit split(const std::vector<Burst>& bursts, const std::map<int, int>& per_class_train,
                   const std::map<int, int>& per_class_test, uint64_t seed) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < bursts.size(); ++i) by_class[bursts[i].label].push_back(i);

    // Collect every class either map mentions, then validate availability.
    std::map<int, std::pair<int, int>> wanted;  // class -> (train, test)
    for (const auto& [c, n] : per_class_train) {
        N2F_CHECK(n >= 0, "negative train count %d for class %d", n, c);
        wanted[c].first = n;
    }
    for (const auto& [c, n] : per_class_test) {
        N2F_CHECK(n >= 0, "negative test count %d for class %d", n, c);
        wanted[c].second = n;
    }
    std::string deficit;
    for (const auto& [c, counts] : wanted) {
        const int need = counts.first + counts.second;
        const int have = static_cast<int>(by_class.count(c) ? by_class[c].size() : 0);
        if (need > have)
            deficit += strformat("%sclass %d (%s): requested %d train + %d test = %d, available %d (deficit %d)",
                                 deficit.empty() ? "" : "; ", c,
                                 c >= 0 && c < kNumClasses ? kClassNames[c] : "?", counts.first,
                                 counts.second, need, have, need - have);
    }
    N2F_CHECK(deficit.empty(), "split request exceeds availability: %s", deficit.c_str());

    DatasetSplit out;
    out.seed = seed;
    Rng rng(seed);
    for (const auto& [c, counts] : wanted) {
        std::vector<size_t>& idx = by_class[c];
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
        for (int i = 0; i < counts.first; ++i) out.train.push_back(bursts[idx[size_t(i)]]);
        for (int i = 0; i < counts.second; ++i)
            out.test.push_back(bursts[idx[size_t(counts.first + i)]]);
    }
    return out;
}

std::vector<Burst> surrogate_generate(int label, Condition condition, int n_bursts,
                                      int64_t burst_len, Rng& rng, double sample_rate_hz) {
    N2F_CHECK(label >= 0 && label < kNumClasses, "label %d out of range [0, %d)", label,
              kNumClasses);
    N2F_CHECK(n_bursts >= 1, "n_bursts must be >= 1, got %d", n_bursts);
    N2F_CHECK(burst_len >= 2, "burst length must be >= 2, got %lld",
              static_cast<long long>(burst_len));
    N2F_CHECK(condition.rpm > 0, "rpm must be positive, got %d", condition.rpm);
    N2F_CHECK(sample_rate_hz > 0, "sample rate must be positive, got %g", sample_rate_hz);

    const double fs = sample_rate_hz;
    const double f_rot = double(condition.rpm) / 60.0;
    const double scale = double(condition.rpm) / kRefRpm;
    // Condition-specific but burst-invariant base phases keep the background
    // waveform aligned across bursts of one condition.
    const double base_phase1 = 2.0 * M_PI * frac(double(condition.rpm) * 0.37);
    const double base_phase2 = 2.0 * M_PI * frac(double(condition.rpm) * 0.61);

    std::vector<Burst> bursts;
    bursts.reserve(static_cast<size_t>(n_bursts));
    for (int n = 0; n < n_bursts; ++n) {
        Burst b;
        b.label = label;
        b.condition = condition;
        b.source_offset = static_cast<uint32_t>(n);
        b.samples.resize(static_cast<size_t>(burst_len));

        const double ph1 = base_phase1 + rng.uniform(-kPhaseJitter, kPhaseJitter);
        const double ph2 = base_phase2 + rng.uniform(-kPhaseJitter, kPhaseJitter);
        for (int64_t t = 0; t < burst_len; ++t) {
            const double time = double(t) / fs;
            double v = scale * (kBgAmp1 * std::sin(2.0 * M_PI * f_rot * time + ph1) +
                                kBgAmp2 * std::sin(2.0 * M_PI * kBgHarmonic * f_rot * time + ph2));
            v += rng.normal(0.0, kNoiseStd);
            b.samples[static_cast<size_t>(t)] = static_cast<float>(v);
        }

        if (label != 0) {
            const double rate_hz = kFaultRateMult[label] * f_rot;
            const double period = fs / rate_hz;  // samples between impulses
            const double ring_hz = kFaultRingHz[label];
            const double tau = kRingTauSec * fs;  // decay constant in samples
            const int64_t ring_span = static_cast<int64_t>(std::ceil(8.0 * tau));
            for (double start = 0.3 * period; start < double(burst_len); start += period) {
                const double amp =
                    kRingAmp * scale * (1.0 + rng.uniform(-kRingAmpJitter, kRingAmpJitter));
                const int64_t t0 = static_cast<int64_t>(std::llround(start));
                const int64_t t_end = std::min<int64_t>(burst_len, t0 + ring_span);
                for (int64_t t = std::max<int64_t>(t0, 0); t < t_end; ++t) {
                    const double dt = double(t - t0) / fs;
                    b.samples[static_cast<size_t>(t)] += static_cast<float>(
                        amp * std::exp(-dt / kRingTauSec) * std::sin(2.0 * M_PI * ring_hz * dt));
                }
            }
        }
        bursts.push_back(std::move(b));
    }
    return bursts;
}

Burst normalize(const Burst& burst, NormParams* params_out) {
    N2F_CHECK(!burst.samples.empty(), "empty burst");
    float lo = burst.samples[0], hi = burst.samples[0];
    for (float v : burst.samples) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    N2F_CHECK(hi > lo, "constant burst cannot be normalized (value %g everywhere)", double(lo));
    if (params_out) *params_out = NormParams{lo, hi};
    Burst out = burst;
    const float span = hi - lo;
    for (float& v : out.samples) v = 2.0f * (v - lo) / span - 1.0f;
    return out;
}

Burst denormalize(const Burst& burst, const NormParams& params) {
    N2F_CHECK(params.max_v > params.min_v, "invalid normalization parameters [%g, %g]",
              double(params.min_v), double(params.max_v));
    Burst out = burst;
    const float span = params.max_v - params.min_v;
    for (float& v : out.samples) v = (v + 1.0f) * 0.5f * span + params.min_v;
    return out;
}

void save_dataset(const std::string& path, const std::vector<Burst>& bursts) {
    N2F_CHECK(!bursts.empty(), "refusing to write an empty dataset");
    const size_t burst_len = bursts.front().samples.size();
    std::string buf;
    buf.reserve(16 + bursts.size() * (8 + 4 * burst_len));
    binio::put_bytes(buf, "N2FD", 4);
    binio::put_u16(buf, 1);
    binio::put_u32(buf, static_cast<uint32_t>(burst_len));
    binio::put_u32(buf, static_cast<uint32_t>(bursts.size()));
    for (const Burst& b : bursts) {
        N2F_CHECK(b.samples.size() == burst_len, "burst length %zu differs from dataset length %zu",
                  b.samples.size(), burst_len);
        N2F_CHECK(b.label >= 0 && b.label <= 255, "label %d does not fit the container", b.label);
        N2F_CHECK(b.condition.rpm > 0 && b.condition.rpm <= 65535,
                  "rpm %d does not fit the container", b.condition.rpm);
        N2F_CHECK(b.condition.load_hp >= 0 && b.condition.load_hp <= 255,
                  "load %d does not fit the container", b.condition.load_hp);
        binio::put_u8(buf, static_cast<uint8_t>(b.label));
        binio::put_u16(buf, static_cast<uint16_t>(b.condition.rpm));
        binio::put_u8(buf, static_cast<uint8_t>(b.condition.load_hp));
        binio::put_u32(buf, b.source_offset);
        for (float v : b.samples) binio::put_f32(buf, v);
    }
    binio::write_file(path, buf);
}

std::vector<Burst> load_dataset(const std::string& path) {
    const std::string bytes = binio::read_file(path);
    binio::Reader r(bytes, path);
    N2F_CHECK_IO(r.bytes(4, "magic") == "N2FD", "%s: not a dataset file (bad magic)", path.c_str());
    const uint16_t version = r.u16("version");
    N2F_CHECK_IO(version == 1, "%s: unsupported dataset version %u", path.c_str(), version);
    const uint32_t burst_len = r.u32("burst_len");
    const uint32_t n_bursts = r.u32("n_bursts");
    N2F_CHECK_IO(burst_len >= 1, "%s: burst length 0", path.c_str());
    std::vector<Burst> bursts;
    bursts.reserve(n_bursts);
    for (uint32_t i = 0; i < n_bursts; ++i) {
        Burst b;
        b.label = r.u8("label");
        b.condition.rpm = r.u16("rpm");
        b.condition.load_hp = r.u8("load_hp");
        b.source_offset = r.u32("source_offset");
        b.samples.resize(burst_len);
        b.samples.shrink_to_fit();
        r.read_f32_block(b.samples.data(), burst_len, "samples");
        bursts.push_back(std::move(b));
    }
    N2F_CHECK_IO(r.remaining() == 0, "%s: %zu trailing bytes after burst %u", path.c_str(),
                 r.remaining(), n_bursts);
    return bursts;
}

}  // namespace n2f
