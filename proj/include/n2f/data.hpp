#pragma once

// Vibration-signal data handling: ingestion of recordings, segmentation into
// fixed-length bursts, noise injection at a target SNR, normal/fault pairing,
// deterministic splits, a surrogate-signal generator for self-contained
// testing, per-burst normalization, and the binary dataset container.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "n2f/common.hpp"
#include "n2f/rng.hpp"

namespace n2f {

inline constexpr int kNumClasses = 6;

// Class 0 is always the healthy class; 1..5 are the fault classes.
const char* class_name(int id);
int class_id_from_name(const std::string& name);

struct Condition {
    int rpm = 1797;
    int load_hp = 0;
    friend bool operator==(const Condition&, const Condition&) = default;
};

struct SignalRecord {
    std::vector<float> series;
    double sample_rate_hz = 12000.0;
    Condition condition;
    int label = 0;
};

struct Burst {
    std::vector<float> samples;
    int label = 0;
    Condition condition;
    uint32_t source_offset = 0;
};

struct PairedBurst {
    Burst normal;  // label 0
    Burst fault;   // label != 0
    Condition condition;
};

struct DatasetSplit {
    std::vector<Burst> train;
    std::vector<Burst> test;
    uint64_t seed = 0;
};

enum class SignalFormat { CsvSingleColumn, RawF32le };

// Accepts "csv-single-column" and "raw-f32le".
SignalFormat signal_format_from_name(const std::string& name);

// Reads a full recording. CSV: one decimal sample per line, lines starting
// with '#' and blank lines skipped; parse failures report the line number.
// Raw: packed little-endian 32-bit floats; stray trailing bytes report the
// byte offset. An empty series is an error.
SignalRecord ingest(const std::string& path, SignalFormat format, Condition condition, int label,
                    double sample_rate_hz = 12000.0);

// Inverse of ingest for round-trip tests and fixture construction. CSV output
// uses enough digits that re-ingestion is bit-exact.
void export_series(const std::string& path, SignalFormat format, const std::vector<float>& series);

// Cuts bursts at offsets 0, stride, 2*stride, ...; the trailing partial
// window is discarded, so the count is floor((L - burst_len)/stride) + 1.
std::vector<Burst> segment(const SignalRecord& record, int64_t burst_len, int64_t stride);

// Adds white Gaussian noise with power = signal_power / 10^(snr_db/10).
// +infinity is the no-noise sentinel. A zero-power burst is an error.
Burst add_noise(const Burst& burst, double snr_db, Rng& rng);

// Pairs each fault burst with a uniformly drawn normal burst. All bursts must
// share one condition and one length; output order follows `faults`.
std::vector<PairedBurst> make_pairs(const std::vector<Burst>& normals,
                                    const std::vector<Burst>& faults, Rng& rng);

// Seeded, reproducible per-class split. Requests exceeding availability raise
// a configuration error naming each deficient class and its deficit. Classes
// absent from both maps are left out entirely.
DatasetSplit split(const std::vector<Burst>& bursts, const std::map<int, int>& per_class_train,
                   const std::map<int, int>& per_class_test, uint64_t seed);

// Synthesizes bursts with known class structure: the healthy class is two
// sinusoids (rotation frequency rpm/60 and its 3.2x harmonic) plus Gaussian
// noise; each fault class adds a periodic train of exponentially decaying
// ring-downs at a class-specific multiple of the rotation frequency with a
// class-specific carrier frequency. Deterministic given the rng.
std::vector<Burst> surrogate_generate(int label, Condition condition, int n_bursts,
                                      int64_t burst_len, Rng& rng,
                                      double sample_rate_hz = 12000.0);

struct NormParams {
    float min_v = -1.0f;
    float max_v = 1.0f;
};

// Affine map sending min -> -1 and max -> +1; parameters are recorded so the
// map can be inverted. A constant burst is an error.
Burst normalize(const Burst& burst, NormParams* params_out = nullptr);
Burst denormalize(const Burst& burst, const NormParams& params);

// Binary dataset container (magic "N2FD", version 1). All bursts must share
// one length; byte layout is fixed and independent of host endianness.
void save_dataset(const std::string& path, const std::vector<Burst>& bursts);
std::vector<Burst> load_dataset(const std::string& path);

}  // namespace n2f
