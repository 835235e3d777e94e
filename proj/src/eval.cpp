#include "n2f/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "n2f/adam.hpp"
#include "n2f/fft.hpp"
#include "n2f/ops.hpp"

namespace n2f {

// ---------------------------------------------------------------------------
// Statistical features
// ---------------------------------------------------------------------------

const std::array<const char*, FeatureVector::kDim> kFeatureNames = {
    "t_mean", "t_std", "t_skewness", "t_crest", "t_kurtosis",
    "f_mean", "f_std", "f_skewness", "f_crest", "f_entropy"};

namespace {

struct MomentStats {
    double mean = 0, sample_std = 0, skewness = 0, crest = 0, kurtosis = 0;
    double m2 = 0;  // population second central moment
};

// Standard moment statistics over a series. A perfectly flat series has zero
// variance; skewness/kurtosis are then defined as 0 so spectra that happen to
// be flat (e.g. a single impulse) still yield finite features.
MomentStats moment_stats(const double* x, int64_t n) {
    MomentStats s;
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    s.mean = acc / static_cast<double>(n);
    double m2 = 0, m3 = 0, m4 = 0, sq = 0, peak = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = x[i] - s.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        sq += x[i] * x[i];
        peak = std::max(peak, std::abs(x[i]));
    }
    const double dn = static_cast<double>(n);
    s.sample_std = n > 1 ? std::sqrt(m2 / (dn - 1.0)) : 0.0;
    m2 /= dn;
    m3 /= dn;
    m4 /= dn;
    s.m2 = m2;
    if (m2 > 0) {
        s.skewness = m3 / std::pow(m2, 1.5);
        s.kurtosis = m4 / (m2 * m2);
    }
    const double rms = std::sqrt(sq / dn);
    s.crest = rms > 0 ? peak / rms : 0.0;
    return s;
}

}  // namespace

FeatureVector extract_features(const Burst& burst) {
    const int64_t n = static_cast<int64_t>(burst.samples.size());
    N2F_CHECK(n >= 2, "feature extraction needs at least 2 samples, got %lld", (long long)n);
    std::vector<double> x(burst.samples.begin(), burst.samples.end());
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    N2F_CHECK(*mx > *mn, "cannot extract features from a constant burst");

    FeatureVector f;
    const MomentStats ts = moment_stats(x.data(), n);
    f.t_mean = ts.mean;
    f.t_std = ts.sample_std;
    f.t_skewness = ts.skewness;
    f.t_crest = ts.crest;
    f.t_kurtosis = ts.kurtosis;

    const std::vector<double> mag = fft_magnitude(x);
    const int64_t m = static_cast<int64_t>(mag.size());
    const MomentStats fs = moment_stats(mag.data(), m);
    f.f_mean = fs.mean;
    f.f_std = fs.sample_std;
    f.f_skewness = fs.skewness;
    f.f_crest = fs.crest;

    // Shannon entropy (nats) of the spectrum normalized to sum one, DC bin
    // excluded so a constant offset cannot swamp the distribution.
    double total = 0;
    for (int64_t k = 1; k < m; ++k) total += mag[static_cast<size_t>(k)];
    if (total > 0) {
        double h = 0;
        for (int64_t k = 1; k < m; ++k) {
            const double p = mag[static_cast<size_t>(k)] / total;
            if (p > 0) h -= p * std::log(p);
        }
        f.f_entropy = h;
    }
    return f;
}

std::vector<FeatureVector> extract_features_batch(const std::vector<Burst>& bursts,
                                                  int n_threads) {
    N2F_CHECK(n_threads >= 1, "n_threads must be >= 1, got %d", n_threads);
    std::vector<FeatureVector> out(bursts.size());
    const int64_t n = static_cast<int64_t>(bursts.size());
    if (n_threads == 1 || n < 2) {
        for (int64_t i = 0; i < n; ++i)
            out[static_cast<size_t>(i)] = extract_features(bursts[static_cast<size_t>(i)]);
        return out;
    }
    const int workers = static_cast<int>(std::min<int64_t>(n_threads, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int64_t i = w; i < n; i += workers)
                    out[static_cast<size_t>(i)] =
                        extract_features(bursts[static_cast<size_t>(i)]);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// t-SNE
// ---------------------------------------------------------------------------

namespace {

// Conditional entropy (nats) and row of conditional probabilities for point i
// at the given precision beta = 1/(2 sigma^2). Distances are shifted by the
// row minimum before exponentiation for numerical stability; the shift
// cancels in both the probabilities and the entropy.
double gaussian_row(const std::vector<double>& d2_row, int64_t i, double beta,
                    std::vector<double>& p_row) {
    const int64_t n = static_cast<int64_t>(d2_row.size());
    double dmin = std::numeric_limits<double>::max();
    for (int64_t j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d2_row[static_cast<size_t>(j)]);
    double z = 0, zd = 0;
    for (int64_t j = 0; j < n; ++j) {
        if (j == i) {
            p_row[static_cast<size_t>(j)] = 0;
            continue;
        }
        const double shifted = d2_row[static_cast<size_t>(j)] - dmin;
        const double e = std::exp(-beta * shifted);
        p_row[static_cast<size_t>(j)] = e;
        z += e;
        zd += e * shifted;
    }
    const double h = std::log(z) + beta * zd / z;
    for (int64_t j = 0; j < n; ++j) p_row[static_cast<size_t>(j)] /= z;
    return h;
}

}  // namespace

TsneResult tsne(const std::vector<FeatureVector>& features, const TsneConfig& cfg) {
    const int64_t n = static_cast<int64_t>(features.size());
    N2F_CHECK(cfg.perplexity > 0, "perplexity must be positive, got %g", cfg.perplexity);
    N2F_CHECK(static_cast<double>(n - 1) > 3.0 * cfg.perplexity,
              "%lld points cannot support perplexity %g (need n - 1 > 3 * perplexity)",
              (long long)n, cfg.perplexity);
    N2F_CHECK(cfg.n_iter >= 250, "n_iter must be >= 250, got %d", cfg.n_iter);
    N2F_CHECK(cfg.early_exaggeration_iters >= 0 && cfg.early_exaggeration_iters <= cfg.n_iter,
              "early exaggeration duration %d outside [0, %d]", cfg.early_exaggeration_iters,
              cfg.n_iter);
    N2F_CHECK(cfg.learning_rate > 0, "learning rate must be positive");
    N2F_CHECK(cfg.early_exaggeration_factor >= 1, "early exaggeration factor must be >= 1");

    constexpr int kDim = FeatureVector::kDim;
    // Z-score each feature dimension; zero-variance dimensions drop to 0.
    std::vector<double> xs(static_cast<size_t>(n) * kDim);
    int informative_dims = 0;
    for (int d = 0; d < kDim; ++d) {
        double mean = 0;
        for (int64_t i = 0; i < n; ++i)
            mean += features[static_cast<size_t>(i)].as_array()[static_cast<size_t>(d)];
        mean /= static_cast<double>(n);
        double var = 0;
        for (int64_t i = 0; i < n; ++i) {
            const double v =
                features[static_cast<size_t>(i)].as_array()[static_cast<size_t>(d)] - mean;
            var += v * v;
        }
        var /= static_cast<double>(n);
        if (var > 0) {
            ++informative_dims;
            const double inv = 1.0 / std::sqrt(var);
            for (int64_t i = 0; i < n; ++i)
                xs[static_cast<size_t>(i * kDim + d)] =
                    (features[static_cast<size_t>(i)].as_array()[static_cast<size_t>(d)] -
                     mean) *
                    inv;
        }
    }
    N2F_CHECK(informative_dims > 0, "degenerate input: all feature vectors are identical");

    // Pairwise squared distances.
    std::vector<double> d2(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            double acc = 0;
            for (int d = 0; d < kDim; ++d) {
                const double diff = xs[static_cast<size_t>(i * kDim + d)] -
                                    xs[static_cast<size_t>(j * kDim + d)];
                acc += diff * diff;
            }
            d2[static_cast<size_t>(i * n + j)] = acc;
            d2[static_cast<size_t>(j * n + i)] = acc;
        }

    // Per-point bandwidth search: bisection on the conditional entropy until
    // it matches log(perplexity).
    const double target_h = std::log(cfg.perplexity);
    std::vector<double> p(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    TsneResult result;
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> d2_row(d2.begin() + i * n, d2.begin() + (i + 1) * n);
        std::vector<double> p_row(static_cast<size_t>(n));
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double h = gaussian_row(d2_row, i, beta, p_row);
        for (int it = 0; it < 300 && std::abs(h - target_h) > 1e-7; ++it) {
            if (h > target_h) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
            } else {
                hi = beta;
                beta = lo > 0.0 ? 0.5 * (lo + hi) : beta * 0.5;
            }
            h = gaussian_row(d2_row, i, beta, p_row);
        }
        result.max_perplexity_error =
            std::max(result.max_perplexity_error, std::abs(std::exp(h) - cfg.perplexity));
        for (int64_t j = 0; j < n; ++j)
            p[static_cast<size_t>(i * n + j)] = p_row[static_cast<size_t>(j)];
    }

    // Symmetrize and normalize to a joint distribution.
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            const double v = (p[static_cast<size_t>(i * n + j)] +
                              p[static_cast<size_t>(j * n + i)]) /
                             (2.0 * static_cast<double>(n));
            const double clamped = std::max(v, 1e-12);
            p[static_cast<size_t>(i * n + j)] = clamped;
            p[static_cast<size_t>(j * n + i)] = clamped;
        }

    // Gradient descent with momentum, adaptive gains, and early exaggeration.
    Rng rng(cfg.seed);
    std::vector<double> y(static_cast<size_t>(n) * 2);
    for (auto& v : y) v = rng.normal(0.0, 1e-2);
    std::vector<double> update(y.size(), 0.0), gains(y.size(), 1.0), grad(y.size(), 0.0);
    std::vector<double> qnum(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    result.kl_trace.reserve(static_cast<size_t>(cfg.n_iter));

    for (int iter = 0; iter < cfg.n_iter; ++iter) {
        const bool exaggerate = iter < cfg.early_exaggeration_iters;
        const double p_scale = exaggerate ? cfg.early_exaggeration_factor : 1.0;
        const double momentum = iter < 250 ? 0.5 : 0.8;

        double zsum = 0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) {
                const double dy0 = y[static_cast<size_t>(i * 2)] - y[static_cast<size_t>(j * 2)];
                const double dy1 =
                    y[static_cast<size_t>(i * 2 + 1)] - y[static_cast<size_t>(j * 2 + 1)];
                const double q = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                qnum[static_cast<size_t>(i * n + j)] = q;
                qnum[static_cast<size_t>(j * n + i)] = q;
                zsum += 2.0 * q;
            }

        std::fill(grad.begin(), grad.end(), 0.0);
        double kl = 0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double pij = p[static_cast<size_t>(i * n + j)];
                const double qn = qnum[static_cast<size_t>(i * n + j)];
                const double qij = std::max(qn / zsum, 1e-12);
                const double mult = 4.0 * (p_scale * pij - qij) * qn;
                grad[static_cast<size_t>(i * 2)] +=
                    mult * (y[static_cast<size_t>(i * 2)] - y[static_cast<size_t>(j * 2)]);
                grad[static_cast<size_t>(i * 2 + 1)] +=
                    mult *
                    (y[static_cast<size_t>(i * 2 + 1)] - y[static_cast<size_t>(j * 2 + 1)]);
                kl += pij * std::log(pij / qij);
            }
        result.kl_trace.push_back(kl);

        for (size_t k = 0; k < y.size(); ++k) {
            const bool same_sign = (grad[k] > 0) == (update[k] > 0);
            gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        double c0 = 0, c1 = 0;
        for (int64_t i = 0; i < n; ++i) {
            c0 += y[static_cast<size_t>(i * 2)];
            c1 += y[static_cast<size_t>(i * 2 + 1)];
        }
        c0 /= static_cast<double>(n);
        c1 /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            y[static_cast<size_t>(i * 2)] -= c0;
            y[static_cast<size_t>(i * 2 + 1)] -= c1;
        }
    }

    result.points.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        result.points[static_cast<size_t>(i)] = {y[static_cast<size_t>(i * 2)],
                                                 y[static_cast<size_t>(i * 2 + 1)]};
    return result;
}

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

const char* classifier_kind_name(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::BinaryLstm: return "binary_lstm";
        case ClassifierKind::ConvLstm: return "convlstm";
        case ClassifierKind::Cnn: return "cnn";
        case ClassifierKind::ConvAe: return "convae";
    }
    N2F_CHECK(false, "invalid classifier kind");
    return "";
}

ClassifierKind classifier_kind_from_name(const std::string& name) {
    if (name == "binary_lstm") return ClassifierKind::BinaryLstm;
    if (name == "convlstm") return ClassifierKind::ConvLstm;
    if (name == "cnn") return ClassifierKind::Cnn;
    if (name == "convae") return ClassifierKind::ConvAe;
    N2F_CHECK(false,
              "unknown classifier kind '%s' (expected binary_lstm, convlstm, cnn, or convae)",
              name.c_str());
    return ClassifierKind::Cnn;
}

namespace {
constexpr int64_t kLstmHidden = 64;
constexpr int64_t kLstmFrame = 16;
constexpr int64_t kConvLstmWidths[] = {16, 32};
constexpr int64_t kCnnWidths[] = {8, 16, 32, 64};
constexpr int64_t kAeEncWidths[] = {8, 16, 32};
constexpr int64_t kAeDecWidths[] = {16, 8, 4};
constexpr double kConvLstmDropout = 0.3;
}  // namespace

template <typename T>
ClassifierT<T>::ClassifierT(ClassifierKind kind_, int n_classes_, int64_t input_len_, Rng& rng)
    : kind(kind_), n_classes(n_classes_), input_len(input_len_) {
    N2F_CHECK(n_classes >= 2, "classifier needs at least 2 classes, got %d", n_classes);
    N2F_CHECK(input_len >= 2, "input length must be >= 2, got %lld", (long long)input_len);
    switch (kind) {
        case ClassifierKind::BinaryLstm: {
            N2F_CHECK(input_len % kLstmFrame == 0,
                      "binary_lstm input length %lld must be divisible by the frame width %lld",
                      (long long)input_len, (long long)kLstmFrame);
            lstm_frame = kLstmFrame;
            lstm = LstmLayerT<T>::create(params, "lstm", kLstmFrame, kLstmHidden, rng);
            fc_out = DenseLayerT<T>::create(params, "fc", kLstmHidden, n_classes, rng);
            break;
        }
        case ClassifierKind::ConvLstm: {
            N2F_CHECK(input_len % 16 == 0,
                      "convlstm input length %lld must be divisible by 16 (two blocks, each "
                      "downsampling by 4)",
                      (long long)input_len);
            int64_t in_ch = 1;
            for (size_t i = 0; i < 2; ++i) {
                const int64_t out_ch = kConvLstmWidths[i];
                convs.push_back(Conv1dLayerT<T>::create(params, "conv" + std::to_string(i),
                                                        in_ch, out_ch, 5, 2, 2, rng));
                bns.push_back(
                    BatchNorm1dLayerT<T>::create(params, "bn" + std::to_string(i), out_ch, rng));
                in_ch = out_ch;
            }
            lstm = LstmLayerT<T>::create(params, "lstm", in_ch, kLstmHidden, rng);
            fc_hidden = DenseLayerT<T>::create(params, "fc_hidden", kLstmHidden, 32, rng);
            fc_out = DenseLayerT<T>::create(params, "fc", 32, n_classes, rng);
            dropout_p = kConvLstmDropout;
            break;
        }
        case ClassifierKind::Cnn: {
            N2F_CHECK(input_len % 256 == 0,
                      "cnn input length %lld must be divisible by 256 (four blocks, each "
                      "downsampling by 4)",
                      (long long)input_len);
            int64_t in_ch = 1;
            for (size_t i = 0; i < 4; ++i) {
                const int64_t out_ch = kCnnWidths[i];
                convs.push_back(Conv1dLayerT<T>::create(params, "conv" + std::to_string(i),
                                                        in_ch, out_ch, 5, 2, 2, rng));
                bns.push_back(
                    BatchNorm1dLayerT<T>::create(params, "bn" + std::to_string(i), out_ch, rng));
                in_ch = out_ch;
            }
            const int64_t flat = in_ch * (input_len / 256);
            fc_out = DenseLayerT<T>::create(params, "fc", flat, n_classes, rng);
            break;
        }
        case ClassifierKind::ConvAe: {
            N2F_CHECK(input_len % 8 == 0,
                      "convae input length %lld must be divisible by 8 (three encoder pools)",
                      (long long)input_len);
            int64_t in_ch = 1;
            for (size_t i = 0; i < 3; ++i) {
                const int64_t out_ch = kAeEncWidths[i];
                convs.push_back(Conv1dLayerT<T>::create(params, "enc" + std::to_string(i),
                                                        in_ch, out_ch, 5, 1, 2, rng));
                in_ch = out_ch;
            }
            for (size_t i = 0; i < 3; ++i) {
                const int64_t out_ch = kAeDecWidths[i];
                convs.push_back(Conv1dLayerT<T>::create(params, "dec" + std::to_string(i),
                                                        in_ch, out_ch, 5, 1, 2, rng));
                in_ch = out_ch;
            }
            n_encoder_blocks = 3;
            n_decoder_blocks = 3;
            const int64_t flat = in_ch * input_len;
            fc_out = DenseLayerT<T>::create(params, "fc", flat, n_classes, rng);
            break;
        }
    }
}

template <typename T>
int ClassifierT<T>::forward(GraphT<T>& g, int x) const {
    const TensorT<T>& xv = g.val(x);
    N2F_CHECK(xv.rank() == 3 && xv.dim(1) == 1 && xv.dim(2) == input_len,
              "classifier expects input [N,1,%lld]", (long long)input_len);
    const int64_t batch = xv.dim(0);
    switch (kind) {
        case ClassifierKind::BinaryLstm: {
            int h = reshape(g, x, {batch, input_len / lstm_frame, lstm_frame});
            int h0 = g.constant(TensorT<T>({batch, kLstmHidden}, T(0)));
            int c0 = g.constant(TensorT<T>({batch, kLstmHidden}, T(0)));
            int hf = -1, cf = -1;
            lstm.forward_state(g, h, h0, c0, &hf, &cf);
            return fc_out.forward(g, hf);
        }
        case ClassifierKind::ConvLstm: {
            int h = x;
            for (size_t i = 0; i < convs.size(); ++i) {
                h = convs[i].forward(g, h);
                h = bns[i].forward(g, h);
                h = relu(g, h);
                h = maxpool1d(g, h, 2);
            }
            h = transpose_last2(g, h);
            int h0 = g.constant(TensorT<T>({batch, kLstmHidden}, T(0)));
            int c0 = g.constant(TensorT<T>({batch, kLstmHidden}, T(0)));
            int hf = -1, cf = -1;
            lstm.forward_state(g, h, h0, c0, &hf, &cf);
            int d = sigmoid_op(g, fc_hidden.forward(g, hf));
            d = dropout(g, d, dropout_p);
            return fc_out.forward(g, d);
        }
        case ClassifierKind::Cnn: {
            int h = x;
            for (size_t i = 0; i < convs.size(); ++i) {
                h = convs[i].forward(g, h);
                h = bns[i].forward(g, h);
                h = relu(g, h);
                h = maxpool1d(g, h, 2);
            }
            h = flatten_samples(g, h);
            return fc_out.forward(g, h);
        }
        case ClassifierKind::ConvAe: {
            int h = x;
            for (int i = 0; i < n_encoder_blocks; ++i) {
                h = convs[static_cast<size_t>(i)].forward(g, h);
                h = relu(g, h);
                h = maxpool1d(g, h, 2);
            }
            for (int i = 0; i < n_decoder_blocks; ++i) {
                h = upsample_nearest1d(g, h, 2);
                h = convs[static_cast<size_t>(n_encoder_blocks + i)].forward(g, h);
                h = relu(g, h);
            }
            h = flatten_samples(g, h);
            return fc_out.forward(g, h);
        }
    }
    N2F_CHECK(false, "invalid classifier kind");
    return -1;
}

template <typename T>
int64_t ClassifierT<T>::param_count() const {
    int64_t total = 0;
    for (ParamT<T>* p : params.trainable()) total += p->value.volume();
    return total;
}

template struct ClassifierT<float>;
template struct ClassifierT<double>;

Classifier build_classifier(ClassifierKind kind, int n_classes, int64_t input_len, Rng& rng) {
    return Classifier(kind, n_classes, input_len, rng);
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

namespace {

// Copies of the burst samples scaled per burst by the peak magnitude,
// packed as [N,1,L]. Peak scaling cancels amplitude units (so bursts from
// different operating conditions share an input range) while preserving sign
// and offset structure, which min-max rescaling would erase. An all-zero
// burst passes through unchanged.
Tensor normalized_batch(const std::vector<const Burst*>& bursts, int64_t len) {
    const int64_t n = static_cast<int64_t>(bursts.size());
    Tensor out({n, 1, len});
    for (int64_t i = 0; i < n; ++i) {
        const std::vector<float>& s = bursts[static_cast<size_t>(i)]->samples;
        float peak = 0;
        for (float v : s) peak = std::max(peak, std::abs(v));
        const float inv = peak > 0 ? 1.0f / peak : 1.0f;
        float* dst = out.data() + i * len;
        for (int64_t j = 0; j < len; ++j) dst[j] = s[static_cast<size_t>(j)] * inv;
    }
    return out;
}

void validate_classifier_data(const Classifier& net, const std::vector<Burst>& bursts,
                              bool need_two_classes) {
    N2F_CHECK(!bursts.empty(), "no bursts given");
    std::set<int> labels;
    for (const Burst& b : bursts) {
        N2F_CHECK(static_cast<int64_t>(b.samples.size()) == net.input_len,
                  "burst length %zu does not match classifier input length %lld",
                  b.samples.size(), (long long)net.input_len);
        N2F_CHECK(b.label >= 0 && b.label < net.n_classes,
                  "label %d out of range for a %d-class classifier", b.label, net.n_classes);
        labels.insert(b.label);
    }
    if (need_two_classes)
        N2F_CHECK(labels.size() >= 2, "training data must contain at least 2 classes, got %zu",
                  labels.size());
}

}  // namespace

std::vector<double> train_classifier(Classifier& net, const std::vector<Burst>& bursts,
                                     const TrainClassifierConfig& cfg) {
    N2F_CHECK(cfg.epochs >= 1, "epochs must be >= 1, got %d", cfg.epochs);
    N2F_CHECK(cfg.batch_size >= 1, "batch size must be >= 1, got %d", cfg.batch_size);
    validate_classifier_data(net, bursts, /*need_two_classes=*/true);

    const int64_t n = static_cast<int64_t>(bursts.size());
    Rng rng(cfg.seed);
    AdamConfigT<float> acfg;
    acfg.lr = static_cast<float>(cfg.learning_rate);
    acfg.beta1 = static_cast<float>(cfg.beta1);
    acfg.beta2 = static_cast<float>(cfg.beta2);
    Adam opt(net.params.trainable(), acfg);

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    trace.reserve(static_cast<size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_index(static_cast<uint64_t>(i + 1)))]);
        double epoch_loss = 0;
        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            const int64_t stop = std::min<int64_t>(start + cfg.batch_size, n);
            std::vector<const Burst*> batch;
            std::vector<int> labels;
            batch.reserve(static_cast<size_t>(stop - start));
            for (int64_t i = start; i < stop; ++i) {
                const Burst& b = bursts[static_cast<size_t>(order[static_cast<size_t>(i)])];
                batch.push_back(&b);
                labels.push_back(b.label);
            }
            Graph g(Mode::Train, &rng);
            const int x = g.constant(normalized_batch(batch, net.input_len));
            const int logits = net.forward(g, x);
            const int loss = softmax_cross_entropy(g, logits, labels);
            const double loss_v = static_cast<double>(g.val(loss).data()[0]);
            N2F_CHECK_NUM(std::isfinite(loss_v),
                          "classifier training aborted at epoch %d: non-finite loss", epoch);
            g.backward(loss);
            opt.step();
            net.params.zero_grad();
            epoch_loss += loss_v * static_cast<double>(stop - start);
        }
        trace.push_back(epoch_loss / static_cast<double>(n));
    }
    return trace;
}

Metrics metrics_from_pairs(const std::vector<int>& labels, const std::vector<int>& preds,
                           int n_classes) {
    N2F_CHECK(labels.size() == preds.size(), "%zu labels vs %zu predictions", labels.size(),
              preds.size());
    N2F_CHECK(!labels.empty(), "cannot compute metrics from an empty set");
    N2F_CHECK(n_classes >= 1, "n_classes must be >= 1");
    Metrics m;
    m.total = static_cast<int64_t>(labels.size());
    m.confusion.assign(static_cast<size_t>(n_classes),
                       std::vector<int64_t>(static_cast<size_t>(n_classes), 0));
    for (size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i], p = preds[i];
        N2F_CHECK(y >= 0 && y < n_classes, "label %d out of range [0,%d)", y, n_classes);
        N2F_CHECK(p >= 0 && p < n_classes, "prediction %d out of range [0,%d)", p, n_classes);
        ++m.confusion[static_cast<size_t>(y)][static_cast<size_t>(p)];
    }
    int64_t trace = 0;
    for (int c = 0; c < n_classes; ++c)
        trace += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    m.accuracy = static_cast<double>(trace) / static_cast<double>(m.total);

    m.per_class_precision.resize(static_cast<size_t>(n_classes), 0.0);
    m.per_class_recall.resize(static_cast<size_t>(n_classes), 0.0);
    m.per_class_f1.resize(static_cast<size_t>(n_classes), 0.0);
    for (int c = 0; c < n_classes; ++c) {
        int64_t tp = m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        int64_t row = 0, col = 0;
        for (int k = 0; k < n_classes; ++k) {
            row += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(k)];
            col += m.confusion[static_cast<size_t>(k)][static_cast<size_t>(c)];
        }
        const double prec = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double rec = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        m.per_class_precision[static_cast<size_t>(c)] = prec;
        m.per_class_recall[static_cast<size_t>(c)] = rec;
        m.per_class_f1[static_cast<size_t>(c)] = f1;
        m.macro_precision += prec;
        m.macro_recall += rec;
        m.macro_f1 += f1;
    }
    m.macro_precision /= static_cast<double>(n_classes);
    m.macro_recall /= static_cast<double>(n_classes);
    m.macro_f1 /= static_cast<double>(n_classes);
    return m;
}

Metrics evaluate(const Classifier& net, const std::vector<Burst>& bursts) {
    validate_classifier_data(net, bursts, /*need_two_classes=*/false);
    constexpr int64_t kEvalBatch = 64;
    const int64_t n = static_cast<int64_t>(bursts.size());
    std::vector<int> labels, preds;
    labels.reserve(static_cast<size_t>(n));
    preds.reserve(static_cast<size_t>(n));
    for (int64_t start = 0; start < n; start += kEvalBatch) {
        const int64_t stop = std::min<int64_t>(start + kEvalBatch, n);
        std::vector<const Burst*> batch;
        for (int64_t i = start; i < stop; ++i)
            batch.push_back(&bursts[static_cast<size_t>(i)]);
        Graph g(Mode::Infer);
        const int x = g.constant(normalized_batch(batch, net.input_len));
        const int logits = net.forward(g, x);
        const Tensor& z = g.val(logits);
        for (int64_t i = 0; i < stop - start; ++i) {
            const float* row = z.data() + i * net.n_classes;
            int best = 0;
            for (int c = 1; c < net.n_classes; ++c)
                if (row[c] > row[best]) best = c;
            labels.push_back(bursts[static_cast<size_t>(start + i)].label);
            preds.push_back(best);
        }
    }
    return metrics_from_pairs(labels, preds, net.n_classes);
}

std::vector<Burst> relabel_binary(const std::vector<Burst>& bursts) {
    std::vector<Burst> out = bursts;
    for (Burst& b : out) b.label = b.label == 0 ? 0 : 1;
    return out;
}

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

ReplacedClassResult replaced_class_experiment(ClassifierKind kind,
                                              const std::vector<Burst>& real_train,
                                              const std::vector<Burst>& synthetic_target,
                                              const std::vector<Burst>& real_test,
                                              const TrainClassifierConfig& cfg) {
    N2F_CHECK(!real_train.empty(), "empty training set");
    N2F_CHECK(!real_test.empty(), "empty test set");
    N2F_CHECK(!synthetic_target.empty(), "no synthetic bursts given");
    const int target = synthetic_target.front().label;
    for (const Burst& b : synthetic_target)
        N2F_CHECK(b.label == target, "synthetic bursts mix labels %d and %d", target, b.label);

    int n_classes = 0;
    for (const Burst& b : real_train) n_classes = std::max(n_classes, b.label + 1);
    for (const Burst& b : real_test) n_classes = std::max(n_classes, b.label + 1);
    N2F_CHECK(target >= 0 && target < n_classes,
              "synthetic label %d not present in the real data's class range [0,%d)", target,
              n_classes);

    const int64_t input_len = static_cast<int64_t>(real_train.front().samples.size());

    ReplacedClassResult result;
    int64_t n_real_target = 0;
    for (const Burst& b : real_test)
        if (b.label == target) ++n_real_target;
    const int64_t n_synth = static_cast<int64_t>(synthetic_target.size());
    const int64_t n_use = std::min(n_real_target, n_synth);
    if (n_synth != n_real_target)
        result.warnings.push_back(strformat(
            "target class %d has %lld real test bursts but %lld synthetic bursts; proceeding "
            "with %lld",
            target, (long long)n_real_target, (long long)n_synth, (long long)n_use));
    N2F_CHECK(n_use > 0, "target class %d absent from the test set", target);

    std::vector<Burst> test;
    test.reserve(real_test.size());
    int64_t replaced = 0;
    for (const Burst& b : real_test) {
        if (b.label != target) {
            test.push_back(b);
        } else if (replaced < n_use) {
            test.push_back(synthetic_target[static_cast<size_t>(replaced)]);
            ++replaced;
        }
    }
    result.n_replaced = replaced;

    Rng rng(cfg.seed);
    Classifier net = build_classifier(kind, n_classes, input_len, rng);
    train_classifier(net, real_train, cfg);
    result.metrics = evaluate(net, test);
    return result;
}

namespace {

// k distinct bursts drawn from the pool members whose label passes the
// filter; order follows the (seeded) partial Fisher-Yates draw.
std::vector<Burst> draw_without_replacement(const std::vector<Burst>& pool, int label,
                                            int64_t k, Rng& rng, const char* what) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < static_cast<int64_t>(pool.size()); ++i)
        if (label < 0 || pool[static_cast<size_t>(i)].label == label) idx.push_back(i);
    N2F_CHECK(static_cast<int64_t>(idx.size()) >= k,
              "%s: need %lld bursts of class %d, pool has %zu", what, (long long)k, label,
              idx.size());
    std::vector<Burst> out;
    out.reserve(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j =
            i + static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(idx.size() - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        out.push_back(pool[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    }
    return out;
}

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double acc = 0;
    for (double v : xs) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

ImbalanceResult imbalance_experiment(const ImbalanceSpec& spec,
                                     const std::vector<Burst>& train_pool_source,
                                     const std::vector<Burst>& health_pool_target_cond,
                                     const std::vector<Burst>& test_pool_target_cond,
                                     const SyntheticSource& synth,
                                     const std::vector<uint64_t>& seeds) {
    N2F_CHECK(!seeds.empty(), "no seeds given");
    N2F_CHECK(spec.target_class > 0 && spec.target_class < kNumClasses,
              "target class %d must be a fault class in [1,%d)", spec.target_class, kNumClasses);
    N2F_CHECK(spec.n_synthetic >= 0, "n_synthetic must be >= 0");
    N2F_CHECK(spec.n_synthetic == 0 || synth != nullptr,
              "a synthetic source is required when n_synthetic > 0");
    for (const Burst& b : health_pool_target_cond)
        N2F_CHECK(b.label == 0, "health pool contains a class-%d burst", b.label);

    ImbalanceResult result;
    std::vector<double> accs, f1s;
    for (uint64_t seed : seeds) {
        Rng rng(seed);

        std::vector<Burst> train;
        // Normal bursts come from both conditions, split as evenly as possible.
        const int64_t n_health_src = spec.n_health_train / 2;
        const int64_t n_health_tgt = spec.n_health_train - n_health_src;
        auto h1 = draw_without_replacement(train_pool_source, 0, n_health_src, rng,
                                           "imbalance training set (source condition)");
        auto h2 = draw_without_replacement(health_pool_target_cond, 0, n_health_tgt, rng,
                                           "imbalance training set (target condition)");
        train.insert(train.end(), h1.begin(), h1.end());
        train.insert(train.end(), h2.begin(), h2.end());
        for (int c = 1; c < kNumClasses; ++c) {
            auto real = draw_without_replacement(train_pool_source, c, spec.n_fault_train, rng,
                                                 "imbalance training set");
            train.insert(train.end(), real.begin(), real.end());
        }
        if (spec.n_synthetic > 0) {
            std::vector<Burst> gen = synth(seed, spec.n_synthetic);
            N2F_CHECK(static_cast<int>(gen.size()) == spec.n_synthetic,
                      "synthetic source produced %zu bursts, expected %d", gen.size(),
                      spec.n_synthetic);
            for (const Burst& b : gen)
                N2F_CHECK(b.label == spec.target_class,
                          "synthetic burst labeled %d, expected target class %d", b.label,
                          spec.target_class);
            train.insert(train.end(), gen.begin(), gen.end());
        }

        std::vector<Burst> test;
        for (int c = 0; c < kNumClasses; ++c) {
            auto t = draw_without_replacement(test_pool_target_cond, c, spec.n_test_per_class,
                                              rng, "imbalance test set");
            test.insert(test.end(), t.begin(), t.end());
        }

        TrainClassifierConfig cfg = spec.train_cfg;
        cfg.seed = seed;
        Rng build_rng(seed);
        Classifier net = build_classifier(
            spec.kind, kNumClasses, static_cast<int64_t>(train.front().samples.size()),
            build_rng);
        train_classifier(net, train, cfg);

        ImbalanceRun run;
        run.seed = seed;
        run.metrics = evaluate(net, test);
        accs.push_back(run.metrics.accuracy);
        f1s.push_back(run.metrics.macro_f1);
        result.runs.push_back(std::move(run));
    }

    result.mean_accuracy = std::accumulate(accs.begin(), accs.end(), 0.0) /
                           static_cast<double>(accs.size());
    result.mean_f1 =
        std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
    result.std_accuracy = sample_std(accs, result.mean_accuracy);
    result.std_f1 = sample_std(f1s, result.mean_f1);
    return result;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void check_source_names(const std::vector<std::string>& sources) {
    for (const std::string& s : sources)
        N2F_CHECK(s == "real" || s == "synthetic",
                  "source must be 'real' or 'synthetic', got '%s'", s.c_str());
}

}  // namespace

std::string features_csv(const std::vector<Burst>& bursts,
                         const std::vector<FeatureVector>& features) {
    N2F_CHECK(bursts.size() == features.size(), "%zu bursts vs %zu feature vectors",
              bursts.size(), features.size());
    std::string out = "burst_id,label,rpm";
    for (const char* name : kFeatureNames) {
        out += ',';
        out += name;
    }
    out += '\n';
    for (size_t i = 0; i < bursts.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += std::to_string(bursts[i].label);
        out += ',';
        out += std::to_string(bursts[i].condition.rpm);
        for (double v : features[i].as_array()) {
            out += ',';
            out += fmt_double(v);
        }
        out += '\n';
    }
    return out;
}

std::string embedding_csv(const std::vector<std::array<double, 2>>& points,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& sources) {
    N2F_CHECK(points.size() == labels.size() && points.size() == sources.size(),
              "embedding export: %zu points, %zu labels, %zu sources", points.size(),
              labels.size(), sources.size());
    check_source_names(sources);
    std::string out = "burst_id,label,source,dim1,dim2\n";
    for (size_t i = 0; i < points.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += std::to_string(labels[i]);
        out += ',';
        out += sources[i];
        out += ',';
        out += fmt_double(points[i][0]);
        out += ',';
        out += fmt_double(points[i][1]);
        out += '\n';
    }
    return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "framework,seed,accuracy,f1,precision,recall\n";
    for (const MetricsRow& r : rows) {
        out += r.framework;
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += fmt_double(r.metrics.accuracy);
        out += ',';
        out += fmt_double(r.metrics.macro_f1);
        out += ',';
        out += fmt_double(r.metrics.macro_precision);
        out += ',';
        out += fmt_double(r.metrics.macro_recall);
        out += '\n';
    }
    return out;
}

std::string scatter_svg(const std::vector<std::array<double, 2>>& points,
                        const std::vector<int>& labels,
                        const std::vector<std::string>& sources) {
    N2F_CHECK(points.size() == labels.size() && points.size() == sources.size(),
              "scatter plot: %zu points, %zu labels, %zu sources", points.size(), labels.size(),
              sources.size());
    N2F_CHECK(!points.empty(), "cannot plot an empty embedding");
    check_source_names(sources);
    static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                    "#d62728", "#9467bd", "#8c564b"};
    constexpr int kNumColors = 6;

    double min_x = points[0][0], max_x = points[0][0];
    double min_y = points[0][1], max_y = points[0][1];
    for (const auto& p : points) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
    }
    const double span_x = max_x > min_x ? max_x - min_x : 1.0;
    const double span_y = max_y > min_y ? max_y - min_y : 1.0;
    // Plot area inside the 800x600 viewbox, leaving room for the legend.
    const double px0 = 40, px1 = 620, py0 = 40, py1 = 560;
    auto sx = [&](double x) { return px0 + (x - min_x) / span_x * (px1 - px0); };
    auto sy = [&](double y) { return py1 - (y - min_y) / span_y * (py1 - py0); };

    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" "
        "height=\"600\">\n"
        "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n"
        "<rect x=\"30\" y=\"30\" width=\"600\" height=\"540\" fill=\"none\" "
        "stroke=\"#888888\"/>\n";
    char buf[256];
    std::set<int> seen_labels;
    bool any_real = false, any_synth = false;
    for (size_t i = 0; i < points.size(); ++i) {
        const char* color = kColors[((labels[i] % kNumColors) + kNumColors) % kNumColors];
        const double cx = sx(points[i][0]);
        const double cy = sy(points[i][1]);
        seen_labels.insert(labels[i]);
        if (sources[i] == "real") {
            any_real = true;
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\" "
                          "fill-opacity=\"0.75\"/>\n",
                          cx, cy, color);
        } else {
            any_synth = true;
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"7\" height=\"7\" fill=\"%s\" "
                          "fill-opacity=\"0.75\"/>\n",
                          cx - 3.5, cy - 3.5, color);
        }
        svg += buf;
    }

    double ly = 50;
    svg += "<text x=\"650\" y=\"" + fmt_double(ly) +
           "\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#000000\">classes</text>\n";
    ly += 10;
    for (int label : seen_labels) {
        ly += 20;
        const char* color = kColors[((label % kNumColors) + kNumColors) % kNumColors];
        const std::string name = label >= 0 && label < kNumClasses
                                     ? std::string(class_name(label))
                                     : "class " + std::to_string(label);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"650\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>\n"
                      "<text x=\"668\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
                      "fill=\"#000000\">%s</text>\n",
                      ly - 10, color, ly, name.c_str());
        svg += buf;
    }
    ly += 34;
    svg += "<text x=\"650\" y=\"" + fmt_double(ly) +
           "\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#000000\">source</text>\n";
    ly += 10;
    if (any_real) {
        ly += 20;
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"656\" cy=\"%.1f\" r=\"5\" fill=\"#555555\"/>\n"
                      "<text x=\"668\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
                      "fill=\"#000000\">real</text>\n",
                      ly - 5, ly);
        svg += buf;
    }
    if (any_synth) {
        ly += 20;
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"650\" y=\"%.1f\" width=\"10\" height=\"10\" "
                      "fill=\"#555555\"/>\n"
                      "<text x=\"668\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
                      "fill=\"#000000\">synthetic</text>\n",
                      ly - 13, ly - 4);
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace n2f
