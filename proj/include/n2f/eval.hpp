#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "n2f/data.hpp"
#include "n2f/graph.hpp"
#include "n2f/layers.hpp"
#include "n2f/rng.hpp"

// Everything used to judge synthetic bursts: statistical feature extraction,
// an exact t-SNE embedding, the benchmark classifiers, metric computation,
// and the replaced-class / imbalance experiment runners.

namespace n2f {

// ---------------------------------------------------------------------------
// Statistical features
// ---------------------------------------------------------------------------

// Ten per-burst statistics: five over the raw samples, five over the
// one-sided magnitude spectrum. Definitions follow the standard moment
// conventions: sample standard deviation (n-1 denominator), Fisher skewness
// m3 / m2^(3/2) and kurtosis m4 / m2^2 from population central moments, crest
// factor max|.| / RMS, and Shannon entropy (nats) of the spectrum normalized
// to sum one with the DC bin excluded so a constant offset cannot dominate.
struct FeatureVector {
    double t_mean = 0, t_std = 0, t_skewness = 0, t_crest = 0, t_kurtosis = 0;
    double f_mean = 0, f_std = 0, f_skewness = 0, f_crest = 0, f_entropy = 0;

    static constexpr int kDim = 10;
    std::array<double, kDim> as_array() const {
        return {t_mean, t_std, t_skewness, t_crest, t_kurtosis,
                f_mean, f_std, f_skewness, f_crest, f_entropy};
    }
};

// Column names in as_array() order; also the tail of the features CSV header.
extern const std::array<const char*, FeatureVector::kDim> kFeatureNames;

// Throws ConfigError on a constant burst (every statistic would degenerate).
FeatureVector extract_features(const Burst& burst);

// Feature extraction over a batch, optionally chunked across threads.
// Output order matches input order regardless of thread count.
std::vector<FeatureVector> extract_features_batch(const std::vector<Burst>& bursts,
                                                  int n_threads = 1);

// ---------------------------------------------------------------------------
// t-SNE
// ---------------------------------------------------------------------------

struct TsneConfig {
    double perplexity = 30.0;
    int n_iter = 1000;
    double learning_rate = 200.0;
    double early_exaggeration_factor = 12.0;
    int early_exaggeration_iters = 250;
    uint64_t seed = 1;
};

struct TsneResult {
    std::vector<std::array<double, 2>> points;
    // KL divergence between the high-dimensional affinities and the embedding,
    // recorded at every iteration (always against the un-exaggerated P).
    std::vector<double> kl_trace;
    // Largest |achieved - target| perplexity gap over all points after the
    // per-point bandwidth search.
    double max_perplexity_error = 0.0;
};

// Exact (quadratic-cost) t-SNE. Features are z-scored per dimension first;
// per-point Gaussian bandwidths are found by bisection on the conditional
// entropy; the embedding is optimized by gradient descent with momentum
// (0.5, then 0.8 after iteration 250), adaptive per-coordinate gains, and
// early exaggeration. Throws ConfigError when all feature rows are identical
// or the configuration is out of range (requires n_points > 3 * perplexity,
// n_iter >= 250).
TsneResult tsne(const std::vector<FeatureVector>& features, const TsneConfig& cfg);

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

enum class ClassifierKind { BinaryLstm, ConvLstm, Cnn, ConvAe };

const char* classifier_kind_name(ClassifierKind kind);
ClassifierKind classifier_kind_from_name(const std::string& name);

// Benchmark classifier over bursts shaped [N,1,L], emitting class logits
// [N, n_classes]. Four architectures:
//   binary_lstm: the burst is framed into 16-sample steps and fed to a
//     single LSTM (hidden 64); a dense layer maps the final hidden state to
//     the class logits. Intended for 2-class normal-vs-fault screening but
//     works for any n_classes.
//   convlstm: two conv blocks (k5 s2 p2, batch norm, ReLU, max-pool 2), the
//     resulting feature sequence into an LSTM (hidden 64), then a dense layer
//     with sigmoid activation, dropout 0.3, and a dense layer to the logits.
//   cnn: four conv blocks (k5 s2 p2, batch norm, ReLU, max-pool 2), flatten,
//     and one fully connected layer to the logits.
//   convae: an autoencoder-shaped network — a three-block conv encoder
//     (k5 s1 p2, ReLU, max-pool 2) and a three-block conv decoder (nearest
//     upsample 2, conv k5 s1 p2, ReLU) back to the input length, then
//     flatten and one fully connected layer to the logits. The whole stack
//     is trained end-to-end on the classification loss.
// Channel widths and kernel sizes are fixed internal choices; input_len must
// be divisible by the total downsampling factor of the chosen architecture.
template <typename T>
struct ClassifierT {
    ClassifierKind kind;
    int n_classes = 0;
    int64_t input_len = 0;

    ParamStoreT<T> params;
    std::vector<Conv1dLayerT<T>> convs;
    std::vector<BatchNorm1dLayerT<T>> bns;
    LstmLayerT<T> lstm;
    DenseLayerT<T> fc_hidden;  // convlstm only
    DenseLayerT<T> fc_out;
    double dropout_p = 0.0;
    int n_encoder_blocks = 0;  // convae: convs[0..n_enc) encode, the rest decode
    int n_decoder_blocks = 0;
    int64_t lstm_frame = 0;  // binary_lstm: samples per LSTM step

    ClassifierT(ClassifierKind kind, int n_classes, int64_t input_len, Rng& rng);

    // x: graph node holding [N,1,input_len]; returns logits node [N,n_classes].
    // Dropout draws from g.rng when g.mode is Train.
    int forward(GraphT<T>& g, int x) const;

    int64_t param_count() const;
};

using Classifier = ClassifierT<float>;

Classifier build_classifier(ClassifierKind kind, int n_classes, int64_t input_len, Rng& rng);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainClassifierConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    uint64_t seed = 1;
};

// Minibatch Adam on softmax cross-entropy with seeded per-epoch shuffling.
// Each burst is scaled by its peak magnitude before entering the network, so
// classification is amplitude-scale free and synthetic bursts share the
// input domain of real ones. Returns the per-epoch mean training loss.
// Throws ConfigError on bad labels/lengths and NumericError when the loss
// turns non-finite.
std::vector<double> train_classifier(Classifier& net, const std::vector<Burst>& bursts,
                                     const TrainClassifierConfig& cfg);

struct Metrics {
    double accuracy = 0;
    double macro_f1 = 0, macro_precision = 0, macro_recall = 0;
    std::vector<double> per_class_f1, per_class_precision, per_class_recall;
    std::vector<std::vector<int64_t>> confusion;  // [true][predicted]
    int64_t total = 0;
};

// Confusion matrix and macro-averaged scores from raw (label, prediction)
// pairs. Zero-denominator precision/recall/F1 are defined as 0.
Metrics metrics_from_pairs(const std::vector<int>& labels, const std::vector<int>& preds,
                           int n_classes);

// Argmax prediction over the test bursts (inference mode, running batch-norm
// statistics, dropout inert).
Metrics evaluate(const Classifier& net, const std::vector<Burst>& bursts);

// Copies of the bursts with labels collapsed to normal-vs-fault (0 stays 0,
// everything else becomes 1), for the 2-class screening protocol.
std::vector<Burst> relabel_binary(const std::vector<Burst>& bursts);

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

struct ReplacedClassResult {
    Metrics metrics;
    int64_t n_replaced = 0;
    std::vector<std::string> warnings;
};

// Trains the chosen classifier on all-real data, then evaluates on a test set
// where the target class's real bursts are swapped for the synthetic ones
// (the target class is the synthetic bursts' shared label). A count mismatch
// between real and synthetic target bursts produces a warning and proceeds
// with the available number. With synthetic bursts identical to the real
// ones, the metrics equal the all-real baseline exactly.
ReplacedClassResult replaced_class_experiment(ClassifierKind kind,
                                              const std::vector<Burst>& real_train,
                                              const std::vector<Burst>& synthetic_target,
                                              const std::vector<Burst>& real_test,
                                              const TrainClassifierConfig& cfg);

// Produces n synthetic bursts of the target class for one repeat; the seed
// varies per repeat. A null source means the no-augmentation control.
using SyntheticSource = std::function<std::vector<Burst>(uint64_t seed, int n)>;

struct ImbalanceSpec {
    int target_class = 1;     // class receiving synthetic support
    int n_synthetic = 100;    // synthetic bursts added to the target class
    int n_health_train = 3000;  // normal training bursts, both conditions pooled
    int n_fault_train = 150;  // real training bursts per fault class (source condition)
    int n_test_per_class = 150;  // held-out-condition test bursts per class
    ClassifierKind kind = ClassifierKind::ConvLstm;
    TrainClassifierConfig train_cfg;
};

struct ImbalanceRun {
    uint64_t seed = 0;
    Metrics metrics;
};

struct ImbalanceResult {
    std::vector<ImbalanceRun> runs;
    double mean_accuracy = 0, std_accuracy = 0;
    double mean_f1 = 0, std_f1 = 0;
};

// One imbalanced-training experiment per seed: draw the training set (normal
// bursts from both condition pools, n_fault_train real bursts per fault
// class from the source-condition pool, plus n_synthetic synthetic bursts
// for the target class), train the classifier, and evaluate on
// n_test_per_class bursts per class drawn from the held-out-condition pool.
// All draws are without replacement; unsatisfiable counts throw ConfigError.
// Aggregates report mean and sample standard deviation over the repeats.
ImbalanceResult imbalance_experiment(const ImbalanceSpec& spec,
                                     const std::vector<Burst>& train_pool_source,
                                     const std::vector<Burst>& health_pool_target_cond,
                                     const std::vector<Burst>& test_pool_target_cond,
                                     const SyntheticSource& synth,
                                     const std::vector<uint64_t>& seeds);

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

// CSV with header burst_id,label,rpm,t_mean,...,f_entropy (one row per burst).
std::string features_csv(const std::vector<Burst>& bursts,
                         const std::vector<FeatureVector>& features);

// CSV with header burst_id,label,source,dim1,dim2. `sources` entries must be
// "real" or "synthetic".
std::string embedding_csv(const std::vector<std::array<double, 2>>& points,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& sources);

struct MetricsRow {
    std::string framework;
    uint64_t seed = 0;
    Metrics metrics;
};

// CSV with header framework,seed,accuracy,f1,precision,recall.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

// Standalone 800x600 SVG scatter plot of a 2-D embedding: one color per
// class, marker shape encodes the source (circle = real, square = synthetic),
// with a legend.
std::string scatter_svg(const std::vector<std::array<double, 2>>& points,
                        const std::vector<int>& labels,
                        const std::vector<std::string>& sources);

}  // namespace n2f
