#pragma once

// Reference augmentation methods the translation GAN is compared against:
// classical signal transforms, a label-conditioned GAN that synthesizes
// bursts from noise, and a Wasserstein GAN with gradient penalty. A unified
// augment_dataset entry point appends synthetic bursts of one class to a
// training set with any of these methods (or with the translation GAN).

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "n2f/adam.hpp"
#include "n2f/data.hpp"
#include "n2f/gan.hpp"
#include "n2f/graph.hpp"
#include "n2f/layers.hpp"
#include "n2f/ops.hpp"
#include "n2f/tensor.hpp"

namespace n2f {

// ---------------------------------------------------------------------------
// Classical augmentation

enum class ClassicalOp { Reverse, Noise, Negate };

// Applies one transform: time reversal, additive Gaussian noise with standard
// deviation 0.05 times the burst's sample standard deviation, or negation.
// Label, condition, and length are preserved. Reverse and Negate are
// involutions; Noise draws one normal value per sample from rng.
Burst classical_apply(const Burst& burst, ClassicalOp op, Rng& rng);

// Picks one of the three transforms uniformly at random and applies it.
Burst classical_augment(const Burst& burst, Rng& rng);

// ---------------------------------------------------------------------------
// Shared network building blocks

// Noise-to-signal generator: a dense layer expands the input vector to
// widths[0] channels at length out_len / 2^B (B = widths.size()), then each
// stage doubles the length with a transposed convolution (kernel 4, stride 2,
// pad 1) + batchnorm + ReLU, and a final transposed convolution maps to one
// channel through tanh. Forward maps [N, in_dim] -> [N, 1, out_len].
template <typename T>
class UpGeneratorT {
  public:
    UpGeneratorT() = default;
    UpGeneratorT(int64_t in_dim, int64_t out_len, const std::vector<int64_t>& widths, Rng& rng)
        : in_dim_(in_dim), out_len_(out_len) {
        N2F_CHECK(in_dim >= 1, "generator input dimension must be positive, got %lld",
                  static_cast<long long>(in_dim));
        N2F_CHECK(!widths.empty(), "generator needs at least one width");
        for (int64_t w : widths)
            N2F_CHECK(w > 0, "block width must be positive, got %lld", static_cast<long long>(w));
        int64_t div = 1;
        for (size_t i = 0; i < widths.size(); ++i) div *= 2;
        N2F_CHECK(out_len % div == 0 && out_len / div >= 1,
                  "output length %lld is not divisible by 2^%zu",
                  static_cast<long long>(out_len), widths.size());
        seed_len_ = out_len / div;
        seed_ch_ = widths[0];
        stem_ = DenseLayerT<T>::create(params_, "stem", in_dim, widths[0] * seed_len_, rng,
                                       /*has_bias=*/true);
        stem_bn_ = BatchNorm1dLayerT<T>::create(params_, "stem.bn", widths[0], rng);
        int64_t in_ch = widths[0];
        for (size_t i = 1; i < widths.size(); ++i) {
            const std::string name = "up" + std::to_string(i - 1);
            ups_.push_back(ConvT1dLayerT<T>::create(params_, name, in_ch, widths[i], 4, 2, 1, rng,
                                                    /*has_bias=*/false));
            bns_.push_back(BatchNorm1dLayerT<T>::create(params_, name + ".bn", widths[i], rng));
            in_ch = widths[i];
        }
        final_ = ConvT1dLayerT<T>::create(params_, "final", in_ch, 1, 4, 2, 1, rng,
                                          /*has_bias=*/true);
    }

    int forward(GraphT<T>& g, int z) const {
        const TensorT<T>& zv = g.val(z);
        N2F_CHECK(zv.rank() == 2 && zv.dim(1) == in_dim_,
                  "generator expects [N, %lld] input", static_cast<long long>(in_dim_));
        const int64_t n = zv.dim(0);
        int h = stem_.forward(g, z);
        h = reshape(g, h, {n, seed_ch_, seed_len_});
        h = stem_bn_.forward(g, h);
        h = relu(g, h);
        for (size_t i = 0; i < ups_.size(); ++i) {
            h = ups_[i].forward(g, h);
            h = bns_[i].forward(g, h);
            h = relu(g, h);
        }
        return tanh_op(g, final_.forward(g, h));
    }

    int64_t in_dim() const { return in_dim_; }
    int64_t out_len() const { return out_len_; }
    ParamStoreT<T>& params() { return params_; }
    const ParamStoreT<T>& params() const { return params_; }

  private:
    int64_t in_dim_ = 0, out_len_ = 0, seed_len_ = 0, seed_ch_ = 0;
    ParamStoreT<T> params_;
    DenseLayerT<T> stem_;
    BatchNorm1dLayerT<T> stem_bn_;
    std::vector<ConvT1dLayerT<T>> ups_;
    std::vector<BatchNorm1dLayerT<T>> bns_;
    ConvT1dLayerT<T> final_;
};

// Patch discriminator over in_ch input channels: stride-2 convolutional
// blocks (batchnorm from the second block on, leaky ReLU), then a length-
// preserving convolution to a 1-channel logit map. Used by the conditional
// GAN with the one-hot label broadcast as extra input channels.
template <typename T>
class PatchDiscT {
  public:
    PatchDiscT() = default;
    PatchDiscT(int64_t in_ch, int64_t input_len, const std::vector<int64_t>& widths, Rng& rng)
        : in_ch_(in_ch), input_len_(input_len) {
        N2F_CHECK(in_ch >= 1, "discriminator needs at least one input channel");
        N2F_CHECK(!widths.empty(), "discriminator needs at least one block");
        for (int64_t w : widths)
            N2F_CHECK(w > 0, "block width must be positive, got %lld", static_cast<long long>(w));
        int64_t div = 1;
        for (size_t i = 0; i < widths.size(); ++i) div *= 2;
        N2F_CHECK(input_len % div == 0 && input_len / div >= 1,
                  "input length %lld is not divisible by 2^%zu",
                  static_cast<long long>(input_len), widths.size());
        patch_len_ = input_len / div;
        int64_t ch = in_ch;
        for (size_t i = 0; i < widths.size(); ++i) {
            const std::string name = "block" + std::to_string(i);
            blocks_.push_back(Conv1dLayerT<T>::create(params_, name, ch, widths[i], 4, 2, 1, rng,
                                                      /*has_bias=*/i == 0));
            if (i > 0)
                bns_.push_back(BatchNorm1dLayerT<T>::create(params_, name + ".bn", widths[i], rng));
            ch = widths[i];
        }
        head_ = Conv1dLayerT<T>::create(params_, "head", ch, 1, 3, 1, 1, rng, /*has_bias=*/true);
    }

    int forward(GraphT<T>& g, int x) const {
        const TensorT<T>& xv = g.val(x);
        N2F_CHECK(xv.rank() == 3 && xv.dim(1) == in_ch_ && xv.dim(2) == input_len_,
                  "discriminator expects [N, %lld, %lld] input",
                  static_cast<long long>(in_ch_), static_cast<long long>(input_len_));
        int h = x;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            h = blocks_[i].forward(g, h);
            if (i > 0) h = bns_[i - 1].forward(g, h);
            h = leaky_relu(g, h, T(0.2));
        }
        return head_.forward(g, h);
    }

    int64_t patch_len() const { return patch_len_; }
    ParamStoreT<T>& params() { return params_; }
    const ParamStoreT<T>& params() const { return params_; }

  private:
    int64_t in_ch_ = 0, input_len_ = 0, patch_len_ = 0;
    ParamStoreT<T> params_;
    std::vector<Conv1dLayerT<T>> blocks_;
    std::vector<BatchNorm1dLayerT<T>> bns_;
    Conv1dLayerT<T> head_;
};

// Wasserstein critic: stride-2 convolutions with bias + leaky ReLU (no
// batchnorm anywhere, and no output nonlinearity, as the gradient penalty
// formulation requires), then a length-preserving convolution to a 1-channel
// map. A sample's score is the mean of its map; forward returns the map.
//
// forward_with_input_grad additionally builds, from ordinary recorded ops,
// the gradient of the summed per-sample scores with respect to the input:
// the chain of transposed convolutions that is the exact adjoint of the
// forward chain, with each leaky ReLU contributing its derivative mask as a
// constant factor. The returned node therefore participates in backward()
// like any other, which is what lets the gradient penalty's own gradient
// reach the critic weights.
template <typename T>
class WCriticT {
  public:
    WCriticT() = default;
    WCriticT(int64_t input_len, const std::vector<int64_t>& widths, Rng& rng)
        : input_len_(input_len) {
        N2F_CHECK(!widths.empty(), "critic needs at least one block");
        for (int64_t w : widths)
            N2F_CHECK(w > 0, "block width must be positive, got %lld", static_cast<long long>(w));
        int64_t div = 1;
        for (size_t i = 0; i < widths.size(); ++i) div *= 2;
        N2F_CHECK(input_len % div == 0 && input_len / div >= 1,
                  "input length %lld is not divisible by 2^%zu",
                  static_cast<long long>(input_len), widths.size());
        patch_len_ = input_len / div;
        int64_t ch = 1;
        for (size_t i = 0; i < widths.size(); ++i) {
            const std::string name = "block" + std::to_string(i);
            blocks_.push_back(Conv1dLayerT<T>::create(params_, name, ch, widths[i], 4, 2, 1, rng,
                                                      /*has_bias=*/true));
            ch = widths[i];
        }
        head_ = Conv1dLayerT<T>::create(params_, "head", ch, 1, 3, 1, 1, rng, /*has_bias=*/true);
    }

    int forward(GraphT<T>& g, int x) const { return forward_impl(g, x, nullptr); }

    int forward_with_input_grad(GraphT<T>& g, int x, int* grad_out) const {
        return forward_impl(g, x, grad_out);
    }

    int64_t input_len() const { return input_len_; }
    int64_t patch_len() const { return patch_len_; }
    ParamStoreT<T>& params() { return params_; }
    const ParamStoreT<T>& params() const { return params_; }

  private:
    int forward_impl(GraphT<T>& g, int x, int* grad_out) const {
        const TensorT<T>& xv = g.val(x);
        N2F_CHECK(xv.rank() == 3 && xv.dim(1) == 1 && xv.dim(2) == input_len_,
                  "critic expects [N, 1, %lld] input", static_cast<long long>(input_len_));
        const int64_t n = xv.dim(0);
        std::vector<TensorT<T>> masks;
        int h = x;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const int c = blocks_[i].forward(g, h);
            if (grad_out) {
                // Derivative of leaky ReLU at the recorded pre-activation,
                // captured as a constant: its own derivative is zero almost
                // everywhere, so treating it as constant is exact.
                const TensorT<T>& cv = g.val(c);
                TensorT<T> mask(cv.shape());
                for (int64_t j = 0; j < cv.volume(); ++j)
                    mask.data()[j] = cv[j] > T(0) ? T(1) : T(0.2);
                masks.push_back(std::move(mask));
            }
            h = leaky_relu(g, c, T(0.2));
        }
        const int patches = head_.forward(g, h);
        if (grad_out) {
            // Seed with d(sum of per-sample scores)/d(patch map) = 1/patch_len,
            // then run the adjoint chain back to the input.
            TensorT<T> seed({n, 1, patch_len_}, T(1) / T(patch_len_));
            int gr = g.constant(seed);
            gr = conv_transpose1d(g, gr, g.param(*head_.w), -1, 1, 1);
            for (size_t i = blocks_.size(); i-- > 0;) {
                gr = emul_const(g, gr, masks[i]);
                gr = conv_transpose1d(g, gr, g.param(*blocks_[i].w), -1, 2, 1);
            }
            *grad_out = gr;
        }
        return patches;
    }

    int64_t input_len_ = 0, patch_len_ = 0;
    ParamStoreT<T> params_;
    std::vector<Conv1dLayerT<T>> blocks_;
    Conv1dLayerT<T> head_;
};

using UpGenerator = UpGeneratorT<float>;
using PatchDisc = PatchDiscT<float>;
using WCritic = WCriticT<float>;

// ---------------------------------------------------------------------------
// Conditional GAN

struct CGanSpec {
    int64_t noise_dim = 64;
    // Width of the one-hot label vector appended to the generator input and
    // broadcast as extra discriminator input channels. 0 means "number of
    // classes in the training set"; a nonzero value must be at least that.
    int64_t label_embedding_dim = 0;
    std::vector<int64_t> generator_widths = {128, 64, 32};
    std::vector<int64_t> discriminator_widths = {32, 64, 128};
    // Two-time-scale update rule: the discriminator's Adam learning rate is
    // the configured rate times this factor. At equal rates the generator
    // tracks the discriminator fast enough that its logits never leave zero
    // and the label conditioning is ignored.
    float disc_lr_scale = 4.0f;
};

int64_t cgan_label_width(const CGanSpec& spec, int64_t n_classes);

struct CGanCheckpoint {
    CGanSpec spec;
    int64_t burst_len = 0;
    int64_t n_classes = 0;
    std::vector<int> classes_seen;  // ascending labels present in training
    Condition condition;            // the uniform training condition
    uint64_t seed = 0;
    int64_t step = 0;
    int64_t gen_opt_steps = 0;
    int64_t disc_opt_steps = 0;
    std::vector<std::pair<std::string, Tensor>> gen_params;
    std::vector<std::pair<std::string, Tensor>> disc_params;
    std::vector<std::pair<std::string, Tensor>> opt_state;
};

struct CGanTrace {
    std::vector<float> g_adversarial;  // per step
    std::vector<float> d_real;         // per step
    std::vector<float> d_fake;         // per step
};

// Trains the conditional GAN on bursts from one condition (mixed labels; at
// least two classes required). Bursts are normalized per burst internally;
// batches are sampled with replacement; one discriminator update on a
// detached generated batch then one generator update per step. Deterministic
// given cfg.seed. cfg.lambda_l1, cfg.checkpoint_every, and
// cfg.freeze_adversarial are not used by this model. A non-finite loss
// aborts with the step index.
std::pair<CGanCheckpoint, CGanTrace> cgan_train(const std::vector<Burst>& bursts,
                                                const CGanSpec& spec, const TrainConfig& cfg);

// Draws n bursts of the requested label from fresh noise (so different seeds
// give different bursts). The label must have been present in training.
// Outputs are in the per-burst normalized domain, carry the requested label
// and the checkpoint's condition.
std::vector<Burst> cgan_generate(const CGanCheckpoint& cp, int label, int64_t n,
                                 uint64_t seed = 1);

void save_cgan_checkpoint(const CGanCheckpoint& cp, const std::string& path);
CGanCheckpoint load_cgan_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Wasserstein GAN with gradient penalty

struct WGanGpSpec {
    int64_t noise_dim = 64;
    std::vector<int64_t> generator_widths = {128, 64, 32};
    std::vector<int64_t> critic_widths = {32, 64, 128};
    float gp_weight = 10.0f;
    int64_t critic_steps_per_gen = 5;
    // Two-time-scale update rule: the critic's Adam learning rate is the
    // configured rate times this factor. The gradient penalty throttles how
    // fast the critic function can move, so at equal rates an unconstrained
    // generator outruns it and the real-fake score gap stays negative.
    float critic_lr_scale = 4.0f;
    // Replaces the exact input-gradient norm in the penalty with a central
    // finite difference of the critic along the real-to-generated
    // interpolation direction (step 1e-3). Diagnostic fallback only.
    bool gp_finite_difference = false;
};

struct WGanGpCheckpoint {
    WGanGpSpec spec;
    int64_t burst_len = 0;
    int label = 0;        // the single class this generator synthesizes
    Condition condition;  // the uniform training condition
    uint64_t seed = 0;
    int64_t step = 0;
    int64_t gen_opt_steps = 0;
    int64_t critic_opt_steps = 0;
    std::vector<std::pair<std::string, Tensor>> gen_params;
    std::vector<std::pair<std::string, Tensor>> critic_params;
    std::vector<std::pair<std::string, Tensor>> opt_state;
};

struct WGanGpTrace {
    std::vector<float> critic_real;  // per critic update: mean score on real
    std::vector<float> critic_fake;  // per critic update: mean score on fake
    std::vector<float> penalty;      // per critic update: weighted penalty term
    std::vector<float> g_score;      // per generator update: mean critic score
};

// Trains the WGAN-GP on bursts of one class and condition (at least two
// bursts). cfg.steps counts generator updates, each preceded by
// spec.critic_steps_per_gen critic updates. The critic loss is
// mean(fake) - mean(real) + gp_weight * mean((|grad| - 1)^2) on per-sample
// interpolates; the generator maximizes its mean critic score. Other
// conventions match cgan_train.
std::pair<WGanGpCheckpoint, WGanGpTrace> wgan_gp_train(const std::vector<Burst>& bursts,
                                                       const WGanGpSpec& spec,
                                                       const TrainConfig& cfg);

// Draws n bursts of the trained class from fresh noise, in the per-burst
// normalized domain.
std::vector<Burst> wgan_gp_generate(const WGanGpCheckpoint& cp, int64_t n, uint64_t seed = 1);

void save_wgan_gp_checkpoint(const WGanGpCheckpoint& cp, const std::string& path);
WGanGpCheckpoint load_wgan_gp_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Unified augmentation entry point

enum class AugmenterKind { Classical, CGan, WGanGp, N2fGan };

const char* augmenter_kind_name(AugmenterKind kind);
AugmenterKind augmenter_kind_from_name(const std::string& name);

struct AugmentConfig {
    uint64_t seed = 1;
    // Conditional GAN / WGAN-GP: the model is trained on the fly from the
    // given training set with this configuration.
    CGanSpec cgan;
    WGanGpSpec wgan;
    TrainConfig gan_train;
    // Translation GAN: a pre-trained checkpoint plus the normal bursts to
    // translate (both required for AugmenterKind::N2fGan).
    const Checkpoint* n2fgan_checkpoint = nullptr;
    const std::vector<Burst>* n2fgan_normals = nullptr;
};

struct AugmentResult {
    std::vector<Burst> data;                   // train_set + n_synthetic appended
    int64_t n_clipped = 0;                     // samples clipped into [-1.5, 1.5]
    std::map<int, int64_t> class_histogram;    // label -> burst count in data
    std::vector<std::string> warnings;
};

// Returns train_set plus exactly n_synthetic bursts of target_class produced
// by the chosen method; the original bursts are copied unchanged and
// n_synthetic = 0 adds nothing. Synthetic bursts are in the per-burst
// normalized domain for every method (classical transforms are applied to
// the normalized source burst; the translation GAN's outputs are
// re-normalized); any sample outside [-1.5, 1.5] is clipped and counted.
AugmentResult augment_dataset(AugmenterKind kind, const std::vector<Burst>& train_set,
                              int target_class, int64_t n_synthetic, const AugmentConfig& cfg);

}  // namespace n2f
