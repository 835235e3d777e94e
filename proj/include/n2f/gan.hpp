#pragma once

// Normal-to-fault translation networks: an encoder/decoder generator with
// skip connections, a patch-output discriminator over (normal, fault) channel
// pairs, the combined adversarial + L1 objective, the alternating training
// loop, cross-condition synthesis, and byte-exact checkpointing.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "n2f/adam.hpp"
#include "n2f/data.hpp"
#include "n2f/graph.hpp"
#include "n2f/layers.hpp"
#include "n2f/tensor.hpp"

namespace n2f {

struct GeneratorSpec {
    int64_t input_len = 512;
    std::vector<int64_t> block_widths = {256, 128, 64};  // encoder blocks before the bottleneck
    int64_t latent_dim = 64;                             // bottleneck channels (innermost block)
    float dropout_p = 0.5f;
    bool skip_connections = true;

    // Total stride-2 stages: the listed blocks plus the bottleneck block.
    int64_t n_blocks() const { return static_cast<int64_t>(block_widths.size()) + 1; }
};

struct DiscriminatorSpec {
    int64_t input_len = 512;
    std::vector<int64_t> block_widths = {64, 128, 256};
};

struct TrainConfig {
    int64_t steps = 4000;
    float learning_rate = 2e-4f;
    float beta1 = 0.5f;
    int64_t batch_size = 16;
    float lambda_l1 = 100.0f;
    uint64_t seed = 1;
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    // Disables the adversarial pathway entirely (no discriminator updates, no
    // adversarial term), reducing training to supervised L1 regression.
    bool freeze_adversarial = false;
};

// Everything needed to reproduce or resume a training run, as plain named
// tensors so the struct is copyable and maps one-to-one onto the container
// format.
struct Checkpoint {
    GeneratorSpec gspec;
    DiscriminatorSpec dspec;
    Condition condition;  // the condition the training pairs were drawn from
    int fault_label = 0;  // the fault class this generator synthesizes
    uint64_t seed = 0;
    int64_t step = 0;
    int64_t gen_opt_steps = 0;
    int64_t disc_opt_steps = 0;
    std::vector<std::pair<std::string, Tensor>> gen_params;   // weights + batchnorm state
    std::vector<std::pair<std::string, Tensor>> disc_params;  // weights + batchnorm state
    std::vector<std::pair<std::string, Tensor>> opt_state;    // adam moments, named
};

struct TrainTrace {
    std::vector<float> g_adversarial;
    std::vector<float> g_l1;
    std::vector<float> d_real;
    std::vector<float> d_fake;
};

// Encoder/decoder generator. Each encoder block halves the length with a
// stride-2 convolution (batchnorm from the second block on, leaky ReLU); each
// decoder block doubles it back with a transposed convolution + batchnorm +
// dropout + ReLU, concatenating the mirrored encoder activation channelwise
// when skip connections are on. The final transposed convolution maps to one
// channel through tanh. Forward maps [N, 1, input_len] -> [N, 1, input_len].
template <typename T>
class GeneratorT {
  public:
    GeneratorT() = default;
    GeneratorT(GeneratorSpec spec, Rng& rng) : spec_(std::move(spec)) {
        N2F_CHECK(spec_.latent_dim > 0, "latent_dim must be positive, got %lld",
                  static_cast<long long>(spec_.latent_dim));
        N2F_CHECK(!spec_.block_widths.empty(), "generator needs at least one encoder block");
        for (int64_t w : spec_.block_widths)
            N2F_CHECK(w > 0, "block width must be positive, got %lld", static_cast<long long>(w));
        N2F_CHECK(spec_.dropout_p >= 0.0f && spec_.dropout_p < 1.0f,
                  "dropout probability %g outside [0, 1)", double(spec_.dropout_p));
        const int64_t blocks = spec_.n_blocks();
        int64_t div = 1;
        for (int64_t i = 0; i < blocks; ++i) div *= 2;
        N2F_CHECK(spec_.input_len % div == 0 && spec_.input_len / div >= 1,
                  "input length %lld is not divisible by 2^%lld",
                  static_cast<long long>(spec_.input_len), static_cast<long long>(blocks));

        std::vector<int64_t> chans = spec_.block_widths;
        chans.push_back(spec_.latent_dim);
        int64_t in_ch = 1;
        for (size_t i = 0; i < chans.size(); ++i) {
            const std::string name = "enc" + std::to_string(i);
            // The first block keeps a bias and skips batchnorm; later blocks
            // feed batchnorm, which makes a conv bias redundant.
            enc_.push_back(Conv1dLayerT<T>::create(params_, name, in_ch, chans[i], 4, 2, 1, rng,
                                                   /*has_bias=*/i == 0));
            if (i > 0)
                enc_bn_.push_back(BatchNorm1dLayerT<T>::create(params_, name + ".bn", chans[i], rng));
            in_ch = chans[i];
        }
        const size_t b = chans.size();
        int64_t dec_in = spec_.latent_dim;
        for (size_t j = 0; j + 1 < b; ++j) {
            const int64_t out_ch = chans[b - 2 - j];
            const std::string name = "dec" + std::to_string(j);
            dec_.push_back(
                ConvT1dLayerT<T>::create(params_, name, dec_in, out_ch, 4, 2, 1, rng,
                                         /*has_bias=*/false));
            dec_bn_.push_back(BatchNorm1dLayerT<T>::create(params_, name + ".bn", out_ch, rng));
            dec_in = out_ch * (spec_.skip_connections ? 2 : 1);
        }
        final_ = ConvT1dLayerT<T>::create(params_, "final", dec_in, 1, 4, 2, 1, rng,
                                          /*has_bias=*/true);
    }

    int forward(GraphT<T>& g, int x) const {
        const TensorT<T>& xv = g.val(x);
        N2F_CHECK(xv.rank() == 3 && xv.dim(1) == 1, "generator expects [N, 1, L] input");
        N2F_CHECK(xv.dim(2) == spec_.input_len, "generator input length %lld, expected %lld",
                  static_cast<long long>(xv.dim(2)), static_cast<long long>(spec_.input_len));
        std::vector<int> skips;
        int h = x;
        for (size_t i = 0; i < enc_.size(); ++i) {
            h = enc_[i].forward(g, h);
            if (i > 0) h = enc_bn_[i - 1].forward(g, h);
            h = leaky_relu(g, h, T(0.2));
            if (i + 1 < enc_.size()) skips.push_back(h);
        }
        for (size_t j = 0; j < dec_.size(); ++j) {
            h = dec_[j].forward(g, h);
            h = dec_bn_[j].forward(g, h);
            h = dropout(g, h, T(spec_.dropout_p));
            h = relu(g, h);
            if (spec_.skip_connections) h = concat_channels(g, h, skips[skips.size() - 1 - j]);
        }
        return tanh_op(g, final_.forward(g, h));
    }

    const GeneratorSpec& spec() const { return spec_; }
    ParamStoreT<T>& params() { return params_; }
    const ParamStoreT<T>& params() const { return params_; }

  private:
    GeneratorSpec spec_;
    ParamStoreT<T> params_;
    std::vector<Conv1dLayerT<T>> enc_;
    std::vector<BatchNorm1dLayerT<T>> enc_bn_;
    std::vector<ConvT1dLayerT<T>> dec_;
    std::vector<BatchNorm1dLayerT<T>> dec_bn_;
    ConvT1dLayerT<T> final_;
};

// Patch discriminator over a 2-channel (normal, fault) pair: stride-2
// convolutional blocks, each conv + batchnorm + leaky ReLU, then a length-
// preserving convolution to a 1-channel logit map of length input_len / 2^blocks.
template <typename T>
class DiscriminatorT {
  public:
    DiscriminatorT() = default;
    DiscriminatorT(DiscriminatorSpec spec, Rng& rng) : spec_(std::move(spec)) {
        N2F_CHECK(!spec_.block_widths.empty(), "discriminator needs at least one block");
        for (int64_t w : spec_.block_widths)
            N2F_CHECK(w > 0, "block width must be positive, got %lld", static_cast<long long>(w));
        int64_t div = 1;
        for (size_t i = 0; i < spec_.block_widths.size(); ++i) div *= 2;
        N2F_CHECK(spec_.input_len % div == 0 && spec_.input_len / div >= 1,
                  "input length %lld is not divisible by 2^%zu",
                  static_cast<long long>(spec_.input_len), spec_.block_widths.size());
        int64_t in_ch = 2;
        for (size_t i = 0; i < spec_.block_widths.size(); ++i) {
            const std::string name = "block" + std::to_string(i);
            blocks_.push_back(Conv1dLayerT<T>::create(params_, name, in_ch,
                                                      spec_.block_widths[i], 4, 2, 1, rng,
                                                      /*has_bias=*/false));
            bns_.push_back(
                BatchNorm1dLayerT<T>::create(params_, name + ".bn", spec_.block_widths[i], rng));
            in_ch = spec_.block_widths[i];
        }
        head_ = Conv1dLayerT<T>::create(params_, "head", in_ch, 1, 3, 1, 1, rng,
                                        /*has_bias=*/true);
    }

    int forward(GraphT<T>& g, int xpair) const {
        const TensorT<T>& xv = g.val(xpair);
        N2F_CHECK(xv.rank() == 3 && xv.dim(1) == 2, "discriminator expects [N, 2, L] input");
        N2F_CHECK(xv.dim(2) == spec_.input_len, "discriminator input length %lld, expected %lld",
                  static_cast<long long>(xv.dim(2)), static_cast<long long>(spec_.input_len));
        int h = xpair;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            h = blocks_[i].forward(g, h);
            h = bns_[i].forward(g, h);
            h = leaky_relu(g, h, T(0.2));
        }
        return head_.forward(g, h);
    }

    int64_t patch_len() const {
        int64_t l = spec_.input_len;
        for (size_t i = 0; i < spec_.block_widths.size(); ++i) l /= 2;
        return l;
    }

    const DiscriminatorSpec& spec() const { return spec_; }
    ParamStoreT<T>& params() { return params_; }
    const ParamStoreT<T>& params() const { return params_; }

  private:
    DiscriminatorSpec spec_;
    ParamStoreT<T> params_;
    std::vector<Conv1dLayerT<T>> blocks_;
    std::vector<BatchNorm1dLayerT<T>> bns_;
    Conv1dLayerT<T> head_;
};

using Generator = GeneratorT<float>;
using Discriminator = DiscriminatorT<float>;

inline Generator build_generator(const GeneratorSpec& spec, Rng& rng) {
    return Generator(spec, rng);
}
inline Discriminator build_discriminator(const DiscriminatorSpec& spec, Rng& rng) {
    return Discriminator(spec, rng);
}

// Analytic trainable-parameter counts, used to cross-check checkpoints.
int64_t generator_param_count(const GeneratorSpec& spec);
int64_t discriminator_param_count(const DiscriminatorSpec& spec);

struct GeneratorLossNodes {
    int total, adversarial, l1;
};
struct DiscriminatorLossNodes {
    int total, real_term, fake_term;
};

// total = BCE(disc logits on the generated pair, 1) + lambda * mean|generated - target|
template <typename T>
GeneratorLossNodes generator_loss(GraphT<T>& g, int disc_logits_on_fake, int generated,
                                  int target, T lambda_l1) {
    GeneratorLossNodes out;
    out.adversarial = sigmoid_cross_entropy(g, disc_logits_on_fake, T(1));
    out.l1 = l1_loss(g, generated, target);
    out.total = add_scaled(g, out.adversarial, out.l1, lambda_l1);
    return out;
}

// total = BCE(logits_real, 1) + BCE(logits_fake, 0)
template <typename T>
DiscriminatorLossNodes discriminator_loss(GraphT<T>& g, int logits_real, int logits_fake) {
    DiscriminatorLossNodes out;
    out.real_term = sigmoid_cross_entropy(g, logits_real, T(1));
    out.fake_term = sigmoid_cross_entropy(g, logits_fake, T(0));
    out.total = eadd(g, out.real_term, out.fake_term);
    return out;
}

using CheckpointSink = std::function<void(const Checkpoint&, int64_t step)>;

// Alternating adversarial training on one condition's (normal, fault) pairs:
// one discriminator update (on a detached generated batch), then one
// generator update, per iteration. Bursts are normalized per burst
// internally; pairs are sampled with replacement each step. Deterministic
// given cfg.seed. A non-finite loss aborts with the step index.
std::pair<Checkpoint, TrainTrace> train(const std::vector<PairedBurst>& pairs,
                                        const GeneratorSpec& gspec,
                                        const DiscriminatorSpec& dspec, const TrainConfig& cfg,
                                        const CheckpointSink& on_checkpoint = nullptr);

// Synthesizes fault bursts from normal bursts in any condition. Batch
// statistics come from the checkpoint's running estimates; dropout stays
// active as the generation noise source unless deterministic=true. Outputs
// carry the checkpoint's fault label and each input's condition, and are
// mapped back through the input burst's recorded normalization.
std::vector<Burst> generate(const Checkpoint& cp, const std::vector<Burst>& normals,
                            uint64_t seed = 1, bool deterministic = false);

// Copies named tensors into an existing store; every name must resolve with a
// matching shape and every store entry must be covered.
void apply_params(ParamStore& store, const std::vector<std::pair<std::string, Tensor>>& values);

// Checkpoint container (magic "N2FC", version 1). Byte-exact round trip.
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace n2f
