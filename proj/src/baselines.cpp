#include "n2f/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "n2f/binio.hpp"
#include "n2fc_io.hpp"

namespace n2f {

namespace {

// Sample standard deviation (n - 1 denominator); 0 for fewer than two samples.
float sample_std(const std::vector<float>& x) {
    if (x.size() < 2) return 0.0f;
    double mean = 0.0;
    for (float v : x) mean += v;
    mean /= double(x.size());
    double ss = 0.0;
    for (float v : x) ss += (v - mean) * (v - mean);
    return static_cast<float>(std::sqrt(ss / double(x.size() - 1)));
}

}  // namespace

Burst classical_apply(const Burst& burst, ClassicalOp op, Rng& rng) {
    N2F_CHECK(!burst.samples.empty(), "cannot augment an empty burst");
    Burst out = burst;
    switch (op) {
        case ClassicalOp::Reverse:
            std::reverse(out.samples.begin(), out.samples.end());
            break;
        case ClassicalOp::Noise: {
            const float sigma = 0.05f * sample_std(burst.samples);
            for (float& v : out.samples) v += static_cast<float>(rng.normal(0.0, sigma));
            break;
        }
        case ClassicalOp::Negate:
            for (float& v : out.samples) v = -v;
            break;
    }
    return out;
}

Burst classical_augment(const Burst& burst, Rng& rng) {
    const uint64_t pick = rng.uniform_index(3);
    return classical_apply(burst, static_cast<ClassicalOp>(pick), rng);
}

// ---------------------------------------------------------------------------
// Shared training helpers

namespace {

struct DatasetShape {
    int64_t len = 0;
    Condition condition;
    std::vector<int> classes_seen;  // ascending unique labels
    int64_t n_classes = 0;          // max label + 1
};

DatasetShape dataset_shape(const std::vector<Burst>& bursts, const char* what) {
    N2F_CHECK(!bursts.empty(), "%s: no training bursts", what);
    DatasetShape s;
    s.len = static_cast<int64_t>(bursts[0].samples.size());
    s.condition = bursts[0].condition;
    std::set<int> labels;
    for (const Burst& b : bursts) {
        N2F_CHECK(static_cast<int64_t>(b.samples.size()) == s.len,
                  "%s: bursts have mixed lengths (%zu vs %lld)", what, b.samples.size(),
                  static_cast<long long>(s.len));
        N2F_CHECK(b.condition == s.condition,
                  "%s: bursts span more than one operating condition", what);
        N2F_CHECK(b.label >= 0, "%s: negative label %d", what, b.label);
        labels.insert(b.label);
    }
    s.classes_seen.assign(labels.begin(), labels.end());
    s.n_classes = s.classes_seen.back() + 1;
    return s;
}

std::vector<std::vector<float>> normalized_rows(const std::vector<Burst>& bursts) {
    std::vector<std::vector<float>> rows(bursts.size());
    for (size_t i = 0; i < bursts.size(); ++i) rows[i] = normalize(bursts[i]).samples;
    return rows;
}

Tensor batch_rows(const std::vector<std::vector<float>>& rows, const std::vector<size_t>& idx,
                  int64_t len) {
    Tensor x({static_cast<int64_t>(idx.size()), 1, len});
    for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t t = 0; t < len; ++t)
            x[static_cast<int64_t>(i) * len + t] = rows[idx[i]][static_cast<size_t>(t)];
    return x;
}

// One-hot label map broadcast along the burst: [N, width, len].
Tensor label_channels(const std::vector<int>& labels, int64_t width, int64_t len) {
    Tensor y({static_cast<int64_t>(labels.size()), width, len}, 0.0f);
    for (size_t i = 0; i < labels.size(); ++i) {
        float* row = y.data() + (static_cast<int64_t>(i) * width +
                                 static_cast<int64_t>(labels[i])) * len;
        for (int64_t t = 0; t < len; ++t) row[t] = 1.0f;
    }
    return y;
}

// Noise vectors with the one-hot label appended: [N, noise_dim + width].
Tensor noise_with_labels(Rng& rng, const std::vector<int>& labels, int64_t noise_dim,
                         int64_t width) {
    const int64_t n = static_cast<int64_t>(labels.size());
    Tensor z({n, noise_dim + width}, 0.0f);
    for (int64_t i = 0; i < n; ++i) {
        float* row = z.data() + i * (noise_dim + width);
        for (int64_t j = 0; j < noise_dim; ++j) row[j] = static_cast<float>(rng.normal());
        row[noise_dim + labels[static_cast<size_t>(i)]] = 1.0f;
    }
    return z;
}

Tensor plain_noise(Rng& rng, int64_t n, int64_t noise_dim) {
    Tensor z({n, noise_dim});
    for (int64_t i = 0; i < z.volume(); ++i) z[i] = static_cast<float>(rng.normal());
    return z;
}

std::string labels_to_text(const std::vector<int>& labels) {
    std::string s;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(labels[i]);
    }
    return s;
}

std::vector<int> labels_from_text(const std::string& text, const std::string& source) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const long long v = std::strtol(item.c_str(), &end, 10);
        N2F_CHECK_IO(end != item.c_str() && *end == '\0' && v >= 0,
                     "%s: bad label list entry '%s'", source.c_str(), item.c_str());
        out.push_back(static_cast<int>(v));
    }
    N2F_CHECK_IO(!out.empty(), "%s: empty label list", source.c_str());
    return out;
}

// Turns generated [N, 1, len] samples into bursts with the given metadata.
std::vector<Burst> bursts_from_output(const Tensor& y, int64_t len, int label, Condition cond) {
    const int64_t n = y.dim(0);
    std::vector<Burst> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Burst b;
        b.samples.resize(static_cast<size_t>(len));
        for (int64_t t = 0; t < len; ++t) b.samples[static_cast<size_t>(t)] = y[i * len + t];
        b.label = label;
        b.condition = cond;
        out[static_cast<size_t>(i)] = std::move(b);
    }
    return out;
}

}  // namespace

int64_t cgan_label_width(const CGanSpec& spec, int64_t n_classes) {
    N2F_CHECK(n_classes >= 1, "need at least one class");
    if (spec.label_embedding_dim == 0) return n_classes;
    N2F_CHECK(spec.label_embedding_dim >= n_classes,
              "label_embedding_dim %lld cannot hold %lld classes",
              static_cast<long long>(spec.label_embedding_dim),
              static_cast<long long>(n_classes));
    return spec.label_embedding_dim;
}

// ---------------------------------------------------------------------------
// Conditional GAN

namespace {

CGanCheckpoint cgan_snapshot(const CGanSpec& spec, const DatasetShape& shape, uint64_t seed,
                             int64_t step, const UpGenerator& gen, const PatchDisc& disc,
                             const Adam& gen_opt, const Adam& disc_opt) {
    CGanCheckpoint cp;
    cp.spec = spec;
    cp.burst_len = shape.len;
    cp.n_classes = shape.n_classes;
    cp.classes_seen = shape.classes_seen;
    cp.condition = shape.condition;
    cp.seed = seed;
    cp.step = step;
    cp.gen_opt_steps = gen_opt.step_count();
    cp.disc_opt_steps = disc_opt.step_count();
    cp.gen_params = n2fc::snapshot_params(gen.params());
    cp.disc_params = n2fc::snapshot_params(disc.params());
    n2fc::append_moments(cp.opt_state, "g.", gen_opt);
    n2fc::append_moments(cp.opt_state, "d.", disc_opt);
    return cp;
}

}  // namespace

std::pair<CGanCheckpoint, CGanTrace> cgan_train(const std::vector<Burst>& bursts,
                                                const CGanSpec& spec, const TrainConfig& cfg) {
    const DatasetShape shape = dataset_shape(bursts, "cgan_train");
    N2F_CHECK(shape.classes_seen.size() >= 2,
              "cgan_train: a conditional model needs at least two classes, got %zu",
              shape.classes_seen.size());
    N2F_CHECK(spec.noise_dim >= 1, "noise_dim must be positive, got %lld",
              static_cast<long long>(spec.noise_dim));
    N2F_CHECK(spec.disc_lr_scale > 0.0f, "disc_lr_scale must be positive, got %g",
              double(spec.disc_lr_scale));
    N2F_CHECK(cfg.steps >= 1, "steps must be positive, got %lld",
              static_cast<long long>(cfg.steps));
    N2F_CHECK(cfg.batch_size >= 1, "batch_size must be positive, got %lld",
              static_cast<long long>(cfg.batch_size));
    const int64_t lw = cgan_label_width(spec, shape.n_classes);

    const std::vector<std::vector<float>> rows = normalized_rows(bursts);

    Rng rng(cfg.seed);
    UpGenerator gen(spec.noise_dim + lw, shape.len, spec.generator_widths, rng);
    PatchDisc disc(1 + lw, shape.len, spec.discriminator_widths, rng);
    AdamConfig gen_cfg{cfg.learning_rate, cfg.beta1, 0.999f, 1e-8f};
    AdamConfig disc_cfg{cfg.learning_rate * spec.disc_lr_scale, cfg.beta1, 0.999f, 1e-8f};
    Adam gen_opt(gen.params().trainable(), gen_cfg);
    Adam disc_opt(disc.params().trainable(), disc_cfg);

    CGanTrace trace;
    trace.g_adversarial.reserve(static_cast<size_t>(cfg.steps));
    trace.d_real.reserve(static_cast<size_t>(cfg.steps));
    trace.d_fake.reserve(static_cast<size_t>(cfg.steps));

    std::vector<size_t> idx(static_cast<size_t>(cfg.batch_size));
    std::vector<int> labels(idx.size());
    for (int64_t step = 1; step <= cfg.steps; ++step) try {
        for (size_t k = 0; k < idx.size(); ++k) {
            idx[k] = rng.uniform_index(bursts.size());
            labels[k] = bursts[idx[k]].label;
        }
        const Tensor x = batch_rows(rows, idx, shape.len);
        const Tensor ych = label_channels(labels, lw, shape.len);
        const Tensor z = noise_with_labels(rng, labels, spec.noise_dim, lw);

        float d_real_v = 0.0f, d_fake_v = 0.0f, adv_v = 0.0f;
        {
            Graph gd(Mode::Train, &rng);
            const int fake = gen.forward(gd, gd.input(z));
            const int fake_detached = gd.constant(gd.val(fake));
            const int ych_in = gd.input(ych);
            const int logits_real =
                disc.forward(gd, concat_channels(gd, gd.input(x), ych_in));
            const int logits_fake = disc.forward(gd, concat_channels(gd, fake_detached, ych_in));
            const DiscriminatorLossNodes dl = discriminator_loss(gd, logits_real, logits_fake);
            d_real_v = gd.val(dl.real_term)[0];
            d_fake_v = gd.val(dl.fake_term)[0];
            N2F_CHECK_NUM(std::isfinite(d_real_v) && std::isfinite(d_fake_v),
                          "non-finite discriminator loss at step %lld",
                          static_cast<long long>(step));
            gd.backward(dl.total);
            disc_opt.step();
            disc.params().zero_grad();
            gen.params().zero_grad();
        }
        {
            Graph gg(Mode::Train, &rng);
            const int fake = gen.forward(gg, gg.input(z));
            const int logits = disc.forward(gg, concat_channels(gg, fake, gg.input(ych)));
            const int adv = sigmoid_cross_entropy(gg, logits, 1.0f);
            adv_v = gg.val(adv)[0];
            N2F_CHECK_NUM(std::isfinite(adv_v), "non-finite generator loss at step %lld",
                          static_cast<long long>(step));
            gg.backward(adv);
            gen_opt.step();
            gen.params().zero_grad();
            disc.params().zero_grad();
        }
        trace.g_adversarial.push_back(adv_v);
        trace.d_real.push_back(d_real_v);
        trace.d_fake.push_back(d_fake_v);
    } catch (const NumericError& e) {
        throw NumericError(strformat("training aborted at step %lld: %s",
                                     static_cast<long long>(step), e.what()));
    }

    return {cgan_snapshot(spec, shape, cfg.seed, cfg.steps, gen, disc, gen_opt, disc_opt),
            std::move(trace)};
}

std::vector<Burst> cgan_generate(const CGanCheckpoint& cp, int label, int64_t n, uint64_t seed) {
    N2F_CHECK(n >= 0, "cannot generate a negative number of bursts");
    const bool seen = std::find(cp.classes_seen.begin(), cp.classes_seen.end(), label) !=
                      cp.classes_seen.end();
    N2F_CHECK(seen, "label %d was not present in training (saw: %s)", label,
              labels_to_text(cp.classes_seen).c_str());
    std::vector<Burst> out;
    if (n == 0) return out;

    const int64_t lw = cgan_label_width(cp.spec, cp.n_classes);
    Rng build_rng(1);
    UpGenerator gen(cp.spec.noise_dim + lw, cp.burst_len, cp.spec.generator_widths, build_rng);
    apply_params(gen.params(), cp.gen_params);

    Rng rng(seed);
    out.reserve(static_cast<size_t>(n));
    for (int64_t done = 0; done < n;) {
        const int64_t m = std::min<int64_t>(64, n - done);
        const std::vector<int> labels(static_cast<size_t>(m), label);
        const Tensor z = noise_with_labels(rng, labels, cp.spec.noise_dim, lw);
        Graph g(Mode::Sample, &rng);
        const int y = gen.forward(g, g.input(z));
        const Tensor& yv = g.val(y);
        N2F_CHECK_NUM(yv.all_finite(), "generator produced non-finite samples");
        std::vector<Burst> chunk = bursts_from_output(yv, cp.burst_len, label, cp.condition);
        for (Burst& b : chunk) out.push_back(std::move(b));
        done += m;
    }
    return out;
}

namespace {

std::string cgan_spec_text(const CGanCheckpoint& cp) {
    std::string s;
    s += "type cgan\n";
    s += "noise_dim " + std::to_string(cp.spec.noise_dim) + "\n";
    s += "label_embedding_dim " + std::to_string(cp.spec.label_embedding_dim) + "\n";
    s += "generator.widths " + n2fc::widths_to_text(cp.spec.generator_widths) + "\n";
    s += "discriminator.widths " + n2fc::widths_to_text(cp.spec.discriminator_widths) + "\n";
    s += "disc_lr_scale " + n2fc::fmt_real(double(cp.spec.disc_lr_scale)) + "\n";
    s += "burst_len " + std::to_string(cp.burst_len) + "\n";
    s += "n_classes " + std::to_string(cp.n_classes) + "\n";
    s += "classes_seen " + labels_to_text(cp.classes_seen) + "\n";
    s += "condition.rpm " + std::to_string(cp.condition.rpm) + "\n";
    s += "condition.load_hp " + std::to_string(cp.condition.load_hp) + "\n";
    s += "seed " + std::to_string(cp.seed) + "\n";
    s += "step " + std::to_string(cp.step) + "\n";
    s += "gen_opt_steps " + std::to_string(cp.gen_opt_steps) + "\n";
    s += "disc_opt_steps " + std::to_string(cp.disc_opt_steps) + "\n";
    return s;
}

}  // namespace

void save_cgan_checkpoint(const CGanCheckpoint& cp, const std::string& path) {
    n2fc::write_container(path, cgan_spec_text(cp),
                          {{"g.", &cp.gen_params},
                           {"d.", &cp.disc_params},
                           {"opt.", &cp.opt_state}});
}

CGanCheckpoint load_cgan_checkpoint(const std::string& path) {
    CGanCheckpoint cp;
    const n2fc::KvBlock kv = n2fc::read_container(path, "cgan",
                                                  {{"g.", &cp.gen_params},
                                                   {"d.", &cp.disc_params},
                                                   {"opt.", &cp.opt_state}});
    cp.spec.noise_dim = kv.get_int("noise_dim");
    cp.spec.label_embedding_dim = kv.get_int("label_embedding_dim");
    cp.spec.generator_widths = kv.get_widths("generator.widths");
    cp.spec.discriminator_widths = kv.get_widths("discriminator.widths");
    cp.spec.disc_lr_scale = static_cast<float>(kv.get_real("disc_lr_scale"));
    cp.burst_len = kv.get_int("burst_len");
    cp.n_classes = kv.get_int("n_classes");
    cp.classes_seen = labels_from_text(kv.need("classes_seen"), path);
    for (int c : cp.classes_seen)
        N2F_CHECK_IO(c >= 0 && c < cp.n_classes, "%s: seen class %d outside [0, %lld)",
                     path.c_str(), c, static_cast<long long>(cp.n_classes));
    cp.condition.rpm = static_cast<int>(kv.get_int("condition.rpm"));
    cp.condition.load_hp = static_cast<int>(kv.get_int("condition.load_hp"));
    cp.seed = static_cast<uint64_t>(kv.get_int("seed"));
    cp.step = kv.get_int("step");
    cp.gen_opt_steps = kv.get_int("gen_opt_steps");
    cp.disc_opt_steps = kv.get_int("disc_opt_steps");

    // Cross-validate tensors against the spec by rebuilding both networks.
    const int64_t lw = cgan_label_width(cp.spec, cp.n_classes);
    Rng rng(1);
    UpGenerator gen(cp.spec.noise_dim + lw, cp.burst_len, cp.spec.generator_widths, rng);
    PatchDisc disc(1 + lw, cp.burst_len, cp.spec.discriminator_widths, rng);
    apply_params(gen.params(), cp.gen_params);
    apply_params(disc.params(), cp.disc_params);
    AdamConfig opt_cfg;
    Adam gen_opt(gen.params().trainable(), opt_cfg);
    Adam disc_opt(disc.params().trainable(), opt_cfg);
    n2fc::apply_moments(gen_opt, "g.", cp.opt_state);
    n2fc::apply_moments(disc_opt, "d.", cp.opt_state);
    return cp;
}

// ---------------------------------------------------------------------------
// WGAN-GP

namespace {

WGanGpCheckpoint wgan_snapshot(const WGanGpSpec& spec, const DatasetShape& shape, uint64_t seed,
                               int64_t step, const UpGenerator& gen, const WCritic& critic,
                               const Adam& gen_opt, const Adam& critic_opt) {
    WGanGpCheckpoint cp;
    cp.spec = spec;
    cp.burst_len = shape.len;
    cp.label = shape.classes_seen[0];
    cp.condition = shape.condition;
    cp.seed = seed;
    cp.step = step;
    cp.gen_opt_steps = gen_opt.step_count();
    cp.critic_opt_steps = critic_opt.step_count();
    cp.gen_params = n2fc::snapshot_params(gen.params());
    cp.critic_params = n2fc::snapshot_params(critic.params());
    n2fc::append_moments(cp.opt_state, "g.", gen_opt);
    n2fc::append_moments(cp.opt_state, "c.", critic_opt);
    return cp;
}

// Per-sample mean critic score as a [N] node from the patch map.
int per_sample_score(Graph& g, int patches, int64_t patch_len) {
    const int flat = flatten_samples(g, patches);
    const int sums = reduce_sum_rows(g, flat);
    return scale(g, sums, 1.0f / static_cast<float>(patch_len));
}

// Interpolates between real and detached fake samples with one uniform
// epsilon per sample; also returns the normalized per-sample direction
// (fake - real) / |fake - real| used by the finite-difference fallback.
void interpolate_batch(Rng& rng, const Tensor& real, const Tensor& fake, Tensor& xhat,
                       Tensor& direction) {
    const int64_t n = real.dim(0), len = real.dim(2);
    xhat = Tensor({n, 1, len});
    direction = Tensor({n, 1, len});
    for (int64_t i = 0; i < n; ++i) {
        const float e = static_cast<float>(rng.uniform());
        double ss = 0.0;
        for (int64_t t = 0; t < len; ++t) {
            const float r = real[i * len + t], f = fake[i * len + t];
            xhat[i * len + t] = e * r + (1.0f - e) * f;
            const float d = f - r;
            direction[i * len + t] = d;
            ss += double(d) * double(d);
        }
        const double norm = std::sqrt(ss);
        if (norm > 1e-12)
            for (int64_t t = 0; t < len; ++t)
                direction[i * len + t] = static_cast<float>(direction[i * len + t] / norm);
        else
            for (int64_t t = 0; t < len; ++t) direction[i * len + t] = 0.0f;
    }
}

// Unweighted penalty node mean((|grad| - 1)^2), with the gradient either
// exact (recorded adjoint chain) or a finite difference along `direction`.
int penalty_node(Graph& g, const WCritic& critic, const WGanGpSpec& spec, const Tensor& xhat,
                 const Tensor& direction) {
    if (!spec.gp_finite_difference) {
        int grad_x = -1;
        (void)critic.forward_with_input_grad(g, g.input(xhat), &grad_x);
        const int sq = square(g, grad_x);
        const int sums = reduce_sum_rows(g, flatten_samples(g, sq));
        const int norm = sqrt_op(g, add_const(g, sums, 1e-12f));
        return reduce_mean(g, square(g, add_const(g, norm, -1.0f)));
    }
    const float h = 1e-3f;
    Tensor xplus = xhat, xminus = xhat;
    for (int64_t i = 0; i < xhat.volume(); ++i) {
        xplus[i] += h * direction[i];
        xminus[i] -= h * direction[i];
    }
    const int64_t pl = critic.patch_len();
    const int sp = per_sample_score(g, critic.forward(g, g.input(xplus)), pl);
    const int sm = per_sample_score(g, critic.forward(g, g.input(xminus)), pl);
    const int d = scale(g, esub(g, sp, sm), 1.0f / (2.0f * h));
    const int absd = sqrt_op(g, add_const(g, square(g, d), 1e-12f));
    return reduce_mean(g, square(g, add_const(g, absd, -1.0f)));
}

}  // namespace

std::pair<WGanGpCheckpoint, WGanGpTrace> wgan_gp_train(const std::vector<Burst>& bursts,
                                                       const WGanGpSpec& spec,
                                                       const TrainConfig& cfg) {
    N2F_CHECK(bursts.size() >= 2, "wgan_gp_train: need at least two bursts, got %zu",
              bursts.size());
    const DatasetShape shape = dataset_shape(bursts, "wgan_gp_train");
    N2F_CHECK(shape.classes_seen.size() == 1,
              "wgan_gp_train: this model is trained per class; got %zu classes",
              shape.classes_seen.size());
    N2F_CHECK(spec.noise_dim >= 1, "noise_dim must be positive, got %lld",
              static_cast<long long>(spec.noise_dim));
    N2F_CHECK(spec.gp_weight >= 0.0f, "gp_weight must be non-negative, got %g",
              double(spec.gp_weight));
    N2F_CHECK(spec.critic_steps_per_gen >= 1, "critic_steps_per_gen must be positive, got %lld",
              static_cast<long long>(spec.critic_steps_per_gen));
    N2F_CHECK(spec.critic_lr_scale > 0.0f, "critic_lr_scale must be positive, got %g",
              double(spec.critic_lr_scale));
    N2F_CHECK(cfg.steps >= 1, "steps must be positive, got %lld",
              static_cast<long long>(cfg.steps));
    N2F_CHECK(cfg.batch_size >= 1, "batch_size must be positive, got %lld",
              static_cast<long long>(cfg.batch_size));

    const std::vector<std::vector<float>> rows = normalized_rows(bursts);

    Rng rng(cfg.seed);
    UpGenerator gen(spec.noise_dim, shape.len, spec.generator_widths, rng);
    WCritic critic(shape.len, spec.critic_widths, rng);
    // beta2 = 0.9 keeps Adam's second-moment estimate responsive, which this
    // loss needs: the critic objective changes every few steps as the
    // generator moves, so a long second-moment memory mis-scales updates.
    AdamConfig gen_cfg{cfg.learning_rate, cfg.beta1, 0.9f, 1e-8f};
    AdamConfig critic_cfg{cfg.learning_rate * spec.critic_lr_scale, cfg.beta1, 0.9f, 1e-8f};
    Adam gen_opt(gen.params().trainable(), gen_cfg);
    Adam critic_opt(critic.params().trainable(), critic_cfg);

    WGanGpTrace trace;
    trace.critic_real.reserve(static_cast<size_t>(cfg.steps * spec.critic_steps_per_gen));
    trace.critic_fake.reserve(static_cast<size_t>(cfg.steps * spec.critic_steps_per_gen));
    trace.penalty.reserve(static_cast<size_t>(cfg.steps * spec.critic_steps_per_gen));
    trace.g_score.reserve(static_cast<size_t>(cfg.steps));

    std::vector<size_t> idx(static_cast<size_t>(cfg.batch_size));
    for (int64_t step = 1; step <= cfg.steps; ++step) try {
        for (int64_t c = 0; c < spec.critic_steps_per_gen; ++c) {
            for (size_t k = 0; k < idx.size(); ++k) idx[k] = rng.uniform_index(bursts.size());
            const Tensor x = batch_rows(rows, idx, shape.len);
            const Tensor z = plain_noise(rng, cfg.batch_size, spec.noise_dim);

            Graph gc(Mode::Train, &rng);
            const int fake = gen.forward(gc, gc.input(z));
            const Tensor fake_vals = gc.val(fake);
            const int fake_detached = gc.constant(fake_vals);

            Tensor xhat, direction;
            interpolate_batch(rng, x, fake_vals, xhat, direction);

            const int mean_real = reduce_mean(gc, critic.forward(gc, gc.input(x)));
            const int mean_fake = reduce_mean(gc, critic.forward(gc, fake_detached));
            const int pen = penalty_node(gc, critic, spec, xhat, direction);
            const int loss = add_scaled(gc, esub(gc, mean_fake, mean_real), pen, spec.gp_weight);

            const float real_v = gc.val(mean_real)[0];
            const float fake_v = gc.val(mean_fake)[0];
            const float pen_v = spec.gp_weight * gc.val(pen)[0];
            N2F_CHECK_NUM(std::isfinite(real_v) && std::isfinite(fake_v) && std::isfinite(pen_v),
                          "non-finite critic loss at step %lld", static_cast<long long>(step));
            gc.backward(loss);
            critic_opt.step();
            critic.params().zero_grad();
            gen.params().zero_grad();

            trace.critic_real.push_back(real_v);
            trace.critic_fake.push_back(fake_v);
            trace.penalty.push_back(pen_v);
        }
        {
            const Tensor z = plain_noise(rng, cfg.batch_size, spec.noise_dim);
            Graph gg(Mode::Train, &rng);
            const int fake = gen.forward(gg, gg.input(z));
            const int score = reduce_mean(gg, critic.forward(gg, fake));
            const int loss = scale(gg, score, -1.0f);
            const float score_v = gg.val(score)[0];
            N2F_CHECK_NUM(std::isfinite(score_v), "non-finite generator score at step %lld",
                          static_cast<long long>(step));
            gg.backward(loss);
            gen_opt.step();
            gen.params().zero_grad();
            critic.params().zero_grad();
            trace.g_score.push_back(score_v);
        }
    } catch (const NumericError& e) {
        throw NumericError(strformat("training aborted at step %lld: %s",
                                     static_cast<long long>(step), e.what()));
    }

    return {wgan_snapshot(spec, shape, cfg.seed, cfg.steps, gen, critic, gen_opt, critic_opt),
            std::move(trace)};
}

std::vector<Burst> wgan_gp_generate(const WGanGpCheckpoint& cp, int64_t n, uint64_t seed) {
    N2F_CHECK(n >= 0, "cannot generate a negative number of bursts");
    std::vector<Burst> out;
    if (n == 0) return out;

    Rng build_rng(1);
    UpGenerator gen(cp.spec.noise_dim, cp.burst_len, cp.spec.generator_widths, build_rng);
    apply_params(gen.params(), cp.gen_params);

    Rng rng(seed);
    out.reserve(static_cast<size_t>(n));
    for (int64_t done = 0; done < n;) {
        const int64_t m = std::min<int64_t>(64, n - done);
        const Tensor z = plain_noise(rng, m, cp.spec.noise_dim);
        Graph g(Mode::Sample, &rng);
        const int y = gen.forward(g, g.input(z));
        const Tensor& yv = g.val(y);
        N2F_CHECK_NUM(yv.all_finite(), "generator produced non-finite samples");
        std::vector<Burst> chunk = bursts_from_output(yv, cp.burst_len, cp.label, cp.condition);
        for (Burst& b : chunk) out.push_back(std::move(b));
        done += m;
    }
    return out;
}

namespace {

std::string wgan_spec_text(const WGanGpCheckpoint& cp) {
    std::string s;
    s += "type wgan_gp\n";
    s += "noise_dim " + std::to_string(cp.spec.noise_dim) + "\n";
    s += "generator.widths " + n2fc::widths_to_text(cp.spec.generator_widths) + "\n";
    s += "critic.widths " + n2fc::widths_to_text(cp.spec.critic_widths) + "\n";
    s += "gp_weight " + n2fc::fmt_real(double(cp.spec.gp_weight)) + "\n";
    s += "critic_steps_per_gen " + std::to_string(cp.spec.critic_steps_per_gen) + "\n";
    s += "critic_lr_scale " + n2fc::fmt_real(double(cp.spec.critic_lr_scale)) + "\n";
    s += "gp_finite_difference " + std::to_string(cp.spec.gp_finite_difference ? 1 : 0) + "\n";
    s += "burst_len " + std::to_string(cp.burst_len) + "\n";
    s += "label " + std::to_string(cp.label) + "\n";
    s += "condition.rpm " + std::to_string(cp.condition.rpm) + "\n";
    s += "condition.load_hp " + std::to_string(cp.condition.load_hp) + "\n";
    s += "seed " + std::to_string(cp.seed) + "\n";
    s += "step " + std::to_string(cp.step) + "\n";
    s += "gen_opt_steps " + std::to_string(cp.gen_opt_steps) + "\n";
    s += "critic_opt_steps " + std::to_string(cp.critic_opt_steps) + "\n";
    return s;
}

}  // namespace

void save_wgan_gp_checkpoint(const WGanGpCheckpoint& cp, const std::string& path) {
    n2fc::write_container(path, wgan_spec_text(cp),
                          {{"g.", &cp.gen_params},
                           {"c.", &cp.critic_params},
                           {"opt.", &cp.opt_state}});
}

WGanGpCheckpoint load_wgan_gp_checkpoint(const std::string& path) {
    WGanGpCheckpoint cp;
    const n2fc::KvBlock kv = n2fc::read_container(path, "wgan_gp",
                                                  {{"g.", &cp.gen_params},
                                                   {"c.", &cp.critic_params},
                                                   {"opt.", &cp.opt_state}});
    cp.spec.noise_dim = kv.get_int("noise_dim");
    cp.spec.generator_widths = kv.get_widths("generator.widths");
    cp.spec.critic_widths = kv.get_widths("critic.widths");
    cp.spec.gp_weight = static_cast<float>(kv.get_real("gp_weight"));
    cp.spec.critic_steps_per_gen = kv.get_int("critic_steps_per_gen");
    cp.spec.critic_lr_scale = static_cast<float>(kv.get_real("critic_lr_scale"));
    cp.spec.gp_finite_difference = kv.get_int("gp_finite_difference") != 0;
    cp.burst_len = kv.get_int("burst_len");
    cp.label = static_cast<int>(kv.get_int("label"));
    cp.condition.rpm = static_cast<int>(kv.get_int("condition.rpm"));
    cp.condition.load_hp = static_cast<int>(kv.get_int("condition.load_hp"));
    cp.seed = static_cast<uint64_t>(kv.get_int("seed"));
    cp.step = kv.get_int("step");
    cp.gen_opt_steps = kv.get_int("gen_opt_steps");
    cp.critic_opt_steps = kv.get_int("critic_opt_steps");

    Rng rng(1);
    UpGenerator gen(cp.spec.noise_dim, cp.burst_len, cp.spec.generator_widths, rng);
    WCritic critic(cp.burst_len, cp.spec.critic_widths, rng);
    apply_params(gen.params(), cp.gen_params);
    apply_params(critic.params(), cp.critic_params);
    AdamConfig opt_cfg;
    Adam gen_opt(gen.params().trainable(), opt_cfg);
    Adam critic_opt(critic.params().trainable(), opt_cfg);
    n2fc::apply_moments(gen_opt, "g.", cp.opt_state);
    n2fc::apply_moments(critic_opt, "c.", cp.opt_state);
    return cp;
}

// ---------------------------------------------------------------------------
// Unified augmentation entry point

const char* augmenter_kind_name(AugmenterKind kind) {
    switch (kind) {
        case AugmenterKind::Classical: return "classical";
        case AugmenterKind::CGan: return "cgan";
        case AugmenterKind::WGanGp: return "wgan_gp";
        case AugmenterKind::N2fGan: return "n2fgan";
    }
    N2F_CHECK(false, "unknown augmenter kind");
    return "";
}

AugmenterKind augmenter_kind_from_name(const std::string& name) {
    if (name == "classical") return AugmenterKind::Classical;
    if (name == "cgan") return AugmenterKind::CGan;
    if (name == "wgan_gp") return AugmenterKind::WGanGp;
    if (name == "n2fgan") return AugmenterKind::N2fGan;
    throw ConfigError(strformat(
        "unknown augmenter '%s' (expected classical, cgan, wgan_gp, or n2fgan)", name.c_str()));
}

AugmentResult augment_dataset(AugmenterKind kind, const std::vector<Burst>& train_set,
                              int target_class, int64_t n_synthetic, const AugmentConfig& cfg) {
    N2F_CHECK(n_synthetic >= 0, "n_synthetic must be non-negative, got %lld",
              static_cast<long long>(n_synthetic));
    N2F_CHECK(target_class >= 0, "target class must be non-negative, got %d", target_class);

    AugmentResult res;
    res.data = train_set;

    if (n_synthetic > 0) {
        std::vector<Burst> synth;
        switch (kind) {
            case AugmenterKind::Classical: {
                std::vector<size_t> pool;
                for (size_t i = 0; i < train_set.size(); ++i)
                    if (train_set[i].label == target_class) pool.push_back(i);
                N2F_CHECK(!pool.empty(), "no bursts of class %d to augment from", target_class);
                Rng rng(cfg.seed);
                synth.reserve(static_cast<size_t>(n_synthetic));
                for (int64_t i = 0; i < n_synthetic; ++i) {
                    const Burst& src = train_set[pool[rng.uniform_index(pool.size())]];
                    synth.push_back(classical_augment(normalize(src), rng));
                }
                break;
            }
            case AugmenterKind::CGan: {
                const auto [cp, trace] = cgan_train(train_set, cfg.cgan, cfg.gan_train);
                synth = cgan_generate(cp, target_class, n_synthetic, cfg.seed);
                break;
            }
            case AugmenterKind::WGanGp: {
                std::vector<Burst> pool;
                for (const Burst& b : train_set)
                    if (b.label == target_class) pool.push_back(b);
                const auto [cp, trace] = wgan_gp_train(pool, cfg.wgan, cfg.gan_train);
                synth = wgan_gp_generate(cp, n_synthetic, cfg.seed);
                break;
            }
            case AugmenterKind::N2fGan: {
                N2F_CHECK(cfg.n2fgan_checkpoint != nullptr && cfg.n2fgan_normals != nullptr,
                          "the translation method needs a trained checkpoint and normal bursts");
                N2F_CHECK(cfg.n2fgan_checkpoint->fault_label == target_class,
                          "checkpoint synthesizes class %d, but class %d was requested",
                          cfg.n2fgan_checkpoint->fault_label, target_class);
                N2F_CHECK(!cfg.n2fgan_normals->empty(), "no normal bursts to translate");
                Rng rng(cfg.seed);
                std::vector<Burst> inputs;
                inputs.reserve(static_cast<size_t>(n_synthetic));
                for (int64_t i = 0; i < n_synthetic; ++i)
                    inputs.push_back(
                        (*cfg.n2fgan_normals)[rng.uniform_index(cfg.n2fgan_normals->size())]);
                synth = generate(*cfg.n2fgan_checkpoint, inputs, cfg.seed);
                // The translator maps back to each input's raw scale; bring
                // its outputs into the same normalized domain as the other
                // methods.
                for (Burst& b : synth) b = normalize(b);
                break;
            }
        }
        N2F_CHECK(static_cast<int64_t>(synth.size()) == n_synthetic,
                  "augmenter produced %zu bursts, expected %lld", synth.size(),
                  static_cast<long long>(n_synthetic));
        for (Burst& b : synth) {
            b.label = target_class;
            for (float& v : b.samples) {
                if (v > 1.5f) {
                    v = 1.5f;
                    ++res.n_clipped;
                } else if (v < -1.5f) {
                    v = -1.5f;
                    ++res.n_clipped;
                }
            }
            res.data.push_back(std::move(b));
        }
        if (res.n_clipped > 0)
            res.warnings.push_back(strformat(
                "%lld synthetic samples fell outside [-1.5, 1.5] and were clipped",
                static_cast<long long>(res.n_clipped)));
    }

    for (const Burst& b : res.data) ++res.class_histogram[b.label];
    return res;
}

}  // namespace n2f
