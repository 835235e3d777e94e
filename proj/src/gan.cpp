#include "n2f/gan.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "n2f/binio.hpp"
#include "n2f/ops.hpp"
#include "n2fc_io.hpp"

namespace n2f {

namespace {

Tensor batch_from(const std::vector<std::vector<float>>& rows, const std::vector<size_t>& idx,
                  int64_t len) {
    Tensor x({static_cast<int64_t>(idx.size()), 1, len});
    for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t t = 0; t < len; ++t)
            x[static_cast<int64_t>(i) * len + t] = rows[idx[i]][static_cast<size_t>(t)];
    return x;
}

Checkpoint make_snapshot(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec,
                         Condition cond, int fault_label, uint64_t seed, int64_t step,
                         const Generator& gen, const Discriminator& disc, const Adam& gen_opt,
                         const Adam& disc_opt) {
    Checkpoint cp;
    cp.gspec = gspec;
    cp.dspec = dspec;
    cp.condition = cond;
    cp.fault_label = fault_label;
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

int64_t generator_param_count(const GeneratorSpec& spec) {
    std::vector<int64_t> chans = spec.block_widths;
    chans.push_back(spec.latent_dim);
    int64_t count = 0;
    int64_t in_ch = 1;
    for (size_t i = 0; i < chans.size(); ++i) {
        count += chans[i] * in_ch * 4;           // conv weight
        count += i == 0 ? chans[i] : 2 * chans[i];  // bias, or gamma+beta
        in_ch = chans[i];
    }
    const size_t b = chans.size();
    int64_t dec_in = spec.latent_dim;
    for (size_t j = 0; j + 1 < b; ++j) {
        const int64_t out_ch = chans[b - 2 - j];
        count += dec_in * out_ch * 4 + 2 * out_ch;
        dec_in = out_ch * (spec.skip_connections ? 2 : 1);
    }
    count += dec_in * 1 * 4 + 1;  // final transposed conv + bias
    return count;
}

int64_t discriminator_param_count(const DiscriminatorSpec& spec) {
    int64_t count = 0;
    int64_t in_ch = 2;
    for (int64_t w : spec.block_widths) {
        count += w * in_ch * 4 + 2 * w;
        in_ch = w;
    }
    count += 1 * in_ch * 3 + 1;  // head conv + bias
    return count;
}

std::pair<Checkpoint, TrainTrace> train(const std::vector<PairedBurst>& pairs,
                                        const GeneratorSpec& gspec,
                                        const DiscriminatorSpec& dspec, const TrainConfig& cfg,
                                        const CheckpointSink& on_checkpoint) {
    N2F_CHECK(!pairs.empty(), "training requires at least one pair");
    N2F_CHECK(cfg.steps >= 1, "steps must be >= 1, got %lld", (long long)cfg.steps);
    N2F_CHECK(cfg.batch_size >= 1, "batch size must be >= 1, got %lld",
              (long long)cfg.batch_size);
    N2F_CHECK(cfg.lambda_l1 >= 0, "lambda_l1 must be >= 0, got %g", double(cfg.lambda_l1));
    N2F_CHECK(gspec.input_len == dspec.input_len,
              "generator input length %lld differs from discriminator %lld",
              (long long)gspec.input_len, (long long)dspec.input_len);

    const Condition cond = pairs.front().condition;
    const int fault_label = pairs.front().fault.label;
    const int64_t len = gspec.input_len;
    for (const PairedBurst& p : pairs) {
        N2F_CHECK(p.condition == cond, "training pairs mix conditions (%d rpm vs %d rpm)",
                  p.condition.rpm, cond.rpm);
        N2F_CHECK(p.fault.label == fault_label,
                  "training pairs mix fault classes (%d vs %d); one generator learns one class",
                  p.fault.label, fault_label);
        N2F_CHECK(p.normal.label == 0, "pair contains a non-healthy burst on the normal side");
        N2F_CHECK((int64_t)p.normal.samples.size() == len &&
                      (int64_t)p.fault.samples.size() == len,
                  "pair burst length %zu does not match network input length %lld",
                  p.normal.samples.size(), (long long)len);
    }

    // Per-burst normalization up front; the networks only ever see [-1, 1].
    std::vector<std::vector<float>> xn(pairs.size()), xf(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        xn[i] = normalize(pairs[i].normal).samples;
        xf[i] = normalize(pairs[i].fault).samples;
    }

    Rng rng(cfg.seed);
    Generator gen(gspec, rng);
    Discriminator disc(dspec, rng);
    AdamConfig opt_cfg{cfg.learning_rate, cfg.beta1, 0.999f, 1e-8f};
    Adam gen_opt(gen.params().trainable(), opt_cfg);
    Adam disc_opt(disc.params().trainable(), opt_cfg);

    TrainTrace trace;
    trace.g_adversarial.reserve(size_t(cfg.steps));
    trace.g_l1.reserve(size_t(cfg.steps));
    trace.d_real.reserve(size_t(cfg.steps));
    trace.d_fake.reserve(size_t(cfg.steps));

    std::vector<size_t> idx(size_t(cfg.batch_size));
    for (int64_t step = 1; step <= cfg.steps; ++step) try {
        for (size_t k = 0; k < idx.size(); ++k) idx[k] = rng.uniform_index(pairs.size());
        Tensor bn = batch_from(xn, idx, len);
        Tensor bf = batch_from(xf, idx, len);

        float d_real_v = 0.0f, d_fake_v = 0.0f, adv_v = 0.0f, l1_v = 0.0f;

        if (!cfg.freeze_adversarial) {
            Graph gd(Mode::Train, &rng);
            const int normal_in = gd.input(bn);
            const int fake = gen.forward(gd, normal_in);
            const int fake_detached = gd.constant(gd.val(fake));
            const int real_pair = concat_channels(gd, normal_in, gd.input(bf));
            const int fake_pair = concat_channels(gd, normal_in, fake_detached);
            const int logits_real = disc.forward(gd, real_pair);
            const int logits_fake = disc.forward(gd, fake_pair);
            const DiscriminatorLossNodes dl = discriminator_loss(gd, logits_real, logits_fake);
            d_real_v = gd.val(dl.real_term)[0];
            d_fake_v = gd.val(dl.fake_term)[0];
            N2F_CHECK_NUM(std::isfinite(d_real_v) && std::isfinite(d_fake_v),
                          "non-finite discriminator loss at step %lld", (long long)step);
            gd.backward(dl.total);
            disc_opt.step();
            disc.params().zero_grad();
            gen.params().zero_grad();
        }

        {
            Graph gg(Mode::Train, &rng);
            const int normal_in = gg.input(bn);
            const int target = gg.input(bf);
            const int fake = gen.forward(gg, normal_in);
            int total;
            if (cfg.freeze_adversarial) {
                const int l1 = l1_loss(gg, fake, target);
                total = scale(gg, l1, cfg.lambda_l1);
                l1_v = gg.val(l1)[0];
            } else {
                const int fake_pair = concat_channels(gg, normal_in, fake);
                const int logits = disc.forward(gg, fake_pair);
                const GeneratorLossNodes gl =
                    generator_loss(gg, logits, fake, target, cfg.lambda_l1);
                total = gl.total;
                adv_v = gg.val(gl.adversarial)[0];
                l1_v = gg.val(gl.l1)[0];
            }
            N2F_CHECK_NUM(std::isfinite(gg.val(total)[0]),
                          "non-finite generator loss at step %lld", (long long)step);
            gg.backward(total);
            gen_opt.step();
            gen.params().zero_grad();
            disc.params().zero_grad();
        }

        trace.g_adversarial.push_back(adv_v);
        trace.g_l1.push_back(l1_v);
        trace.d_real.push_back(d_real_v);
        trace.d_fake.push_back(d_fake_v);

        if (on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
            step != cfg.steps)
            on_checkpoint(make_snapshot(gspec, dspec, cond, fault_label, cfg.seed, step, gen,
                                        disc, gen_opt, disc_opt),
                          step);
    } catch (const NumericError& e) {
        // Re-raise with the step index so aborts are attributable.
        throw NumericError(strformat("training aborted at step %lld: %s",
                                     static_cast<long long>(step), e.what()));
    }

    Checkpoint final_cp = make_snapshot(gspec, dspec, cond, fault_label, cfg.seed, cfg.steps, gen,
                                        disc, gen_opt, disc_opt);
    if (on_checkpoint) on_checkpoint(final_cp, cfg.steps);
    return {std::move(final_cp), std::move(trace)};
}

void apply_params(ParamStore& store, const std::vector<std::pair<std::string, Tensor>>& values) {
    size_t covered = 0;
    for (const auto& [name, value] : values) {
        Param* p = store.find(name);
        N2F_CHECK_IO(p != nullptr, "checkpoint tensor '%s' does not belong to this network",
                     name.c_str());
        N2F_CHECK_IO(value.same_shape(p->value),
                     "checkpoint tensor '%s' has the wrong shape for this network", name.c_str());
        p->value = value;
        ++covered;
    }
    N2F_CHECK_IO(covered == store.size(),
                 "checkpoint covers %zu of %zu network parameters", covered, store.size());
}

std::vector<Burst> generate(const Checkpoint& cp, const std::vector<Burst>& normals,
                            uint64_t seed, bool deterministic) {
    N2F_CHECK(!normals.empty(), "no input bursts");
    const int64_t len = cp.gspec.input_len;
    for (const Burst& b : normals)
        N2F_CHECK((int64_t)b.samples.size() == len,
                  "input burst length %zu does not match checkpoint input length %lld",
                  b.samples.size(), (long long)len);

    Rng build_rng(1);
    Generator gen(cp.gspec, build_rng);
    apply_params(gen.params(), cp.gen_params);

    std::vector<NormParams> params(normals.size());
    Tensor x({(int64_t)normals.size(), 1, len});
    for (size_t i = 0; i < normals.size(); ++i) {
        const Burst nb = normalize(normals[i], &params[i]);
        for (int64_t t = 0; t < len; ++t)
            x[(int64_t)i * len + t] = nb.samples[(size_t)t];
    }

    Rng rng(seed);
    Graph g(deterministic ? Mode::Infer : Mode::Sample, &rng);
    const int out = gen.forward(g, g.input(x));
    const Tensor& y = g.val(out);
    N2F_CHECK_NUM(y.all_finite(), "generator produced non-finite samples");

    std::vector<Burst> result(normals.size());
    for (size_t i = 0; i < normals.size(); ++i) {
        Burst b;
        b.samples.resize((size_t)len);
        for (int64_t t = 0; t < len; ++t) b.samples[(size_t)t] = y[(int64_t)i * len + t];
        b = denormalize(b, params[i]);
        b.label = cp.fault_label;
        b.condition = normals[i].condition;
        b.source_offset = normals[i].source_offset;
        result[i] = std::move(b);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

std::string spec_block_text(const Checkpoint& cp) {
    std::string s;
    s += "type n2fgan\n";
    s += "generator.input_len " + std::to_string(cp.gspec.input_len) + "\n";
    s += "generator.block_widths " + n2fc::widths_to_text(cp.gspec.block_widths) + "\n";
    s += "generator.latent_dim " + std::to_string(cp.gspec.latent_dim) + "\n";
    s += "generator.dropout_p " + n2fc::fmt_real(double(cp.gspec.dropout_p)) + "\n";
    s += "generator.skip_connections " + std::to_string(cp.gspec.skip_connections ? 1 : 0) + "\n";
    s += "discriminator.input_len " + std::to_string(cp.dspec.input_len) + "\n";
    s += "discriminator.block_widths " + n2fc::widths_to_text(cp.dspec.block_widths) + "\n";
    s += "condition.rpm " + std::to_string(cp.condition.rpm) + "\n";
    s += "condition.load_hp " + std::to_string(cp.condition.load_hp) + "\n";
    s += "fault_label " + std::to_string(cp.fault_label) + "\n";
    s += "seed " + std::to_string(cp.seed) + "\n";
    s += "step " + std::to_string(cp.step) + "\n";
    s += "gen_opt_steps " + std::to_string(cp.gen_opt_steps) + "\n";
    s += "disc_opt_steps " + std::to_string(cp.disc_opt_steps) + "\n";
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    n2fc::write_container(path, spec_block_text(cp),
                          {{"g.", &cp.gen_params},
                           {"d.", &cp.disc_params},
                           {"opt.", &cp.opt_state}});
}

Checkpoint load_checkpoint(const std::string& path) {
    Checkpoint cp;
    const n2fc::KvBlock kv = n2fc::read_container(path, "n2fgan",
                                                  {{"g.", &cp.gen_params},
                                                   {"d.", &cp.disc_params},
                                                   {"opt.", &cp.opt_state}});
    cp.gspec.input_len = kv.get_int("generator.input_len");
    cp.gspec.block_widths = kv.get_widths("generator.block_widths");
    cp.gspec.latent_dim = kv.get_int("generator.latent_dim");
    cp.gspec.dropout_p = static_cast<float>(kv.get_real("generator.dropout_p"));
    cp.gspec.skip_connections = kv.get_int("generator.skip_connections") != 0;
    cp.dspec.input_len = kv.get_int("discriminator.input_len");
    cp.dspec.block_widths = kv.get_widths("discriminator.block_widths");
    cp.condition.rpm = static_cast<int>(kv.get_int("condition.rpm"));
    cp.condition.load_hp = static_cast<int>(kv.get_int("condition.load_hp"));
    cp.fault_label = static_cast<int>(kv.get_int("fault_label"));
    cp.seed = static_cast<uint64_t>(kv.get_int("seed"));
    cp.step = kv.get_int("step");
    cp.gen_opt_steps = kv.get_int("gen_opt_steps");
    cp.disc_opt_steps = kv.get_int("disc_opt_steps");

    // Cross-validate tensors against the declared specs by building both
    // networks and applying the tensors to them.
    Rng rng(1);
    Generator gen(cp.gspec, rng);
    Discriminator disc(cp.dspec, rng);
    apply_params(gen.params(), cp.gen_params);
    apply_params(disc.params(), cp.disc_params);
    AdamConfig opt_cfg;
    Adam gen_opt(gen.params().trainable(), opt_cfg);
    Adam disc_opt(disc.params().trainable(), opt_cfg);
    n2fc::apply_moments(gen_opt, "g.", cp.opt_state);
    n2fc::apply_moments(disc_opt, "d.", cp.opt_state);
    return cp;
}

}  // namespace n2f
