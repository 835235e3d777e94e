#include "n2f/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "n2f/baselines.hpp"
#include "n2f/common.hpp"
#include "n2f/data.hpp"
#include "n2f/eval.hpp"
#include "n2f/gan.hpp"
#include "n2f/run_io.hpp"
#include "n2fc_io.hpp"

namespace n2f {
namespace {

namespace fs = std::filesystem;
using n2fc::fmt_real;

// A failed --assert-ordering check: not a configuration problem and not a
// numeric failure, so it gets its own exit code (1).
struct OrderingViolation {
    std::string message;
};

// ---------------------------------------------------------------------------
// Small parsing helpers
// ---------------------------------------------------------------------------

int parse_label(const std::string& text) {
    int64_t v = 0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec == std::errc() && ptr == last) {
        N2F_CHECK(v >= 0 && v < kNumClasses, "class id %lld out of range [0, %d)",
                  static_cast<long long>(v), kNumClasses);
        return static_cast<int>(v);
    }
    return class_id_from_name(text);
}

int parse_int_token(const std::string& text, const char* what) {
    int64_t v = 0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    N2F_CHECK(ec == std::errc() && ptr == last, "%s: expected an integer, got '%s'", what,
              text.c_str());
    return static_cast<int>(v);
}

// "1797:0" -> {rpm 1797, load 0 hp}
Condition parse_condition_token(const std::string& tok) {
    const size_t colon = tok.find(':');
    N2F_CHECK(colon != std::string::npos && colon > 0 && colon + 1 < tok.size(),
              "condition '%s' must be rpm:load_hp, e.g. 1797:0", tok.c_str());
    Condition c;
    c.rpm = parse_int_token(tok.substr(0, colon), "condition rpm");
    c.load_hp = parse_int_token(tok.substr(colon + 1), "condition load_hp");
    N2F_CHECK(c.rpm > 0, "condition '%s': rpm must be positive", tok.c_str());
    N2F_CHECK(c.load_hp >= 0, "condition '%s': load_hp must be >= 0", tok.c_str());
    return c;
}

std::string condition_name(const Condition& c) {
    return std::to_string(c.rpm) + "rpm/" + std::to_string(c.load_hp) + "hp";
}

std::string safe_class_name(int label) {
    if (label >= 0 && label < kNumClasses) return class_name(label);
    return "class " + std::to_string(label);
}

// ---------------------------------------------------------------------------
// Dataset helpers
// ---------------------------------------------------------------------------

std::vector<Burst> filter_condition(const std::vector<Burst>& bursts, const Condition& c) {
    std::vector<Burst> out;
    for (const Burst& b : bursts)
        if (b.condition == c) out.push_back(b);
    return out;
}

std::vector<Burst> filter_label(const std::vector<Burst>& bursts, int label) {
    std::vector<Burst> out;
    for (const Burst& b : bursts)
        if (b.label == label) out.push_back(b);
    return out;
}

std::vector<Condition> distinct_conditions(const std::vector<Burst>& bursts) {
    std::set<std::pair<int, int>> seen;
    std::vector<Condition> out;
    for (const Burst& b : bursts)
        if (seen.insert({b.condition.rpm, b.condition.load_hp}).second) out.push_back(b.condition);
    std::sort(out.begin(), out.end(), [](const Condition& a, const Condition& b) {
        return std::pair(a.rpm, a.load_hp) < std::pair(b.rpm, b.load_hp);
    });
    return out;
}

// Picks the working condition: the keys when given, otherwise the dataset's
// sole condition; a multi-condition dataset demands explicit keys.
Condition select_condition(RunConfig& cfg, const std::vector<Burst>& bursts, const char* rpm_key,
                           const char* load_key) {
    N2F_CHECK(!bursts.empty(), "dataset is empty");
    const std::vector<Condition> conds = distinct_conditions(bursts);
    if (conds.size() > 1)
        N2F_CHECK(cfg.has(rpm_key) && cfg.has(load_key),
                  "dataset spans %zu conditions; set '%s' and '%s' to pick one", conds.size(),
                  rpm_key, load_key);
    Condition out;
    out.rpm = static_cast<int>(cfg.get_int(rpm_key, conds.front().rpm));
    out.load_hp = static_cast<int>(cfg.get_int(load_key, conds.front().load_hp));
    return out;
}

void seeded_shuffle(std::vector<Burst>& bursts, Rng& rng) {
    for (size_t i = bursts.size(); i > 1; --i)
        std::swap(bursts[i - 1], bursts[rng.uniform_index(i)]);
}

// n picks from the pool: a seeded partial shuffle when n fits, uniform draws
// with replacement otherwise (reported through `with_replacement`).
std::vector<Burst> sample_bursts(const std::vector<Burst>& pool, int64_t n, Rng& rng,
                                 bool* with_replacement = nullptr) {
    N2F_CHECK(!pool.empty(), "cannot sample from an empty burst pool");
    N2F_CHECK(n >= 0, "sample size must be >= 0");
    std::vector<Burst> out;
    out.reserve(static_cast<size_t>(n));
    if (static_cast<size_t>(n) <= pool.size()) {
        std::vector<size_t> idx(pool.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (int64_t i = 0; i < n; ++i) {
            const size_t j = i + rng.uniform_index(idx.size() - i);
            std::swap(idx[i], idx[j]);
            out.push_back(pool[idx[i]]);
        }
        if (with_replacement) *with_replacement = false;
    } else {
        for (int64_t i = 0; i < n; ++i) out.push_back(pool[rng.uniform_index(pool.size())]);
        if (with_replacement) *with_replacement = true;
    }
    return out;
}

void print_dataset_summary(const std::vector<Burst>& bursts, const std::string& path) {
    std::map<std::pair<std::pair<int, int>, int>, int64_t> counts;
    for (const Burst& b : bursts) counts[{{b.condition.rpm, b.condition.load_hp}, b.label}]++;
    for (const auto& [key, n] : counts) {
        const auto& [cond, label] = key;
        std::printf("  class %d (%s) @ %drpm/%dhp: %lld bursts\n", label,
                    safe_class_name(label).c_str(), cond.first, cond.second,
                    static_cast<long long>(n));
    }
    std::printf("total %zu bursts -> %s\n", bursts.size(), path.c_str());
}

// First line of the checkpoint container's spec block, e.g. "n2fgan".
std::string checkpoint_type(const std::string& path) {
    const std::string bytes = binio::read_file(path);
    binio::Reader r(bytes, path);
    N2F_CHECK_IO(r.bytes(4, "magic") == "N2FC", "%s: not a checkpoint file (bad magic)",
                 path.c_str());
    r.u16("version");
    const uint32_t spec_len = r.u32("spec block length");
    n2fc::KvBlock kv(r.bytes(spec_len, "spec block"), path);
    return kv.need("type");
}

// ---------------------------------------------------------------------------
// Command plumbing: config resolution, artifacts, manifest
// ---------------------------------------------------------------------------

struct CommonFlags {
    std::string config, seed, out, threads;
};

void add_common_flags(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "key/value run configuration file");
    sub->add_option("--seed", f.seed, "override the 'seed' config key");
    sub->add_option("--out", f.out, "output directory (override the 'out' config key)");
    sub->add_option("--threads", f.threads, "worker count (override the 'threads' config key)");
}

class CommandCtx {
public:
    CommandCtx(std::string name, CLI::App* sub, const CommonFlags& flags) : name_(std::move(name)) {
        manifest_.command = name_;
        manifest_.started_at = iso8601_utc_now();
        if (sub->count("--config") > 0) {
            config_path_ = flags.config;
            cfg_ = RunConfig::load(config_path_);
        }
        if (sub->count("--seed") > 0) cfg_.set("seed", flags.seed);
        if (sub->count("--out") > 0) cfg_.set("out", flags.out);
        if (sub->count("--threads") > 0) cfg_.set("threads", flags.threads);
    }

    RunConfig& cfg() { return cfg_; }

    // Resolves the keys every command shares. Call after command-specific flag
    // overrides are applied and before the command schema is read.
    void resolve_common() {
        out_dir_ = cfg_.get_str("out", ".");
        seed_ = static_cast<uint64_t>(cfg_.get_int("seed", 1));
        threads_ = cfg_.get_int("threads", 0);
        fs::create_directories(out_dir_);
        if (!config_path_.empty()) add_input(config_path_);
    }

    // Rejects config keys the command did not consume. Call once the full
    // schema has been read and before any real work starts.
    void check_schema() { cfg_.reject_unknown(); }

    uint64_t seed() const { return seed_; }

    int worker_count(size_t n_tasks) const {
        int64_t t = threads_;
        if (t <= 0) t = static_cast<int64_t>(std::thread::hardware_concurrency());
        if (t < 1) t = 1;
        if (static_cast<size_t>(t) > n_tasks) t = static_cast<int64_t>(n_tasks);
        return static_cast<int>(t);
    }

    std::string path_in_out(const std::string& name) const {
        return (fs::path(out_dir_) / name).string();
    }

    void add_input(const std::string& path) {
        manifest_.inputs.push_back({path, file_digest_hex(path)});
    }

    // Writes `bytes` under the output directory and records the artifact.
    std::string write_artifact(const std::string& name, const std::string& bytes) {
        const std::string path = path_in_out(name);
        binio::write_file(path, bytes);
        manifest_.artifacts.push_back({path, fnv1a64_hex(bytes)});
        return path;
    }

    // Records a file some module wrote directly (checkpoints, datasets).
    void add_artifact_file(const std::string& path) {
        manifest_.artifacts.push_back({path, file_digest_hex(path)});
    }

    void note(const std::string& key, const std::string& value) {
        manifest_.notes.emplace_back(key, value);
    }

    void warn(const std::string& message) {
        std::printf("warning: %s\n", message.c_str());
        note("warning." + std::to_string(n_warnings_++), message);
    }

    // Dumps the resolved config and the manifest beside the outputs.
    void finish() {
        const std::string resolved = cfg_.resolved_text();
        write_artifact(name_ + ".resolved.kv", resolved);
        manifest_.config_hash = fnv1a64_hex(resolved);
        manifest_.finished_at = iso8601_utc_now();
        const std::string mpath = path_in_out(name_ + ".manifest.json");
        save_manifest(manifest_, mpath);
        std::printf("manifest: %s\n", mpath.c_str());
    }

private:
    std::string name_;
    std::string config_path_;
    RunConfig cfg_;
    RunManifest manifest_;
    std::string out_dir_;
    uint64_t seed_ = 1;
    int64_t threads_ = 0;
    int n_warnings_ = 0;
};

// ---------------------------------------------------------------------------
// CSV renderers
// ---------------------------------------------------------------------------

std::string gan_trace_csv(const TrainTrace& t) {
    std::string s = "step,g_adversarial,g_l1,d_real,d_fake\n";
    for (size_t i = 0; i < t.g_adversarial.size(); ++i)
        s += std::to_string(i + 1) + "," + fmt_real(t.g_adversarial[i]) + "," +
             fmt_real(t.g_l1[i]) + "," + fmt_real(t.d_real[i]) + "," + fmt_real(t.d_fake[i]) +
             "\n";
    return s;
}

std::string cgan_trace_csv(const CGanTrace& t) {
    std::string s = "step,g_adversarial,d_real,d_fake\n";
    for (size_t i = 0; i < t.g_adversarial.size(); ++i)
        s += std::to_string(i + 1) + "," + fmt_real(t.g_adversarial[i]) + "," +
             fmt_real(t.d_real[i]) + "," + fmt_real(t.d_fake[i]) + "\n";
    return s;
}

// One row per generator step; the critic columns average that step's
// critic updates.
std::string wgan_trace_csv(const WGanGpTrace& t, int64_t critic_steps_per_gen) {
    std::string s = "step,critic_real,critic_fake,penalty,g_score\n";
    const size_t k = static_cast<size_t>(critic_steps_per_gen);
    for (size_t g = 0; g < t.g_score.size(); ++g) {
        double real = 0, fake = 0, pen = 0;
        for (size_t c = g * k; c < (g + 1) * k && c < t.critic_real.size(); ++c) {
            real += t.critic_real[c];
            fake += t.critic_fake[c];
            pen += t.penalty[c];
        }
        const double dk = static_cast<double>(k);
        s += std::to_string(g + 1) + "," + fmt_real(real / dk) + "," + fmt_real(fake / dk) + "," +
             fmt_real(pen / dk) + "," + fmt_real(t.g_score[g]) + "\n";
    }
    return s;
}

std::string confusion_csv(const Metrics& m) {
    const size_t k = m.confusion.size();
    std::string s = "true_class";
    for (size_t j = 0; j < k; ++j) s += ",pred_" + std::to_string(j);
    s += "\n";
    for (size_t i = 0; i < k; ++i) {
        s += std::to_string(i);
        for (size_t j = 0; j < k; ++j) s += "," + std::to_string(m.confusion[i][j]);
        s += "\n";
    }
    return s;
}

std::string condition_metrics_csv(
    const std::vector<std::pair<std::string, Metrics>>& rows) {
    std::string s = "condition,n,accuracy,f1,precision,recall\n";
    for (const auto& [name, m] : rows)
        s += name + "," + std::to_string(m.total) + "," + fmt_real(m.accuracy) + "," +
             fmt_real(m.macro_f1) + "," + fmt_real(m.macro_precision) + "," +
             fmt_real(m.macro_recall) + "\n";
    return s;
}

// Type-7 (linear interpolation) quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.size() == 1) return sorted[0];
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

void cmd_ingest(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const int64_t burst_len = cfg.get_int("burst_len", 512);
    N2F_CHECK(burst_len > 0, "burst_len must be positive");
    const int64_t stride = cfg.get_int("stride", burst_len);
    N2F_CHECK(stride > 0, "stride must be positive");

    struct InputSpec {
        std::string path;
        SignalFormat format;
        Condition condition;
        int label;
        double sample_rate_hz;
    };
    std::vector<InputSpec> inputs;
    for (int i = 0;; ++i) {
        const std::string prefix = "input." + std::to_string(i) + ".";
        if (!cfg.has(prefix + "path")) break;
        InputSpec in;
        in.path = cfg.need_str(prefix + "path");
        in.format = signal_format_from_name(cfg.get_str(prefix + "format", "csv-single-column"));
        in.label = parse_label(cfg.get_str(prefix + "label", "0"));
        in.condition.rpm = static_cast<int>(cfg.get_int(prefix + "rpm", 1797));
        in.condition.load_hp = static_cast<int>(cfg.get_int(prefix + "load_hp", 0));
        in.sample_rate_hz = cfg.get_real(prefix + "sample_rate_hz", 12000.0);
        inputs.push_back(std::move(in));
    }
    N2F_CHECK(!inputs.empty(), "ingest needs at least one input (--input PATH or input.0.path)");
    ctx.check_schema();

    std::vector<Burst> bursts;
    for (const InputSpec& in : inputs) {
        ctx.add_input(in.path);
        const SignalRecord rec = ingest(in.path, in.format, in.condition, in.label,
                                        in.sample_rate_hz);
        N2F_CHECK(static_cast<int64_t>(rec.series.size()) >= burst_len,
                  "%s: %zu samples is shorter than burst_len %lld", in.path.c_str(),
                  rec.series.size(), static_cast<long long>(burst_len));
        const std::vector<Burst> segs = segment(rec, burst_len, stride);
        bursts.insert(bursts.end(), segs.begin(), segs.end());
    }

    const std::string out_path = ctx.path_in_out("dataset.n2fd");
    save_dataset(out_path, bursts);
    ctx.add_artifact_file(out_path);
    print_dataset_summary(bursts, out_path);
    ctx.finish();
}

// ---------------------------------------------------------------------------
// surrogate
// ---------------------------------------------------------------------------

void cmd_surrogate(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const std::vector<std::string> class_tokens = cfg.get_list("classes", "0,1,2,3,4,5");
    const std::vector<std::string> cond_tokens = cfg.get_list("conditions", "1797:0");
    const int64_t n_per_class = cfg.get_int("n_per_class", 200);
    const int64_t burst_len = cfg.get_int("burst_len", 512);
    const double sample_rate = cfg.get_real("sample_rate_hz", 12000.0);
    ctx.check_schema();

    N2F_CHECK(!class_tokens.empty(), "classes list is empty");
    N2F_CHECK(!cond_tokens.empty(), "conditions list is empty");
    N2F_CHECK(n_per_class > 0, "n_per_class must be positive");
    N2F_CHECK(burst_len > 0, "burst_len must be positive");

    std::vector<int> labels;
    std::set<int> label_set;
    for (const std::string& tok : class_tokens) {
        const int label = parse_label(tok);
        N2F_CHECK(label_set.insert(label).second, "class %d given twice", label);
        labels.push_back(label);
    }
    std::vector<Condition> conditions;
    std::set<std::pair<int, int>> cond_set;
    for (const std::string& tok : cond_tokens) {
        const Condition c = parse_condition_token(tok);
        N2F_CHECK(cond_set.insert({c.rpm, c.load_hp}).second, "condition %s given twice",
                  condition_name(c).c_str());
        conditions.push_back(c);
    }

    Rng rng(ctx.seed());
    std::vector<Burst> bursts;
    for (const int label : labels)
        for (const Condition& cond : conditions) {
            const std::vector<Burst> group =
                surrogate_generate(label, cond, n_per_class, burst_len, rng, sample_rate);
            bursts.insert(bursts.end(), group.begin(), group.end());
        }

    const std::string out_path = ctx.path_in_out("dataset.n2fd");
    save_dataset(out_path, bursts);
    ctx.add_artifact_file(out_path);
    print_dataset_summary(bursts, out_path);
    ctx.finish();
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::string normalize_framework_name(std::string name) {
    for (char& c : name)
        if (c == '-') c = '_';
    return name;
}

void cmd_train(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const std::string framework = normalize_framework_name(cfg.get_str("framework", "n2fgan"));
    N2F_CHECK(framework == "n2fgan" || framework == "cgan" || framework == "wgan_gp",
              "unknown framework '%s' (expected n2fgan, cgan, or wgan-gp)", framework.c_str());
    const std::string dataset_path = cfg.need_str("dataset");

    // The dataset is loaded before the schema check so condition selection can
    // default to a single-condition dataset's sole condition.
    ctx.add_input(dataset_path);
    const std::vector<Burst> all = load_dataset(dataset_path);
    N2F_CHECK(!all.empty(), "%s: dataset is empty", dataset_path.c_str());
    const int64_t burst_len = static_cast<int64_t>(all.front().samples.size());
    const Condition cond = select_condition(cfg, all, "rpm", "load_hp");

    TrainConfig tc;
    tc.steps = cfg.get_int("steps", 4000);
    tc.learning_rate = static_cast<float>(cfg.get_real("learning_rate", 2e-4));
    tc.beta1 = static_cast<float>(cfg.get_real("beta1", 0.5));
    tc.batch_size = cfg.get_int("batch_size", 16);
    tc.seed = ctx.seed();

    const std::vector<Burst> in_cond = filter_condition(all, cond);
    N2F_CHECK(!in_cond.empty(), "%s: no bursts for condition %s", dataset_path.c_str(),
              condition_name(cond).c_str());

    const std::string checkpoint_path = ctx.path_in_out("checkpoint.n2fc");
    std::string trace_csv;

    if (framework == "n2fgan") {
        const int fault_class = parse_label(cfg.get_str("fault_class", "1"));
        N2F_CHECK(fault_class != 0, "fault_class must be a fault class (1..%d)", kNumClasses - 1);
        tc.lambda_l1 = static_cast<float>(cfg.get_real("lambda_l1", 100.0));
        tc.checkpoint_every = cfg.get_int("checkpoint_every", 0);
        tc.freeze_adversarial = cfg.get_bool("freeze_adversarial", false);
        GeneratorSpec gspec;
        gspec.input_len = burst_len;
        gspec.block_widths = cfg.get_int_list("generator.widths", "256,128,64");
        gspec.latent_dim = cfg.get_int("generator.latent_dim", 64);
        gspec.dropout_p = static_cast<float>(cfg.get_real("generator.dropout_p", 0.5));
        gspec.skip_connections = cfg.get_bool("generator.skip_connections", true);
        DiscriminatorSpec dspec;
        dspec.input_len = burst_len;
        dspec.block_widths = cfg.get_int_list("discriminator.widths", "64,128,256");
        ctx.check_schema();

        const std::vector<Burst> normals = filter_label(in_cond, 0);
        const std::vector<Burst> faults = filter_label(in_cond, fault_class);
        N2F_CHECK(!normals.empty(), "no class-0 (normal) bursts for condition %s",
                  condition_name(cond).c_str());
        N2F_CHECK(!faults.empty(), "no class-%d bursts for condition %s", fault_class,
                  condition_name(cond).c_str());
        Rng pair_rng(tc.seed);
        const std::vector<PairedBurst> pairs = make_pairs(normals, faults, pair_rng);
        std::printf("training n2fgan: %zu pairs, %lld steps, condition %s, fault class %d\n",
                    pairs.size(), static_cast<long long>(tc.steps),
                    condition_name(cond).c_str(), fault_class);

        CheckpointSink sink = nullptr;
        if (tc.checkpoint_every > 0)
            sink = [&ctx](const Checkpoint& cp, int64_t step) {
                char name[64];
                std::snprintf(name, sizeof name, "checkpoint-%06lld.n2fc",
                              static_cast<long long>(step));
                const std::string path = ctx.path_in_out(name);
                save_checkpoint(cp, path);
                ctx.add_artifact_file(path);
            };
        auto [cp, trace] = train(pairs, gspec, dspec, tc, sink);
        save_checkpoint(cp, checkpoint_path);
        trace_csv = gan_trace_csv(trace);
        std::printf("final losses: g_adversarial %s, g_l1 %s, d_real %s, d_fake %s\n",
                    fmt_real(trace.g_adversarial.back()).c_str(),
                    fmt_real(trace.g_l1.back()).c_str(), fmt_real(trace.d_real.back()).c_str(),
                    fmt_real(trace.d_fake.back()).c_str());
    } else if (framework == "cgan") {
        CGanSpec spec;
        spec.noise_dim = cfg.get_int("cgan.noise_dim", 64);
        spec.label_embedding_dim = cfg.get_int("cgan.label_dim", 0);
        spec.generator_widths = cfg.get_int_list("cgan.generator_widths", "128,64,32");
        spec.discriminator_widths = cfg.get_int_list("cgan.discriminator_widths", "32,64,128");
        spec.disc_lr_scale = static_cast<float>(cfg.get_real("cgan.disc_lr_scale", 4.0));
        ctx.check_schema();
        std::printf("training cgan: %zu bursts, %lld steps, condition %s\n", in_cond.size(),
                    static_cast<long long>(tc.steps), condition_name(cond).c_str());
        auto [cp, trace] = cgan_train(in_cond, spec, tc);
        save_cgan_checkpoint(cp, checkpoint_path);
        trace_csv = cgan_trace_csv(trace);
        std::printf("final losses: g_adversarial %s, d_real %s, d_fake %s\n",
                    fmt_real(trace.g_adversarial.back()).c_str(),
                    fmt_real(trace.d_real.back()).c_str(), fmt_real(trace.d_fake.back()).c_str());
    } else {
        const int fault_class = parse_label(cfg.get_str("fault_class", "1"));
        WGanGpSpec spec;
        spec.noise_dim = cfg.get_int("wgan.noise_dim", 64);
        spec.generator_widths = cfg.get_int_list("wgan.generator_widths", "128,64,32");
        spec.critic_widths = cfg.get_int_list("wgan.critic_widths", "32,64,128");
        spec.gp_weight = static_cast<float>(cfg.get_real("wgan.gp_weight", 10.0));
        spec.critic_steps_per_gen = cfg.get_int("wgan.critic_steps_per_gen", 5);
        spec.critic_lr_scale = static_cast<float>(cfg.get_real("wgan.critic_lr_scale", 4.0));
        ctx.check_schema();
        const std::vector<Burst> class_bursts = filter_label(in_cond, fault_class);
        N2F_CHECK(!class_bursts.empty(), "no class-%d bursts for condition %s", fault_class,
                  condition_name(cond).c_str());
        std::printf("training wgan-gp: %zu bursts of class %d, %lld generator steps\n",
                    class_bursts.size(), fault_class, static_cast<long long>(tc.steps));
        auto [cp, trace] = wgan_gp_train(class_bursts, spec, tc);
        save_wgan_gp_checkpoint(cp, checkpoint_path);
        trace_csv = wgan_trace_csv(trace, spec.critic_steps_per_gen);
        std::printf("final scores: critic_real %s, critic_fake %s, g_score %s\n",
                    fmt_real(trace.critic_real.back()).c_str(),
                    fmt_real(trace.critic_fake.back()).c_str(),
                    fmt_real(trace.g_score.back()).c_str());
    }

    ctx.add_artifact_file(checkpoint_path);
    ctx.write_artifact("trace.csv", trace_csv);
    std::printf("checkpoint: %s\n", checkpoint_path.c_str());
    ctx.finish();
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

void cmd_generate(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const std::string checkpoint_path = cfg.need_str("checkpoint");
    const int64_t n = cfg.need_int("n");
    N2F_CHECK(n > 0, "n must be positive");
    const std::string type = checkpoint_type(checkpoint_path);
    ctx.add_input(checkpoint_path);

    std::vector<Burst> synthetic;
    if (type == "n2fgan") {
        const std::string dataset_path = cfg.need_str("dataset");
        const bool deterministic = cfg.get_bool("deterministic", false);
        ctx.add_input(dataset_path);
        const std::vector<Burst> all = load_dataset(dataset_path);
        const Condition target = select_condition(cfg, all, "rpm", "load_hp");
        ctx.check_schema();

        const Checkpoint cp = load_checkpoint(checkpoint_path);
        std::vector<Burst> normals = filter_label(filter_condition(all, target), 0);
        N2F_CHECK(!normals.empty(),
                  "%s: no class-0 (normal) bursts for target condition %s", dataset_path.c_str(),
                  condition_name(target).c_str());
        Rng rng(ctx.seed());
        bool with_replacement = false;
        const std::vector<Burst> chosen = sample_bursts(normals, n, rng, &with_replacement);
        if (with_replacement)
            ctx.warn(strformat(
                "requested %lld synthetic bursts but only %zu normal bursts are available for "
                "%s; sampling with replacement",
                static_cast<long long>(n), normals.size(), condition_name(target).c_str()));
        synthetic = generate(cp, chosen, ctx.seed(), deterministic);
        std::printf("generated %zu class-%d bursts for condition %s from %zu normal bursts\n",
                    synthetic.size(), cp.fault_label, condition_name(target).c_str(),
                    normals.size());
    } else if (type == "cgan") {
        N2F_CHECK(cfg.has("label"), "cgan generation needs a 'label' (--label or config key)");
        const int label = parse_label(cfg.need_str("label"));
        ctx.check_schema();
        const CGanCheckpoint cp = load_cgan_checkpoint(checkpoint_path);
        synthetic = cgan_generate(cp, label, n, ctx.seed());
        std::printf("generated %zu class-%d bursts (normalized domain, condition %s)\n",
                    synthetic.size(), label, condition_name(cp.condition).c_str());
    } else if (type == "wgan_gp") {
        ctx.check_schema();
        const WGanGpCheckpoint cp = load_wgan_gp_checkpoint(checkpoint_path);
        synthetic = wgan_gp_generate(cp, n, ctx.seed());
        std::printf("generated %zu class-%d bursts (normalized domain, condition %s)\n",
                    synthetic.size(), cp.label, condition_name(cp.condition).c_str());
    } else {
        throw ConfigError(strformat("%s: checkpoint type '%s' cannot generate (expected n2fgan, "
                                    "cgan, or wgan_gp)",
                                    checkpoint_path.c_str(), type.c_str()));
    }

    const std::string out_path = ctx.path_in_out("synthetic.n2fd");
    save_dataset(out_path, synthetic);
    ctx.add_artifact_file(out_path);
    ctx.note("source", "synthetic");
    print_dataset_summary(synthetic, out_path);
    ctx.finish();
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct ReplacedSet {
    std::vector<Burst> bursts;
    int64_t n_replaced = 0;
};

// Swaps the target class's real test bursts for synthetic ones, preferring
// synthetic bursts whose condition appears in this test subset and falling
// back to the full synthetic pool (with a warning) when none match.
ReplacedSet assemble_replaced(CommandCtx& ctx, const std::vector<Burst>& test,
                              const std::vector<Burst>& synth, int target,
                              const std::string& scope) {
    std::set<std::pair<int, int>> conds;
    for (const Burst& b : test) conds.insert({b.condition.rpm, b.condition.load_hp});
    std::vector<Burst> pool;
    for (const Burst& b : synth)
        if (conds.count({b.condition.rpm, b.condition.load_hp}) > 0) pool.push_back(b);
    if (pool.empty() && !synth.empty()) {
        ctx.warn(strformat("no synthetic bursts match the condition(s) of %s; using all %zu",
                           scope.c_str(), synth.size()));
        pool = synth;
    }

    ReplacedSet out;
    int64_t n_real_target = 0;
    for (const Burst& b : test)
        if (b.label == target)
            ++n_real_target;
        else
            out.bursts.push_back(b);
    const int64_t m = std::min<int64_t>(n_real_target, static_cast<int64_t>(pool.size()));
    if (m != n_real_target || m != static_cast<int64_t>(pool.size()))
        ctx.warn(strformat("%s: %lld real class-%d bursts vs %zu synthetic; replacing %lld",
                           scope.c_str(), static_cast<long long>(n_real_target), target,
                           pool.size(), static_cast<long long>(m)));
    out.bursts.insert(out.bursts.end(), pool.begin(), pool.begin() + m);
    out.n_replaced = m;
    return out;
}

void cmd_evaluate(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    std::string mode = cfg.get_str("mode", "plain");
    if (mode == "replaced_class") mode = "replaced-class";
    N2F_CHECK(mode == "plain" || mode == "replaced-class",
              "mode must be 'plain' or 'replaced-class', got '%s'", mode.c_str());
    const ClassifierKind kind = classifier_kind_from_name(cfg.get_str("classifier", "convlstm"));
    const std::string train_path = cfg.need_str("train");
    const std::string test_path = cfg.need_str("test");

    TrainClassifierConfig tcfg;
    tcfg.epochs = static_cast<int>(cfg.get_int("epochs", 30));
    tcfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
    tcfg.learning_rate = cfg.get_real("learning_rate", 1e-3);
    tcfg.seed = ctx.seed();

    ctx.add_input(train_path);
    ctx.add_input(test_path);
    std::vector<Burst> train_set = load_dataset(train_path);
    std::vector<Burst> test_set = load_dataset(test_path);
    N2F_CHECK(!train_set.empty(), "%s: dataset is empty", train_path.c_str());
    N2F_CHECK(!test_set.empty(), "%s: dataset is empty", test_path.c_str());

    std::vector<Burst> synthetic;
    int target = -1;
    int n_classes = kNumClasses;
    if (mode == "replaced-class") {
        const std::string synth_path = cfg.need_str("synthetic");
        ctx.add_input(synth_path);
        synthetic = load_dataset(synth_path);
        N2F_CHECK(!synthetic.empty(), "%s: synthetic dataset is empty", synth_path.c_str());
        target = synthetic.front().label;
        for (const Burst& b : synthetic)
            N2F_CHECK(b.label == target,
                      "%s: synthetic bursts must share one label (found %d and %d)",
                      synth_path.c_str(), target, b.label);
        bool target_in_test = false;
        for (const Burst& b : test_set) target_in_test |= b.label == target;
        N2F_CHECK(target_in_test, "test set has no class-%d bursts to replace", target);
    } else if (cfg.get_bool("binary", false)) {
        train_set = relabel_binary(train_set);
        test_set = relabel_binary(test_set);
        n_classes = 2;
    }
    ctx.check_schema();

    const int64_t burst_len = static_cast<int64_t>(train_set.front().samples.size());
    Rng build_rng(tcfg.seed);
    Classifier net = build_classifier(kind, n_classes, burst_len, build_rng);
    std::printf("training %s on %zu bursts (%d epochs)\n", classifier_kind_name(kind),
                train_set.size(), tcfg.epochs);
    const std::vector<double> losses = train_classifier(net, train_set, tcfg);
    std::printf("final training loss: %s\n", fmt_real(losses.back()).c_str());

    // One metrics row per test condition plus the pooled "all" row.
    std::vector<std::pair<std::string, Metrics>> rows;
    std::vector<std::pair<std::string, std::vector<Burst>>> scopes;
    scopes.emplace_back("all", test_set);
    for (const Condition& c : distinct_conditions(test_set))
        scopes.emplace_back(condition_name(c), filter_condition(test_set, c));

    Metrics overall;
    for (size_t i = 0; i < scopes.size(); ++i) {
        const auto& [name, subset] = scopes[i];
        Metrics m;
        if (mode == "replaced-class") {
            const ReplacedSet rep = assemble_replaced(ctx, subset, synthetic, target, name);
            m = evaluate(net, rep.bursts);
            if (i == 0)
                std::printf("replaced %lld class-%d bursts with synthetic ones\n",
                            static_cast<long long>(rep.n_replaced), target);
        } else {
            m = evaluate(net, subset);
        }
        if (i == 0) overall = m;
        rows.emplace_back(name, m);
    }

    const std::string metrics_path = ctx.write_artifact("metrics.csv", condition_metrics_csv(rows));
    ctx.write_artifact("confusion.csv", confusion_csv(overall));
    std::printf("accuracy %s, f1 %s -> %s\n", fmt_real(overall.accuracy).c_str(),
                fmt_real(overall.macro_f1).c_str(), metrics_path.c_str());
    ctx.finish();
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct FrameworkArm {
    std::string name;                       // canonical display name
    std::optional<AugmenterKind> kind;      // empty = no augmentation
};

FrameworkArm parse_framework(const std::string& token) {
    const std::string norm = normalize_framework_name(token);
    if (norm == "none") return {"none", std::nullopt};
    if (norm == "classical") return {"classical", AugmenterKind::Classical};
    if (norm == "cgan") return {"cgan", AugmenterKind::CGan};
    if (norm == "wgan_gp") return {"wgan-gp", AugmenterKind::WGanGp};
    if (norm == "n2fgan") return {"n2fgan", AugmenterKind::N2fGan};
    throw ConfigError(strformat(
        "unknown framework '%s' (expected none, classical, cgan, wgan-gp, or n2fgan)",
        token.c_str()));
}

void cmd_compare(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const std::string dataset_path = cfg.need_str("dataset");
    const std::vector<std::string> fw_tokens =
        cfg.get_list("frameworks", "none,classical,cgan,wgan-gp,n2fgan");
    N2F_CHECK(!fw_tokens.empty(), "frameworks list is empty");
    std::vector<FrameworkArm> arms;
    std::set<std::string> arm_names;
    for (const std::string& tok : fw_tokens) {
        FrameworkArm arm = parse_framework(tok);
        N2F_CHECK(arm_names.insert(arm.name).second, "framework '%s' given twice",
                  arm.name.c_str());
        arms.push_back(std::move(arm));
    }
    auto has_arm = [&](AugmenterKind k) {
        for (const FrameworkArm& a : arms)
            if (a.kind && *a.kind == k) return true;
        return false;
    };

    const int64_t repeats = cfg.get_int("repeats", 5);
    N2F_CHECK(repeats >= 1, "repeats must be >= 1");
    const std::string assert_ordering = cfg.get_str("assert_ordering", "");

    ImbalanceSpec ispec;
    ispec.target_class = parse_label(cfg.get_str("target_class", "1"));
    ispec.n_synthetic = static_cast<int>(cfg.get_int("n_synthetic", 100));
    ispec.n_health_train = static_cast<int>(cfg.get_int("n_health_train", 3000));
    ispec.n_fault_train = static_cast<int>(cfg.get_int("n_fault_train", 150));
    ispec.n_test_per_class = static_cast<int>(cfg.get_int("n_test_per_class", 150));
    ispec.kind = classifier_kind_from_name(cfg.get_str("classifier", "convlstm"));
    ispec.train_cfg.epochs = static_cast<int>(cfg.get_int("epochs", 30));
    ispec.train_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
    ispec.train_cfg.learning_rate = cfg.get_real("learning_rate", 1e-3);

    Condition src;
    src.rpm = static_cast<int>(cfg.need_int("source.rpm"));
    src.load_hp = static_cast<int>(cfg.need_int("source.load_hp"));
    Condition tgt;
    tgt.rpm = static_cast<int>(cfg.need_int("target.rpm"));
    tgt.load_hp = static_cast<int>(cfg.need_int("target.load_hp"));
    N2F_CHECK(!(src == tgt), "source and target conditions must differ");

    // Training budgets for the GAN arms, read only when the arm is requested
    // so stray keys stay rejected.
    TrainConfig gan_tc;
    CGanSpec cgan_spec;
    WGanGpSpec wgan_spec;
    if (has_arm(AugmenterKind::CGan) || has_arm(AugmenterKind::WGanGp)) {
        gan_tc.steps = cfg.get_int("gan.steps", 800);
        gan_tc.learning_rate = static_cast<float>(cfg.get_real("gan.learning_rate", 2e-4));
        gan_tc.beta1 = static_cast<float>(cfg.get_real("gan.beta1", 0.5));
        gan_tc.batch_size = cfg.get_int("gan.batch_size", 32);
        gan_tc.seed = static_cast<uint64_t>(cfg.get_int("gan.seed", static_cast<int64_t>(ctx.seed())));
        if (has_arm(AugmenterKind::CGan)) {
            cgan_spec.noise_dim = cfg.get_int("gan.noise_dim", 64);
            cgan_spec.generator_widths = cfg.get_int_list("gan.generator_widths", "128,64,32");
            cgan_spec.discriminator_widths =
                cfg.get_int_list("gan.discriminator_widths", "32,64,128");
            cgan_spec.disc_lr_scale = static_cast<float>(cfg.get_real("gan.disc_lr_scale", 4.0));
        }
        if (has_arm(AugmenterKind::WGanGp)) {
            wgan_spec.noise_dim = cfg.get_int("gan.noise_dim", 64);
            wgan_spec.generator_widths = cfg.get_int_list("gan.generator_widths", "128,64,32");
            wgan_spec.critic_widths = cfg.get_int_list("gan.critic_widths", "32,64,128");
            wgan_spec.gp_weight = static_cast<float>(cfg.get_real("gan.gp_weight", 10.0));
            wgan_spec.critic_steps_per_gen = cfg.get_int("gan.critic_steps_per_gen", 5);
            wgan_spec.critic_lr_scale =
                static_cast<float>(cfg.get_real("gan.critic_lr_scale", 4.0));
        }
    }
    TrainConfig n2f_tc;
    GeneratorSpec n2f_gspec;
    DiscriminatorSpec n2f_dspec;
    if (has_arm(AugmenterKind::N2fGan)) {
        n2f_tc.steps = cfg.get_int("n2fgan.steps", 2000);
        n2f_tc.learning_rate = static_cast<float>(cfg.get_real("n2fgan.learning_rate", 2e-4));
        n2f_tc.beta1 = static_cast<float>(cfg.get_real("n2fgan.beta1", 0.5));
        n2f_tc.batch_size = cfg.get_int("n2fgan.batch_size", 16);
        n2f_tc.lambda_l1 = static_cast<float>(cfg.get_real("n2fgan.lambda_l1", 100.0));
        n2f_tc.freeze_adversarial = cfg.get_bool("n2fgan.freeze_adversarial", false);
        n2f_tc.seed = static_cast<uint64_t>(
            cfg.get_int("n2fgan.seed", static_cast<int64_t>(ctx.seed())));
        n2f_gspec.block_widths = cfg.get_int_list("n2fgan.generator_widths", "256,128,64");
        n2f_gspec.latent_dim = cfg.get_int("n2fgan.latent_dim", 64);
        n2f_gspec.dropout_p = static_cast<float>(cfg.get_real("n2fgan.dropout_p", 0.5));
        n2f_gspec.skip_connections = cfg.get_bool("n2fgan.skip_connections", true);
        n2f_dspec.block_widths = cfg.get_int_list("n2fgan.discriminator_widths", "64,128,256");
    }
    ctx.check_schema();

    ctx.add_input(dataset_path);
    const std::vector<Burst> all = load_dataset(dataset_path);
    const std::vector<Burst> src_pool = filter_condition(all, src);
    const std::vector<Burst> tgt_pool = filter_condition(all, tgt);
    N2F_CHECK(!src_pool.empty(), "no bursts for source condition %s",
              condition_name(src).c_str());
    N2F_CHECK(!tgt_pool.empty(), "no bursts for target condition %s",
              condition_name(tgt).c_str());
    const int64_t burst_len = static_cast<int64_t>(all.front().samples.size());
    n2f_gspec.input_len = burst_len;
    n2f_dspec.input_len = burst_len;

    // Target-condition normals are split evenly (seeded shuffle): first half
    // becomes the health-training pool, second half joins the test pool, so
    // the two never share a burst. Fault bursts all go to the test pool.
    std::vector<Burst> tgt_normals = filter_label(tgt_pool, 0);
    Rng split_rng(ctx.seed());
    seeded_shuffle(tgt_normals, split_rng);
    const size_t n_health = tgt_normals.size() / 2;
    std::vector<Burst> health_pool(tgt_normals.begin(), tgt_normals.begin() + n_health);
    std::vector<Burst> test_pool(tgt_normals.begin() + n_health, tgt_normals.end());
    for (const Burst& b : tgt_pool)
        if (b.label != 0) test_pool.push_back(b);

    // Each GAN arm trains once up front; repeats then draw with per-repeat
    // seeds from the trained model.
    const std::vector<Burst> src_target = filter_label(src_pool, ispec.target_class);
    std::optional<CGanCheckpoint> cgan_cp;
    std::optional<WGanGpCheckpoint> wgan_cp;
    std::optional<Checkpoint> n2f_cp;
    if (has_arm(AugmenterKind::CGan)) {
        std::printf("training cgan baseline (%lld steps)...\n",
                    static_cast<long long>(gan_tc.steps));
        cgan_cp = cgan_train(src_pool, cgan_spec, gan_tc).first;
    }
    if (has_arm(AugmenterKind::WGanGp)) {
        N2F_CHECK(!src_target.empty(), "no class-%d bursts in the source condition",
                  ispec.target_class);
        std::printf("training wgan-gp baseline (%lld generator steps)...\n",
                    static_cast<long long>(gan_tc.steps));
        wgan_cp = wgan_gp_train(src_target, wgan_spec, gan_tc).first;
    }
    if (has_arm(AugmenterKind::N2fGan)) {
        const std::vector<Burst> src_normals = filter_label(src_pool, 0);
        N2F_CHECK(!src_normals.empty(), "no class-0 bursts in the source condition");
        N2F_CHECK(!src_target.empty(), "no class-%d bursts in the source condition",
                  ispec.target_class);
        Rng pair_rng(n2f_tc.seed);
        const std::vector<PairedBurst> pairs = make_pairs(src_normals, src_target, pair_rng);
        std::printf("training n2fgan (%lld steps on %zu pairs)...\n",
                    static_cast<long long>(n2f_tc.steps), pairs.size());
        n2f_cp = train(pairs, n2f_gspec, n2f_dspec, n2f_tc).first;
    }

    const int target_class = ispec.target_class;
    std::vector<SyntheticSource> sources;
    for (const FrameworkArm& arm : arms) {
        if (!arm.kind) {
            sources.emplace_back(nullptr);
        } else if (*arm.kind == AugmenterKind::Classical) {
            sources.emplace_back([&src_target, target_class](uint64_t s, int n) {
                AugmentConfig ac;
                ac.seed = s;
                AugmentResult res = augment_dataset(AugmenterKind::Classical, src_target,
                                                    target_class, n, ac);
                return std::vector<Burst>(res.data.end() - n, res.data.end());
            });
        } else if (*arm.kind == AugmenterKind::CGan) {
            sources.emplace_back([&cgan_cp, target_class](uint64_t s, int n) {
                return cgan_generate(*cgan_cp, target_class, n, s);
            });
        } else if (*arm.kind == AugmenterKind::WGanGp) {
            sources.emplace_back(
                [&wgan_cp](uint64_t s, int n) { return wgan_gp_generate(*wgan_cp, n, s); });
        } else {
            sources.emplace_back([&n2f_cp, &health_pool](uint64_t s, int n) {
                Rng rng(s);
                const std::vector<Burst> picks = sample_bursts(health_pool, n, rng);
                return generate(*n2f_cp, picks, s);
            });
        }
    }

    std::vector<uint64_t> seeds;
    for (int64_t r = 0; r < repeats; ++r) seeds.push_back(ctx.seed() + static_cast<uint64_t>(r));

    // Fan (framework, repeat) cells across workers; aggregation order is fixed
    // by the task grid, so the worker count never changes the outputs.
    struct Task {
        size_t arm;
        size_t rep;
    };
    std::vector<Task> tasks;
    for (size_t a = 0; a < arms.size(); ++a)
        for (size_t r = 0; r < seeds.size(); ++r) tasks.push_back({a, r});
    std::vector<std::vector<ImbalanceRun>> runs(arms.size(),
                                                std::vector<ImbalanceRun>(seeds.size()));
    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error) break;
            }
            const Task t = tasks[i];
            try {
                ImbalanceSpec arm_spec = ispec;
                if (!arms[t.arm].kind) arm_spec.n_synthetic = 0;
                const ImbalanceResult one =
                    imbalance_experiment(arm_spec, src_pool, health_pool, test_pool,
                                         sources[t.arm], {seeds[t.rep]});
                runs[t.arm][t.rep] = one.runs.front();
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                break;
            }
        }
    };
    const int n_workers = ctx.worker_count(tasks.size());
    std::printf("running %zu cells (%zu frameworks x %lld repeats) on %d worker%s\n",
                tasks.size(), arms.size(), static_cast<long long>(repeats), n_workers,
                n_workers == 1 ? "" : "s");
    {
        std::vector<std::thread> pool;
        for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
        worker();
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Per-run rows plus per-framework aggregates.
    std::vector<MetricsRow> run_rows;
    std::string agg_csv =
        "framework,runs,mean_accuracy,std_accuracy,mean_f1,std_f1,"
        "min_accuracy,q1_accuracy,median_accuracy,q3_accuracy,max_accuracy\n";
    std::map<std::string, double> mean_accuracy;
    for (size_t a = 0; a < arms.size(); ++a) {
        std::vector<double> accs, f1s;
        for (size_t r = 0; r < seeds.size(); ++r) {
            run_rows.push_back({arms[a].name, runs[a][r].seed, runs[a][r].metrics});
            accs.push_back(runs[a][r].metrics.accuracy);
            f1s.push_back(runs[a][r].metrics.macro_f1);
        }
        const double n_d = static_cast<double>(accs.size());
        double mean_a = 0, mean_f = 0;
        for (double v : accs) mean_a += v;
        for (double v : f1s) mean_f += v;
        mean_a /= n_d;
        mean_f /= n_d;
        double var_a = 0, var_f = 0;
        if (accs.size() > 1) {
            for (double v : accs) var_a += (v - mean_a) * (v - mean_a);
            for (double v : f1s) var_f += (v - mean_f) * (v - mean_f);
            var_a /= n_d - 1;
            var_f /= n_d - 1;
        }
        std::vector<double> sorted = accs;
        std::sort(sorted.begin(), sorted.end());
        const double box[5] = {quantile_sorted(sorted, 0.0), quantile_sorted(sorted, 0.25),
                               quantile_sorted(sorted, 0.5), quantile_sorted(sorted, 0.75),
                               quantile_sorted(sorted, 1.0)};
        mean_accuracy[arms[a].name] = mean_a;
        agg_csv += arms[a].name + "," + std::to_string(accs.size()) + "," + fmt_real(mean_a) +
                   "," + fmt_real(std::sqrt(var_a)) + "," + fmt_real(mean_f) + "," +
                   fmt_real(std::sqrt(var_f)) + "," + fmt_real(box[0]) + "," + fmt_real(box[1]) +
                   "," + fmt_real(box[2]) + "," + fmt_real(box[3]) + "," + fmt_real(box[4]) +
                   "\n";
        std::printf("%s: mean accuracy %s (box: min %s, q1 %s, median %s, q3 %s, max %s)\n",
                    arms[a].name.c_str(), fmt_real(mean_a).c_str(), fmt_real(box[0]).c_str(),
                    fmt_real(box[1]).c_str(), fmt_real(box[2]).c_str(), fmt_real(box[3]).c_str(),
                    fmt_real(box[4]).c_str());
    }
    ctx.write_artifact("runs.csv", metrics_csv(run_rows));
    const std::string agg_path = ctx.write_artifact("aggregate.csv", agg_csv);
    std::printf("aggregates -> %s\n", agg_path.c_str());
    ctx.finish();

    if (!assert_ordering.empty()) {
        std::vector<std::string> order;
        std::string item;
        std::istringstream in(assert_ordering);
        while (std::getline(in, item, '>')) {
            while (!item.empty() && item.front() == ' ') item.erase(item.begin());
            while (!item.empty() && item.back() == ' ') item.pop_back();
            N2F_CHECK(!item.empty(), "assert_ordering '%s' has an empty entry",
                      assert_ordering.c_str());
            order.push_back(parse_framework(item).name);
        }
        N2F_CHECK(order.size() >= 2, "assert_ordering needs at least two frameworks, got '%s'",
                  assert_ordering.c_str());
        for (const std::string& name : order)
            N2F_CHECK(mean_accuracy.count(name) > 0,
                      "assert_ordering names '%s', which is not in the frameworks list",
                      name.c_str());
        for (size_t i = 0; i + 1 < order.size(); ++i) {
            const double a = mean_accuracy[order[i]];
            const double b = mean_accuracy[order[i + 1]];
            if (!(a > b))
                throw OrderingViolation{strformat(
                    "ordering violated: mean accuracy of %s (%s) is not greater than %s (%s)",
                    order[i].c_str(), fmt_real(a).c_str(), order[i + 1].c_str(),
                    fmt_real(b).c_str())};
        }
        std::printf("ordering holds: %s\n", assert_ordering.c_str());
    }
}

// ---------------------------------------------------------------------------
// features / tsne
// ---------------------------------------------------------------------------

void cmd_features(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    const std::string dataset_path = cfg.need_str("dataset");
    ctx.check_schema();

    ctx.add_input(dataset_path);
    const std::vector<Burst> bursts = load_dataset(dataset_path);
    N2F_CHECK(!bursts.empty(), "%s: dataset is empty", dataset_path.c_str());
    const std::vector<FeatureVector> feats = extract_features_batch(bursts);
    const std::string path = ctx.write_artifact("features.csv", features_csv(bursts, feats));
    std::printf("%zu feature rows -> %s\n", feats.size(), path.c_str());
    ctx.finish();
}

void cmd_tsne(CommandCtx& ctx) {
    RunConfig& cfg = ctx.cfg();
    ctx.resolve_common();
    struct InputSet {
        std::string path;
        std::string source;
    };
    std::vector<InputSet> inputs;
    for (int i = 0;; ++i) {
        const std::string prefix = "input." + std::to_string(i) + ".";
        if (!cfg.has(prefix + "path")) break;
        InputSet in;
        in.path = cfg.need_str(prefix + "path");
        in.source = cfg.get_str(prefix + "source", "real");
        N2F_CHECK(in.source == "real" || in.source == "synthetic",
                  "input %d: source must be 'real' or 'synthetic', got '%s'", i,
                  in.source.c_str());
        inputs.push_back(std::move(in));
    }
    N2F_CHECK(!inputs.empty(),
              "tsne needs at least one input dataset (--real/--synthetic or input.0.path)");

    TsneConfig tcfg;
    tcfg.perplexity = cfg.get_real("perplexity", 30.0);
    tcfg.n_iter = static_cast<int>(cfg.get_int("iterations", 1000));
    tcfg.learning_rate = cfg.get_real("learning_rate", 200.0);
    tcfg.early_exaggeration_factor = cfg.get_real("exaggeration_factor", 12.0);
    tcfg.early_exaggeration_iters = static_cast<int>(cfg.get_int("exaggeration_iters", 250));
    tcfg.seed = ctx.seed();
    ctx.check_schema();

    std::vector<Burst> bursts;
    std::vector<int> labels;
    std::vector<std::string> sources;
    for (const InputSet& in : inputs) {
        ctx.add_input(in.path);
        const std::vector<Burst> part = load_dataset(in.path);
        for (const Burst& b : part) {
            labels.push_back(b.label);
            sources.push_back(in.source);
        }
        bursts.insert(bursts.end(), part.begin(), part.end());
    }
    N2F_CHECK(!bursts.empty(), "the input datasets are empty");
    const size_t n = bursts.size();
    if (static_cast<double>(n) <= 3.0 * tcfg.perplexity) {
        const double suggested = (static_cast<double>(n) - 1.0) / 3.0;
        throw ConfigError(strformat(
            "t-SNE needs more than 3*perplexity points: %zu points with perplexity %s; "
            "suggested perplexity: %s or smaller",
            n, fmt_real(tcfg.perplexity).c_str(), fmt_real(std::max(1.0, suggested)).c_str()));
    }

    const std::vector<FeatureVector> feats = extract_features_batch(bursts);
    const TsneResult res = tsne(feats, tcfg);
    const std::string emb_path =
        ctx.write_artifact("embedding.csv", embedding_csv(res.points, labels, sources));
    const std::string svg_path =
        ctx.write_artifact("scatter.svg", scatter_svg(res.points, labels, sources));
    std::printf("embedded %zu points; final KL %s, max perplexity error %s\n", n,
                fmt_real(res.kl_trace.back()).c_str(),
                fmt_real(res.max_perplexity_error).c_str());
    std::printf("embedding -> %s\nscatter -> %s\n", emb_path.c_str(), svg_path.c_str());
    ctx.finish();
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int cli_main(int argc, char** argv) {
    CLI::App app{"vibration-burst fault synthesis and evaluation toolkit"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    // Flag storage must outlive parse(); values flow into RunConfig as string
    // overrides so config-file and flag inputs share one validation path.
    struct {
        CommonFlags common;
        std::string input, format, label, rpm, load_hp, burst_len, stride;
    } ig;
    struct {
        CommonFlags common;
        std::string classes, conditions, n_per_class, burst_len;
    } sg;
    struct {
        CommonFlags common;
        std::string framework, dataset, steps, batch_size, learning_rate, fault_class, rpm,
            load_hp;
    } tr;
    struct {
        CommonFlags common;
        std::string checkpoint, dataset, n, rpm, load_hp, label;
        bool deterministic = false;
    } ge;
    struct {
        CommonFlags common;
        std::string classifier, mode, train, test, synthetic, epochs;
    } ev;
    struct {
        CommonFlags common;
        std::string dataset, frameworks, repeats, assert_ordering;
    } cp;
    struct {
        CommonFlags common;
        std::string dataset;
    } fe;
    struct {
        CommonFlags common;
        std::vector<std::string> real, synthetic;
        std::string perplexity, iterations;
    } ts;

    CLI::App* ingest_cmd =
        app.add_subcommand("ingest", "segment recorded signals into a burst dataset");
    add_common_flags(ingest_cmd, ig.common);
    ingest_cmd->add_option("--input", ig.input, "signal file (config key input.0.path)");
    ingest_cmd->add_option("--format", ig.format, "csv-single-column or raw-f32le");
    ingest_cmd->add_option("--label", ig.label, "class id or name for the input");
    ingest_cmd->add_option("--rpm", ig.rpm, "shaft speed of the input");
    ingest_cmd->add_option("--load-hp", ig.load_hp, "load of the input");
    ingest_cmd->add_option("--burst-len", ig.burst_len, "samples per burst");
    ingest_cmd->add_option("--stride", ig.stride, "segmentation stride");

    CLI::App* surrogate_cmd =
        app.add_subcommand("surrogate", "synthesize a labeled surrogate burst dataset");
    add_common_flags(surrogate_cmd, sg.common);
    surrogate_cmd->add_option("--classes", sg.classes, "comma-separated class ids");
    surrogate_cmd->add_option("--conditions", sg.conditions,
                              "comma-separated rpm:load_hp pairs");
    surrogate_cmd->add_option("--n-per-class", sg.n_per_class,
                              "bursts per class per condition");
    surrogate_cmd->add_option("--burst-len", sg.burst_len, "samples per burst");

    CLI::App* train_cmd = app.add_subcommand("train", "train a generative model on a dataset");
    add_common_flags(train_cmd, tr.common);
    train_cmd->add_option("--framework", tr.framework, "n2fgan, cgan, or wgan-gp");
    train_cmd->add_option("--dataset", tr.dataset, "training dataset path");
    train_cmd->add_option("--steps", tr.steps, "training steps");
    train_cmd->add_option("--batch-size", tr.batch_size, "minibatch size");
    train_cmd->add_option("--learning-rate", tr.learning_rate, "Adam learning rate");
    train_cmd->add_option("--fault-class", tr.fault_class, "fault class (n2fgan, wgan-gp)");
    train_cmd->add_option("--rpm", tr.rpm, "training condition rpm");
    train_cmd->add_option("--load-hp", tr.load_hp, "training condition load");

    CLI::App* generate_cmd =
        app.add_subcommand("generate", "synthesize fault bursts from a trained checkpoint");
    add_common_flags(generate_cmd, ge.common);
    generate_cmd->add_option("--checkpoint", ge.checkpoint, "trained model checkpoint");
    generate_cmd->add_option("--dataset", ge.dataset, "dataset providing normal bursts (n2fgan)");
    generate_cmd->add_option("--n", ge.n, "number of bursts to generate");
    generate_cmd->add_option("--rpm", ge.rpm, "target condition rpm (n2fgan)");
    generate_cmd->add_option("--load-hp", ge.load_hp, "target condition load (n2fgan)");
    generate_cmd->add_option("--label", ge.label, "class to generate (cgan)");
    generate_cmd->add_flag("--deterministic", ge.deterministic,
                           "disable generation-time dropout noise (n2fgan)");

    CLI::App* evaluate_cmd =
        app.add_subcommand("evaluate", "train a classifier and report metrics");
    add_common_flags(evaluate_cmd, ev.common);
    evaluate_cmd->add_option("--classifier", ev.classifier,
                             "binary_lstm, convlstm, cnn, or convae");
    evaluate_cmd->add_option("--mode", ev.mode, "plain or replaced-class");
    evaluate_cmd->add_option("--train", ev.train, "training dataset path");
    evaluate_cmd->add_option("--test", ev.test, "test dataset path");
    evaluate_cmd->add_option("--synthetic", ev.synthetic,
                             "synthetic dataset path (replaced-class)");
    evaluate_cmd->add_option("--epochs", ev.epochs, "classifier training epochs");

    CLI::App* compare_cmd = app.add_subcommand(
        "compare", "run the imbalance experiment across augmentation frameworks");
    add_common_flags(compare_cmd, cp.common);
    compare_cmd->add_option("--dataset", cp.dataset, "multi-condition dataset path");
    compare_cmd->add_option("--frameworks", cp.frameworks,
                            "comma-separated: none, classical, cgan, wgan-gp, n2fgan");
    compare_cmd->add_option("--repeats", cp.repeats, "repeats per framework");
    compare_cmd->add_option("--assert-ordering", cp.assert_ordering,
                            "fail (exit 1) unless mean accuracies are strictly ordered, "
                            "e.g. 'n2fgan>classical'");

    CLI::App* features_cmd =
        app.add_subcommand("features", "extract the statistical feature table");
    add_common_flags(features_cmd, fe.common);
    features_cmd->add_option("--dataset", fe.dataset, "dataset path");

    CLI::App* tsne_cmd =
        app.add_subcommand("tsne", "embed burst features and plot real vs synthetic");
    add_common_flags(tsne_cmd, ts.common);
    tsne_cmd->add_option("--real", ts.real, "dataset of real bursts (repeatable)");
    tsne_cmd->add_option("--synthetic", ts.synthetic,
                         "dataset of synthetic bursts (repeatable)");
    tsne_cmd->add_option("--perplexity", ts.perplexity, "target perplexity");
    tsne_cmd->add_option("--iterations", ts.iterations, "gradient-descent iterations");

    ingest_cmd->callback([&] {
        CommandCtx ctx("ingest", ingest_cmd, ig.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (ingest_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--input", "input.0.path", ig.input);
        set_if("--format", "input.0.format", ig.format);
        set_if("--label", "input.0.label", ig.label);
        set_if("--rpm", "input.0.rpm", ig.rpm);
        set_if("--load-hp", "input.0.load_hp", ig.load_hp);
        set_if("--burst-len", "burst_len", ig.burst_len);
        set_if("--stride", "stride", ig.stride);
        cmd_ingest(ctx);
    });
    surrogate_cmd->callback([&] {
        CommandCtx ctx("surrogate", surrogate_cmd, sg.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (surrogate_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--classes", "classes", sg.classes);
        set_if("--conditions", "conditions", sg.conditions);
        set_if("--n-per-class", "n_per_class", sg.n_per_class);
        set_if("--burst-len", "burst_len", sg.burst_len);
        cmd_surrogate(ctx);
    });
    train_cmd->callback([&] {
        CommandCtx ctx("train", train_cmd, tr.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (train_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--framework", "framework", tr.framework);
        set_if("--dataset", "dataset", tr.dataset);
        set_if("--steps", "steps", tr.steps);
        set_if("--batch-size", "batch_size", tr.batch_size);
        set_if("--learning-rate", "learning_rate", tr.learning_rate);
        set_if("--fault-class", "fault_class", tr.fault_class);
        set_if("--rpm", "rpm", tr.rpm);
        set_if("--load-hp", "load_hp", tr.load_hp);
        cmd_train(ctx);
    });
    generate_cmd->callback([&] {
        CommandCtx ctx("generate", generate_cmd, ge.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (generate_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--checkpoint", "checkpoint", ge.checkpoint);
        set_if("--dataset", "dataset", ge.dataset);
        set_if("--n", "n", ge.n);
        set_if("--rpm", "rpm", ge.rpm);
        set_if("--load-hp", "load_hp", ge.load_hp);
        set_if("--label", "label", ge.label);
        if (generate_cmd->count("--deterministic") > 0) ctx.cfg().set("deterministic", "true");
        cmd_generate(ctx);
    });
    evaluate_cmd->callback([&] {
        CommandCtx ctx("evaluate", evaluate_cmd, ev.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (evaluate_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--classifier", "classifier", ev.classifier);
        set_if("--mode", "mode", ev.mode);
        set_if("--train", "train", ev.train);
        set_if("--test", "test", ev.test);
        set_if("--synthetic", "synthetic", ev.synthetic);
        set_if("--epochs", "epochs", ev.epochs);
        cmd_evaluate(ctx);
    });
    compare_cmd->callback([&] {
        CommandCtx ctx("compare", compare_cmd, cp.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (compare_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--dataset", "dataset", cp.dataset);
        set_if("--frameworks", "frameworks", cp.frameworks);
        set_if("--repeats", "repeats", cp.repeats);
        set_if("--assert-ordering", "assert_ordering", cp.assert_ordering);
        cmd_compare(ctx);
    });
    features_cmd->callback([&] {
        CommandCtx ctx("features", features_cmd, fe.common);
        if (features_cmd->count("--dataset") > 0) ctx.cfg().set("dataset", fe.dataset);
        cmd_features(ctx);
    });
    tsne_cmd->callback([&] {
        CommandCtx ctx("tsne", tsne_cmd, ts.common);
        auto set_if = [&](const char* flag, const char* key, const std::string& value) {
            if (tsne_cmd->count(flag) > 0) ctx.cfg().set(key, value);
        };
        set_if("--perplexity", "perplexity", ts.perplexity);
        set_if("--iterations", "iterations", ts.iterations);
        int idx = 0;
        while (ctx.cfg().has("input." + std::to_string(idx) + ".path")) ++idx;
        auto append = [&](const std::vector<std::string>& paths, const char* source) {
            for (const std::string& path : paths) {
                const std::string prefix = "input." + std::to_string(idx++) + ".";
                ctx.cfg().set(prefix + "path", path);
                ctx.cfg().set(prefix + "source", source);
            }
        };
        append(ts.real, "real");
        append(ts.synthetic, "synthetic");
        cmd_tsne(ctx);
    });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const OrderingViolation& v) {
        std::fprintf(stderr, "%s\n", v.message.c_str());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}

}  // namespace n2f
