#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace n2f {

inline constexpr const char* kToolVersion = "0.1.0";

// Declarative run configuration: a plain-text document of "key value" lines
// ('#' starts a comment, blank lines are skipped, values run to the end of
// the line). Typed getters record every key they resolve — whether the value
// came from the document, a command-line override, or the built-in default —
// which gives two guarantees:
//   * strict schemas: after a command has read its keys, reject_unknown()
//     fails on anything left over, with file/line context;
//   * complete provenance: resolved_text() dumps every key with the value
//     actually used, defaults included, so a run can be reproduced from its
//     dump alone.
class RunConfig {
public:
    RunConfig() = default;

    // Parses a document; `origin` names it in error messages ("file.kv:12: ...").
    static RunConfig parse_text(const std::string& text, const std::string& origin);
    static RunConfig load(const std::string& path);

    // Command-line override; wins over the document value for the same key.
    void set(const std::string& key, const std::string& value);

    // True when the key is present in the document or the overrides; does not
    // mark the key as consumed.
    bool has(const std::string& key) const;

    // Typed getters with defaults. Conversion failures carry the origin, line,
    // and key. Lists are comma-separated.
    std::string get_str(const std::string& key, const std::string& fallback);
    int64_t get_int(const std::string& key, int64_t fallback);
    double get_real(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);  // true/false/1/0
    std::vector<std::string> get_list(const std::string& key, const std::string& fallback);
    std::vector<int64_t> get_int_list(const std::string& key, const std::string& fallback);

    // Required variants: ConfigError naming the key when it is absent.
    std::string need_str(const std::string& key);
    int64_t need_int(const std::string& key);

    // Throws ConfigError listing every document or override key no getter
    // consumed. Call once the command's full schema has been read.
    void reject_unknown() const;

    // "key value" lines sorted by key: everything a getter resolved, with the
    // value actually used. Re-parsing the dump resolves identically.
    std::string resolved_text() const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    // Returns the effective raw value (override beats document) or nullptr,
    // marking the key consumed either way.
    const std::string* lookup(const std::string& key);
    void record(const std::string& key, const std::string& value);
    [[noreturn]] void fail_value(const std::string& key, const std::string& value,
                                 const char* expected) const;

    std::string origin_ = "<flags>";
    std::map<std::string, Entry> doc_;
    std::map<std::string, std::string> overrides_;
    std::map<std::string, std::string> resolved_;
    std::set<std::string> touched_;
};

// FNV-1a 64-bit digest; rendered as 16 lowercase hex digits. Used for config
// hashes and input/artifact fingerprints in run manifests.
uint64_t fnv1a64(const void* data, size_t n);
std::string fnv1a64_hex(const std::string& bytes);
// Digest of a file's bytes; IoError when the file cannot be read.
std::string file_digest_hex(const std::string& path);

struct ManifestEntry {
    std::string path;
    std::string digest;  // fnv1a64 hex of the file bytes
};

// One manifest per command invocation that writes outputs: what ran, on which
// inputs, producing which artifacts. Artifact digests let two runs be compared
// for byte-identity without keeping the outputs around.
struct RunManifest {
    std::string command;
    std::string tool_version = kToolVersion;
    std::string config_hash;  // fnv1a64 hex of the resolved config text
    std::vector<ManifestEntry> inputs;
    std::vector<ManifestEntry> artifacts;
    // Free-form tags and warnings, e.g. {"source", "synthetic"}.
    std::vector<std::pair<std::string, std::string>> notes;
    std::string started_at;  // ISO 8601 UTC, second resolution
    std::string finished_at;
};

std::string iso8601_utc_now();

// JSON with a stable field order (two-space indent, trailing newline).
std::string manifest_json(const RunManifest& m);
void save_manifest(const RunManifest& m, const std::string& path);

}  // namespace n2f
