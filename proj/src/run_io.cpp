#include "n2f/run_io.hpp"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <sstream>

#include <json.hpp>

#include "n2f/binio.hpp"
#include "n2f/common.hpp"

namespace n2f {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const size_t sep = line.find_first_of(" \t");
        N2F_CHECK(sep != std::string::npos, "%s:%d: expected 'key value', got '%s'",
                  origin.c_str(), line_no, line.c_str());
        const std::string key = line.substr(0, sep);
        const std::string value = trim(line.substr(sep));
        N2F_CHECK(!value.empty(), "%s:%d: key '%s' has no value", origin.c_str(), line_no,
                  key.c_str());
        auto [it, inserted] = cfg.doc_.emplace(key, Entry{value, line_no});
        N2F_CHECK(inserted, "%s:%d: duplicate key '%s' (first set on line %d)", origin.c_str(),
                  line_no, key.c_str(), it->second.line);
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    return parse_text(binio::read_file(path), path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
    overrides_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
    return overrides_.count(key) > 0 || doc_.count(key) > 0;
}

const std::string* RunConfig::lookup(const std::string& key) {
    touched_.insert(key);
    if (auto it = overrides_.find(key); it != overrides_.end()) return &it->second;
    if (auto it = doc_.find(key); it != doc_.end()) return &it->second.value;
    return nullptr;
}

void RunConfig::record(const std::string& key, const std::string& value) {
    resolved_[key] = value;
}

void RunConfig::fail_value(const std::string& key, const std::string& value,
                           const char* expected) const {
    if (auto it = doc_.find(key); it != doc_.end() && overrides_.count(key) == 0)
        throw ConfigError(strformat("%s:%d: key '%s': expected %s, got '%s'", origin_.c_str(),
                                    it->second.line, key.c_str(), expected, value.c_str()));
    throw ConfigError(
        strformat("key '%s': expected %s, got '%s'", key.c_str(), expected, value.c_str()));
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) {
    const std::string* v = lookup(key);
    const std::string out = v ? *v : fallback;
    record(key, out);
    return out;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) {
    const std::string* v = lookup(key);
    if (!v) {
        record(key, std::to_string(fallback));
        return fallback;
    }
    int64_t out = 0;
    const char* first = v->data();
    const char* last = first + v->size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) fail_value(key, *v, "an integer");
    record(key, *v);
    return out;
}

double RunConfig::get_real(const std::string& key, double fallback) {
    const std::string* v = lookup(key);
    if (!v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", fallback);
        record(key, buf);
        return fallback;
    }
    errno = 0;
    char* end = nullptr;
    const double out = std::strtod(v->c_str(), &end);
    if (errno != 0 || end != v->c_str() + v->size() || v->empty())
        fail_value(key, *v, "a real number");
    record(key, *v);
    return out;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) {
    const std::string* v = lookup(key);
    if (!v) {
        record(key, fallback ? "true" : "false");
        return fallback;
    }
    bool out = false;
    if (*v == "true" || *v == "1")
        out = true;
    else if (*v == "false" || *v == "0")
        out = false;
    else
        fail_value(key, *v, "a boolean (true/false/1/0)");
    record(key, *v);
    return out;
}

std::vector<std::string> RunConfig::get_list(const std::string& key, const std::string& fallback) {
    const std::string raw = get_str(key, fallback);
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int64_t> RunConfig::get_int_list(const std::string& key, const std::string& fallback) {
    const std::vector<std::string> items = get_list(key, fallback);
    std::vector<int64_t> out;
    out.reserve(items.size());
    for (const std::string& item : items) {
        int64_t v = 0;
        const char* first = item.data();
        const char* last = first + item.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last)
            fail_value(key, item, "a comma-separated list of integers");
        out.push_back(v);
    }
    return out;
}

std::string RunConfig::need_str(const std::string& key) {
    const std::string* v = lookup(key);
    N2F_CHECK(v != nullptr, "required key '%s' is missing (set it in the config file or by flag)",
              key.c_str());
    record(key, *v);
    return *v;
}

int64_t RunConfig::need_int(const std::string& key) {
    const std::string* v = lookup(key);
    N2F_CHECK(v != nullptr, "required key '%s' is missing (set it in the config file or by flag)",
              key.c_str());
    return get_int(key, 0);
}

void RunConfig::reject_unknown() const {
    std::vector<std::string> unknown;
    for (const auto& [key, entry] : doc_)
        if (touched_.count(key) == 0)
            unknown.push_back(strformat("%s:%d: unknown key '%s'", origin_.c_str(), entry.line,
                                        key.c_str()));
    for (const auto& [key, value] : overrides_)
        if (touched_.count(key) == 0)
            unknown.push_back(strformat("override for unknown key '%s'", key.c_str()));
    if (unknown.empty()) return;
    std::string msg = unknown.size() == 1 ? unknown[0]
                                          : std::to_string(unknown.size()) + " unknown keys:";
    if (unknown.size() > 1)
        for (const std::string& u : unknown) msg += "\n  " + u;
    throw ConfigError(msg);
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [key, value] : resolved_) {
        out += key;
        out += ' ';
        out += value;
        out += '\n';
    }
    return out;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

std::string file_digest_hex(const std::string& path) {
    return fnv1a64_hex(binio::read_file(path));
}

std::string iso8601_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string manifest_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["tool_version"] = m.tool_version;
    j["config_hash"] = m.config_hash;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    auto entries = [](const std::vector<ManifestEntry>& list) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const ManifestEntry& e : list) arr.push_back({{"path", e.path}, {"digest", e.digest}});
        return arr;
    };
    j["inputs"] = entries(m.inputs);
    j["artifacts"] = entries(m.artifacts);
    nlohmann::ordered_json notes = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.notes) notes[k] = v;
    j["notes"] = notes;
    return j.dump(2) + "\n";
}

void save_manifest(const RunManifest& m, const std::string& path) {
    binio::write_file(path, manifest_json(m));
}

}  // namespace n2f
