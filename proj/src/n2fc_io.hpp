#pragma once

// Shared implementation pieces for the "N2FC" checkpoint container used by
// every trainable model in the project. One container format, one magic, one
// version; files are told apart by the mandatory "type" key in the key-value
// spec block. Internal header: included by the model .cpp files only.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "n2f/adam.hpp"
#include "n2f/binio.hpp"
#include "n2f/common.hpp"
#include "n2f/tensor.hpp"

namespace n2f {
namespace n2fc {

inline std::string widths_to_text(const std::vector<int64_t>& widths) {
    std::string s;
    for (size_t i = 0; i < widths.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(widths[i]);
    }
    return s;
}

inline std::vector<int64_t> widths_from_text(const std::string& text, const std::string& source) {
    std::vector<int64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const long long v = std::strtoll(item.c_str(), &end, 10);
        N2F_CHECK_IO(end != item.c_str() && *end == '\0' && v > 0,
                     "%s: bad width list entry '%s'", source.c_str(), item.c_str());
        out.push_back(v);
    }
    N2F_CHECK_IO(!out.empty(), "%s: empty width list", source.c_str());
    return out;
}

inline std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Parsed key-value spec block with typed, checked accessors.
class KvBlock {
  public:
    KvBlock(const std::string& text, std::string source) : source_(std::move(source)) {
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const size_t sp = line.find(' ');
            N2F_CHECK_IO(sp != std::string::npos, "%s: malformed spec line '%s'", source_.c_str(),
                         line.c_str());
            kv_[line.substr(0, sp)] = line.substr(sp + 1);
        }
    }

    std::string need(const char* key) const {
        auto it = kv_.find(key);
        N2F_CHECK_IO(it != kv_.end(), "%s: spec block is missing '%s'", source_.c_str(), key);
        return it->second;
    }
    long long get_int(const char* key) const {
        const std::string v = need(key);
        char* end = nullptr;
        const long long x = std::strtoll(v.c_str(), &end, 10);
        N2F_CHECK_IO(end != v.c_str() && *end == '\0', "%s: bad integer '%s' for '%s'",
                     source_.c_str(), v.c_str(), key);
        return x;
    }
    double get_real(const char* key) const {
        const std::string v = need(key);
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        N2F_CHECK_IO(end != v.c_str() && *end == '\0', "%s: bad number '%s' for '%s'",
                     source_.c_str(), v.c_str(), key);
        return x;
    }
    std::vector<int64_t> get_widths(const char* key) const {
        return widths_from_text(need(key), source_);
    }
    const std::string& source() const { return source_; }

  private:
    std::string source_;
    std::map<std::string, std::string> kv_;
};

inline void put_tensor(std::string& buf, const std::string& name, const Tensor& t) {
    N2F_CHECK(name.size() <= 65535, "tensor name too long");
    binio::put_u16(buf, static_cast<uint16_t>(name.size()));
    binio::put_bytes(buf, name.data(), name.size());
    N2F_CHECK(t.rank() <= 255, "tensor rank too large");
    binio::put_u8(buf, static_cast<uint8_t>(t.rank()));
    for (int64_t d = 0; d < t.rank(); ++d) binio::put_u32(buf, static_cast<uint32_t>(t.dim(d)));
    for (int64_t i = 0; i < t.volume(); ++i) binio::put_f32(buf, t[i]);
}

inline std::pair<std::string, Tensor> read_tensor(binio::Reader& r) {
    const uint16_t name_len = r.u16("tensor name length");
    std::string name = r.bytes(name_len, "tensor name");
    const uint8_t rank = r.u8("tensor rank");
    std::vector<int64_t> dims;
    int64_t volume = 1;
    for (int i = 0; i < rank; ++i) {
        const uint32_t d = r.u32("tensor dim");
        N2F_CHECK_IO(d >= 1, "%s: zero extent in tensor '%s'", r.source().c_str(), name.c_str());
        dims.push_back(d);
        volume *= d;
    }
    Tensor t(dims);
    r.read_f32_block(t.data(), static_cast<size_t>(volume), "tensor data");
    return {std::move(name), std::move(t)};
}

// Serializes one container: magic, version, the spec text (which must begin
// with its "type" line), then a flat tensor table. Each section's tensors are
// written under "<prefix><name>".
struct Section {
    const char* prefix;  // e.g. "g.", "d.", "opt."
    const std::vector<std::pair<std::string, Tensor>>* tensors;
};

inline void write_container(const std::string& path, const std::string& spec,
                            const std::vector<Section>& sections) {
    std::string buf;
    binio::put_bytes(buf, "N2FC", 4);
    binio::put_u16(buf, 1);
    binio::put_u32(buf, static_cast<uint32_t>(spec.size()));
    binio::put_bytes(buf, spec.data(), spec.size());
    size_t total = 0;
    for (const auto& s : sections) total += s.tensors->size();
    binio::put_u32(buf, static_cast<uint32_t>(total));
    for (const auto& s : sections)
        for (const auto& [name, t] : *s.tensors) put_tensor(buf, s.prefix + name, t);
    binio::write_file(path, buf);
}

// Reads a container, validating magic/version and the expected type tag, and
// splits the tensor table back into the given sections by prefix (longest
// prefix wins so "opt." is matched before a hypothetical "o.").
struct SectionOut {
    const char* prefix;
    std::vector<std::pair<std::string, Tensor>>* tensors;
};

inline KvBlock read_container(const std::string& path, const char* expected_type,
                              const std::vector<SectionOut>& sections) {
    const std::string bytes = binio::read_file(path);
    binio::Reader r(bytes, path);
    N2F_CHECK_IO(r.bytes(4, "magic") == "N2FC", "%s: not a checkpoint file (bad magic)",
                 path.c_str());
    const uint16_t version = r.u16("version");
    N2F_CHECK_IO(version == 1, "%s: unsupported checkpoint version %u", path.c_str(), version);
    const uint32_t spec_len = r.u32("spec block length");
    KvBlock kv(r.bytes(spec_len, "spec block"), path);
    const std::string type = kv.need("type");
    N2F_CHECK_IO(type == expected_type, "%s: checkpoint type is '%s', expected '%s'", path.c_str(),
                 type.c_str(), expected_type);
    const uint32_t n_tensors = r.u32("tensor count");
    for (uint32_t i = 0; i < n_tensors; ++i) {
        auto [name, t] = read_tensor(r);
        const SectionOut* best = nullptr;
        size_t best_len = 0;
        for (const auto& s : sections) {
            const size_t len = std::char_traits<char>::length(s.prefix);
            if (len > best_len && name.rfind(s.prefix, 0) == 0) {
                best = &s;
                best_len = len;
            }
        }
        if (!best)
            throw IoError(strformat("%s: tensor '%s' has no known section prefix", path.c_str(),
                                    name.c_str()));
        best->tensors->emplace_back(name.substr(best_len), std::move(t));
    }
    N2F_CHECK_IO(r.remaining() == 0, "%s: %zu trailing bytes after the last tensor", path.c_str(),
                 r.remaining());
    return kv;
}

// Snapshot every parameter (weights and batchnorm running state) by name.
inline std::vector<std::pair<std::string, Tensor>> snapshot_params(const ParamStore& store) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) out.emplace_back(store[i].name, store[i].value);
    return out;
}

inline void append_moments(std::vector<std::pair<std::string, Tensor>>& out, const char* prefix,
                           const Adam& opt) {
    for (const auto& s : opt.slots()) {
        out.emplace_back(std::string(prefix) + s.param->name + ".m", s.m);
        out.emplace_back(std::string(prefix) + s.param->name + ".v", s.v);
    }
}

inline void apply_moments(Adam& opt, const char* prefix,
                          const std::vector<std::pair<std::string, Tensor>>& state) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : state) by_name[name] = &t;
    for (auto& s : opt.slots()) {
        for (const char* kind : {".m", ".v"}) {
            const std::string key = std::string(prefix) + s.param->name + kind;
            auto it = by_name.find(key);
            N2F_CHECK_IO(it != by_name.end(), "checkpoint is missing optimizer state '%s'",
                         key.c_str());
            TensorT<float>& dst = kind[1] == 'm' ? s.m : s.v;
            N2F_CHECK_IO(it->second->same_shape(dst), "optimizer state '%s' has the wrong shape",
                         key.c_str());
            dst = *it->second;
        }
    }
}

}  // namespace n2fc
}  // namespace n2f
