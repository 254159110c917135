#include "fswap/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fswap {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'W', 'P', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_i32(std::ostream& out, std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::int32_t get_i32(std::istream& in) {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::string get_str(std::istream& in) {
    std::uint32_t n = get_u32(in);
    if (n > (1u << 24)) throw SchemaError("checkpoint: oversized string field");
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

}  // namespace

void Checkpoint::add_array(const std::string& name, Tensor t) {
    for (const auto& [n, v] : arrays_)
        if (n == name) throw SchemaError("Checkpoint: duplicate array " + name);
    arrays_.emplace_back(name, std::move(t));
}

bool Checkpoint::has_array(const std::string& name) const {
    for (const auto& [n, v] : arrays_)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::array(const std::string& name) const {
    for (const auto& [n, v] : arrays_)
        if (n == name) return v;
    throw SchemaError("Checkpoint: missing array " + name);
}

void Checkpoint::add_store(const std::string& prefix, const ParamStore& ps) {
    for (const auto& [n, v] : ps.items()) add_array(prefix + "/" + n, v.value());
}

void Checkpoint::load_into_store(const std::string& prefix, ParamStore& ps) const {
    for (const auto& [n, v] : ps.items()) {
        const Tensor& src = array(prefix + "/" + n);
        if (!(src.shape() == v.shape()))
            throw SchemaError("Checkpoint: shape mismatch for " + prefix + "/" + n + ": " + src.shape().str() +
                              " vs " + v.shape().str());
        ag::Var target = ps.find(n);  // shares the parameter node
        target.value() = src;
    }
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("Checkpoint::save: cannot open " + path);
    out.write(kMagic, 8);
    put_u32(out, version);
    put_u64(out, config_hash);
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(arrays_.size()));
    for (const auto& [name, t] : arrays_) {
        put_str(out, name);
        put_i32(out, t.c());
        put_i32(out, t.h());
        put_i32(out, t.w());
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(sizeof(double) * t.size()));
    }
    if (!out) throw IoError("Checkpoint::save: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("Checkpoint::load: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw SchemaError("Checkpoint::load: bad magic in " + path);
    Checkpoint ck;
    ck.version = get_u32(in);
    if (ck.version != kCheckpointVersion)
        throw SchemaError("Checkpoint::load: unsupported format-version " + std::to_string(ck.version) + " in " +
                          path);
    ck.config_hash = get_u64(in);
    std::uint32_t nmeta = get_u32(in);
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        std::string k = get_str(in);
        ck.meta[k] = get_str(in);
    }
    std::uint32_t narr = get_u32(in);
    for (std::uint32_t i = 0; i < narr; ++i) {
        std::string name = get_str(in);
        int c = get_i32(in), h = get_i32(in), w = get_i32(in);
        if (c < 1 || h < 1 || w < 1) throw SchemaError("Checkpoint::load: bad array shape for " + name);
        Tensor t(c, h, w);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(sizeof(double) * t.size()));
        if (!in) throw IoError("Checkpoint::load: truncated array " + name + " in " + path);
        ck.arrays_.emplace_back(name, std::move(t));
    }
    return ck;
}

}  // namespace fswap
