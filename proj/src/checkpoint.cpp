#include "railseg/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <memory>

#include "railseg/common.hpp"

namespace railseg {

namespace {

constexpr char kMagic[4] = {'R', 'R', 'C', 'K'};
constexpr int64_t kMaxTensorElems = 1LL << 30;

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void put_u16(FILE* f, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    std::fwrite(b, 1, 2, f);
}

void put_u32(FILE* f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 4, f);
}

bool get_bytes(FILE* f, void* dst, size_t n) { return std::fread(dst, 1, n, f) == n; }

bool get_u16(FILE* f, uint16_t& v) {
    unsigned char b[2];
    if (!get_bytes(f, b, 2)) return false;
    v = uint16_t(b[0]) | uint16_t(b[1]) << 8;
    return true;
}

bool get_u32(FILE* f, uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(f, b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return true;
}

}  // namespace

uint32_t fnv1a32(const std::string& text) {
    uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

void write_checkpoint(const std::string& path, uint32_t arch_hash,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::vector<std::pair<std::string, const Tensor*>> sorted = tensors;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail_data("checkpoint: cannot open for writing: " + path);
    std::fwrite(kMagic, 1, 4, f.get());
    put_u32(f.get(), kCheckpointVersion);
    put_u32(f.get(), arch_hash);
    put_u32(f.get(), uint32_t(sorted.size()));
    std::vector<float> buf;
    for (const auto& [name, tensor] : sorted) {
        if (name.size() > 0xffff) fail_usage("checkpoint: tensor name too long");
        put_u16(f.get(), uint16_t(name.size()));
        std::fwrite(name.data(), 1, name.size(), f.get());
        const unsigned char rank = (unsigned char)(tensor->shape.size());
        std::fwrite(&rank, 1, 1, f.get());
        for (int32_t d : tensor->shape) put_u32(f.get(), uint32_t(d));
        buf.resize(tensor->data.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = float(tensor->data[i]);
        std::fwrite(buf.data(), sizeof(float), buf.size(), f.get());
    }
    if (std::ferror(f.get())) fail_data("checkpoint: write failed: " + path);
}

uint32_t read_checkpoint(const std::string& path, std::map<std::string, Tensor>& out) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail_data("checkpoint: cannot open: " + path);
    char magic[4];
    if (!get_bytes(f.get(), magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        fail_data("checkpoint: bad magic in " + path);
    uint32_t version = 0, hash = 0, count = 0;
    if (!get_u32(f.get(), version)) fail_data("checkpoint: truncated header");
    if (version != kCheckpointVersion)
        fail_data("checkpoint: unsupported version " + std::to_string(version));
    if (!get_u32(f.get(), hash) || !get_u32(f.get(), count))
        fail_data("checkpoint: truncated header");

    out.clear();
    for (uint32_t t = 0; t < count; ++t) {
        uint16_t name_len = 0;
        if (!get_u16(f.get(), name_len)) fail_data("checkpoint: truncated tensor name length");
        std::string name(name_len, '\0');
        if (!get_bytes(f.get(), name.data(), name_len))
            fail_data("checkpoint: truncated tensor name");
        unsigned char rank = 0;
        if (!get_bytes(f.get(), &rank, 1)) fail_data("checkpoint: truncated tensor rank");
        std::vector<int32_t> shape(rank);
        int64_t elems = 1;
        for (int i = 0; i < rank; ++i) {
            uint32_t d = 0;
            if (!get_u32(f.get(), d)) fail_data("checkpoint: truncated tensor shape");
            shape[size_t(i)] = int32_t(d);
            elems *= int64_t(d);
            if (elems < 0 || elems > kMaxTensorElems)
                fail_data("checkpoint: implausible tensor size");
        }
        Tensor tensor(shape);
        const size_t n_elems = size_t(elems);
        std::vector<float> buf(n_elems);
        if (!get_bytes(f.get(), buf.data(), buf.size() * sizeof(float)))
            fail_data("checkpoint: truncated tensor data for " + name);
        for (size_t i = 0; i < buf.size(); ++i) tensor.data[i] = double(buf[i]);
        if (!out.emplace(std::move(name), std::move(tensor)).second)
            fail_data("checkpoint: duplicate tensor name");
    }
    char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) fail_data("checkpoint: trailing bytes");
    return hash;
}

}  // namespace railseg
