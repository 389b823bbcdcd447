#include "railseg/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "railseg/common.hpp"
#include "railseg/geometry.hpp"

namespace fs = std::filesystem;

namespace railseg {

namespace {

constexpr char kRpcfMagic[4] = {'R', 'P', 'C', 'F'};

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void put_u32(FILE* f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 4, f);
}

void put_u64(FILE* f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 8, f);
}

bool get_bytes(FILE* f, void* dst, size_t n) { return std::fread(dst, 1, n, f) == n; }

bool get_u32(FILE* f, uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(f, b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return true;
}

bool get_u64(FILE* f, uint64_t& v) {
    unsigned char b[8];
    if (!get_bytes(f, b, 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return true;
}

}  // namespace

void write_rpcf(const std::string& path, const Frame& frame) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail_data("rpcf: cannot open for writing: " + path);
    std::fwrite(kRpcfMagic, 1, 4, f.get());
    put_u32(f.get(), kRpcfVersion);
    put_u64(f.get(), uint64_t(frame.size()));
    for (const Point& p : frame.points) {
        const float xyzi[4] = {float(p.x), float(p.y), float(p.z), float(p.intensity)};
        std::fwrite(xyzi, sizeof(float), 4, f.get());
        const uint8_t label = uint8_t(p.label);
        std::fwrite(&label, 1, 1, f.get());
    }
    if (std::ferror(f.get())) fail_data("rpcf: write failed: " + path);
}

Frame read_rpcf(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail_data("rpcf: cannot open: " + path);
    char magic[4];
    if (!get_bytes(f.get(), magic, 4) || std::memcmp(magic, kRpcfMagic, 4) != 0)
        fail_data("rpcf: bad magic in " + path);
    uint32_t version = 0;
    uint64_t count = 0;
    if (!get_u32(f.get(), version)) fail_data("rpcf: truncated header: " + path);
    if (version != kRpcfVersion)
        fail_data("rpcf: unsupported version " + std::to_string(version));
    if (!get_u64(f.get(), count)) fail_data("rpcf: truncated header: " + path);
    if (count > (1ULL << 32)) fail_data("rpcf: implausible point count");

    Frame frame;
    frame.frame_id = frame_id_from_path(path);
    frame.points.resize(size_t(count));
    for (uint64_t i = 0; i < count; ++i) {
        float xyzi[4];
        uint8_t label;
        if (!get_bytes(f.get(), xyzi, sizeof(xyzi)) || !get_bytes(f.get(), &label, 1))
            fail_data("rpcf: truncated point data: " + path);
        Point& p = frame.points[size_t(i)];
        p.x = double(xyzi[0]);
        p.y = double(xyzi[1]);
        p.z = double(xyzi[2]);
        p.intensity = double(xyzi[3]);
        p.label = label == 0 ? Label::background : (label == 1 ? Label::rail : Label::unlabeled);
        if (label != 0 && label != 1 && label != 255)
            fail_data("rpcf: invalid label value in " + path);
    }
    char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) fail_data("rpcf: trailing bytes: " + path);
    return frame;
}

void write_ply(const std::string& path, const Frame& frame) {
    std::ofstream out(path);
    if (!out) fail_data("ply: cannot open for writing: " + path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << frame.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property float intensity\nproperty uchar label\nend_header\n";
    char line[160];
    for (const Point& p : frame.points) {
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %u\n", p.x, p.y, p.z, p.intensity,
                      unsigned(p.label));
        out << line;
    }
    if (!out) fail_data("ply: write failed: " + path);
}

Frame read_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("ply: cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") fail_data("ply: bad magic: " + path);

    size_t vertex_count = 0;
    bool ascii = false, in_vertex = false, header_done = false;
    std::vector<std::string> properties;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string kind;
            ls >> kind;
            ascii = kind == "ascii";
        } else if (tok == "comment") {
            continue;
        } else if (tok == "element") {
            std::string name;
            size_t n = 0;
            ls >> name >> n;
            in_vertex = name == "vertex";
            if (in_vertex) vertex_count = n;
        } else if (tok == "property") {
            if (!in_vertex) continue;
            std::string type, name;
            ls >> type >> name;
            properties.push_back(name);
        } else if (tok == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) fail_data("ply: missing end_header: " + path);
    if (!ascii) fail_data("ply: only ascii format is supported: " + path);

    auto index_of = [&](const char* name) {
        auto it = std::find(properties.begin(), properties.end(), name);
        return it == properties.end() ? -1 : int(it - properties.begin());
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    const int ii = index_of("intensity"), il = index_of("label");
    if (ix < 0 || iy < 0 || iz < 0) fail_data("ply: needs x, y and z properties: " + path);

    Frame frame;
    frame.frame_id = frame_id_from_path(path);
    frame.points.resize(vertex_count);
    std::vector<double> values(properties.size());
    std::string token;
    for (size_t v = 0; v < vertex_count; ++v) {
        if (!std::getline(in, line)) fail_data("ply: truncated vertex list: " + path);
        std::istringstream ls(line);
        for (size_t c = 0; c < values.size(); ++c) {
            // strtod accepts nan/inf, which stream extraction does not
            if (!(ls >> token)) fail_data("ply: malformed vertex line: " + path);
            char* end = nullptr;
            values[c] = std::strtod(token.c_str(), &end);
            if (end == token.c_str() || *end != '\0')
                fail_data("ply: malformed vertex value '" + token + "': " + path);
        }
        Point& p = frame.points[v];
        p.x = values[size_t(ix)];
        p.y = values[size_t(iy)];
        p.z = values[size_t(iz)];
        p.intensity = ii >= 0 ? values[size_t(ii)] : 0.0;
        if (il >= 0) {
            const int lab = int(values[size_t(il)]);
            p.label = lab == 0 ? Label::background
                               : (lab == 1 ? Label::rail : Label::unlabeled);
        }
    }
    return frame;
}

Frame load_frame(const std::string& path, IngestReport* report) {
    const std::string ext = fs::path(path).extension().string();
    Frame raw;
    if (ext == ".rpcf") raw = read_rpcf(path);
    else if (ext == ".ply") raw = read_ply(path);
    else fail_usage("load_frame: unsupported extension: " + path);
    return sanitize_frame(raw, report);
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(path);
    if (!out) fail_data("manifest: cannot open for writing: " + path);
    out << "frame_id,topology,points,rail_points\n";
    for (const ManifestRow& r : rows)
        out << r.frame_id << "," << r.topology << "," << r.points << "," << r.rail_points << "\n";
    if (!out) fail_data("manifest: write failed: " + path);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("manifest: cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) fail_data("manifest: empty file: " + path);
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRow row;
        std::string field;
        if (!std::getline(ls, field, ',')) fail_data("manifest: malformed row: " + path);
        row.frame_id = std::stoll(field);
        if (!std::getline(ls, row.topology, ',')) fail_data("manifest: malformed row: " + path);
        if (!std::getline(ls, field, ',')) fail_data("manifest: malformed row: " + path);
        row.points = std::stoull(field);
        if (!std::getline(ls, field, ',')) fail_data("manifest: malformed row: " + path);
        row.rail_points = std::stoull(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& extension) {
    if (!fs::is_directory(dir)) fail_data("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == extension)
            out.push_back(entry.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

int64_t frame_id_from_path(const std::string& path) {
    const std::string stem = fs::path(path).stem().string();
    size_t end = stem.size();
    while (end > 0 && std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
    if (end == stem.size()) return -1;
    return std::stoll(stem.substr(end));
}

}  // namespace railseg
