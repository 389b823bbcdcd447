#pragma once

#include <string>
#include <vector>

#include "railseg/types.hpp"

namespace railseg {

// RPCF binary frames: magic "RPCF", u32 LE version 1, u64 LE point count,
// then per point float32 LE x,y,z,intensity and u8 label. Write/read/write is
// byte-exact.
inline constexpr uint32_t kRpcfVersion = 1;

void write_rpcf(const std::string& path, const Frame& frame);
Frame read_rpcf(const std::string& path);

// ASCII PLY with vertex properties x, y, z, intensity, label. The reader
// accepts extra properties and any property order; intensity and label are
// optional on input (defaults 0 and unlabeled).
void write_ply(const std::string& path, const Frame& frame);
Frame read_ply(const std::string& path);

// Reads a frame by extension (.rpcf or .ply), drops non-finite points and
// clamps intensity. The frame id comes from trailing digits in the stem.
Frame load_frame(const std::string& path, IngestReport* report = nullptr);

struct ManifestRow {
    int64_t frame_id = 0;
    std::string topology;
    uint64_t points = 0;
    uint64_t rail_points = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

// Sorted listing of regular files in `dir` with the given extension.
std::vector<std::string> list_files(const std::string& dir, const std::string& extension);

int64_t frame_id_from_path(const std::string& path);

}  // namespace railseg
