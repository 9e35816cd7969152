#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "arflow/types.hpp"

namespace arflow {

// .vraw: line "VRAW1\n", line "T H W C f32 LE\n", then T*H*W*C
// little-endian f32 samples, frame-major / row-major / channel-last.
// In-memory samples are double; writing casts to f32, reading widens
// exactly, so files round-trip bit-exactly for f32-representable data.
void write_vraw(const Video& v, const std::filesystem::path& path);
Video read_vraw(const std::filesystem::path& path);

void write_vraw(const LatentSeq& z, const std::filesystem::path& path);
LatentSeq read_vraw_latent(const std::filesystem::path& path, int chunk_len);

// One image file per frame under dir: <stem>_%04d.pgm for C=1 (P5) or
// .ppm for C=3 (P6), maxval 255, clamp to [0,1] then round half up.
// Returns the written paths in frame order.
std::vector<std::filesystem::path> export_frames(
    const Video& v, const std::filesystem::path& dir,
    const std::string& stem = "frame");

// Reinterpret latent storage as a video (same flat layout) and back.
Video latent_as_video(const LatentSeq& z);
LatentSeq video_as_latent(const Video& v, int chunk_len);

}  // namespace arflow
