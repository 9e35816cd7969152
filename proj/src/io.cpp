#include "arflow/io.hpp"
#include "arflow/prior.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace arflow {

namespace {

void put_f32_le(std::ostream& os, float f) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  const unsigned char b[4] = {
      (unsigned char)(u & 0xff), (unsigned char)((u >> 8) & 0xff),
      (unsigned char)((u >> 16) & 0xff), (unsigned char)((u >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32_le(const unsigned char* b) {
  const std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                          (std::uint32_t(b[2]) << 16) |
                          (std::uint32_t(b[3]) << 24);
  return std::bit_cast<float>(u);
}

}  // namespace

void write_vraw(const Video& v, const std::filesystem::path& path) {
  if (!v.data.isFinite().all())
    throw FormatError("refusing to write non-finite samples");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os << "VRAW1\n"
     << v.frames << ' ' << v.height << ' ' << v.width << ' ' << v.channels
     << " f32 LE\n";
  for (std::int64_t i = 0; i < v.total(); ++i)
    put_f32_le(os, float(v.data[i]));
  if (!os) throw IoError("write failed: " + path.string());
}

Video read_vraw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path.string());
  std::string magic;
  if (!std::getline(is, magic)) throw FormatError("missing header line");
  if (magic != "VRAW1") throw FormatError("bad magic: '" + magic + "'");
  std::string dims_line;
  if (!std::getline(is, dims_line)) throw FormatError("missing dims line");
  std::istringstream ds(dims_line);
  std::int64_t t = 0, h = 0, w = 0, c = 0;
  std::string stype, sendian;
  if (!(ds >> t >> h >> w >> c >> stype >> sendian))
    throw FormatError("unparseable dims line: '" + dims_line + "'");
  if (stype != "f32" || sendian != "LE")
    throw FormatError("unsupported sample type: " + stype + " " + sendian);
  if (t <= 0 || h <= 0 || w <= 0 || c <= 0)
    throw FormatError("non-positive dimension in '" + dims_line + "'");
  constexpr std::int64_t kMaxSamples = std::int64_t(1) << 31;
  if (h > kMaxSamples || w > kMaxSamples || c > kMaxSamples ||
      t > kMaxSamples / (h * w * c > 0 ? h * w * c : 1) ||
      t * h * w * c > kMaxSamples)
    throw FormatError("dimension overflow in '" + dims_line + "'");

  Video v = make_video<double>(int(t), int(h), int(w), int(c));
  const std::int64_t n = v.total();
  std::vector<unsigned char> buf(std::size_t(n) * 4);
  is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (is.gcount() != std::streamsize(buf.size()))
    throw FormatError("truncated payload: expected " +
                      std::to_string(n * 4) + " bytes, got " +
                      std::to_string(is.gcount()));
  char extra;
  if (is.read(&extra, 1))
    throw FormatError("trailing bytes after payload");
  for (std::int64_t i = 0; i < n; ++i) {
    const float f = get_f32_le(buf.data() + std::size_t(i) * 4);
    if (!std::isfinite(f))
      throw FormatError("non-finite sample at index " + std::to_string(i));
    v.data[i] = double(f);
  }
  return v;
}

Video latent_as_video(const LatentSeq& z) {
  Video v = make_video<double>(z.latent_frames, z.h, z.w, z.c);
  v.data = z.data;
  return v;
}

LatentSeq video_as_latent(const Video& v, int chunk_len) {
  LatentSeq z = make_latent_seq<double>(v.frames, v.height, v.width,
                                        v.channels, chunk_len);
  z.data = v.data;
  return z;
}

void write_vraw(const LatentSeq& z, const std::filesystem::path& path) {
  write_vraw(latent_as_video(z), path);
}

LatentSeq read_vraw_latent(const std::filesystem::path& path, int chunk_len) {
  return video_as_latent(read_vraw(path), chunk_len);
}

void save_learned_prior(const LearnedPrior& p,
                        const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os << "LPRIOR1 " << p.dim << ' ' << p.hidden << " f32 LE\n";
  for (std::int64_t i = 0; i < p.params.size(); ++i)
    put_f32_le(os, float(p.params[i]));
  if (!os) throw IoError("write failed: " + path.string());
}

LearnedPrior load_learned_prior(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path.string());
  std::string header;
  if (!std::getline(is, header)) throw FormatError("missing header line");
  std::istringstream hs(header);
  std::string magic, stype, sendian;
  std::int64_t dim = 0, hidden = 0;
  if (!(hs >> magic >> dim >> hidden >> stype >> sendian) ||
      magic != "LPRIOR1" || stype != "f32" || sendian != "LE")
    throw FormatError("bad learned-prior header: '" + header + "'");
  if (dim < 1 || hidden < 1 || dim > (1 << 20) || hidden > (1 << 20))
    throw FormatError("bad learned-prior dims");
  LearnedPrior p;
  p.dim = int(dim);
  p.hidden = int(hidden);
  p.params = VecXd::Zero(p.param_count());
  std::vector<unsigned char> buf(std::size_t(p.param_count()) * 4);
  is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (is.gcount() != std::streamsize(buf.size()))
    throw FormatError("truncated learned-prior payload");
  for (std::int64_t i = 0; i < p.param_count(); ++i) {
    const float f = get_f32_le(buf.data() + std::size_t(i) * 4);
    if (!std::isfinite(f)) throw FormatError("non-finite parameter");
    p.params[i] = double(f);
  }
  return p;
}

std::vector<std::filesystem::path> export_frames(
    const Video& v, const std::filesystem::path& dir, const std::string& stem) {
  if (v.channels != 1 && v.channels != 3)
    throw ParamError("export_frames: channels must be 1 or 3, got " +
                     std::to_string(v.channels));
  std::filesystem::create_directories(dir);
  const char* ext = v.channels == 1 ? "pgm" : "ppm";
  const char* magic = v.channels == 1 ? "P5" : "P6";
  std::vector<std::filesystem::path> files;
  files.reserve(std::size_t(v.frames));
  for (int t = 0; t < v.frames; ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.%s", stem.c_str(), t, ext);
    files.emplace_back(dir / name);
    std::ofstream os(files.back(), std::ios::binary);
    if (!os) throw IoError("cannot open frame file for write");
    os << magic << "\n" << v.width << " " << v.height << "\n255\n";
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x)
        for (int ch = 0; ch < v.channels; ++ch) {
          double s = v.at(t, y, x, ch);
          s = std::min(1.0, std::max(0.0, s));
          const unsigned char b = (unsigned char)std::floor(s * 255.0 + 0.5);
          os.put(char(b));
        }
    if (!os) throw IoError("frame write failed");
  }
  return files;
}

}  // namespace arflow
