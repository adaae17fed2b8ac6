#pragma once

// Dataset directory format
//
//   <dir>/manifest.txt
//   <dir>/<sample id>/image_0.png   reference, 8-bit RGB
//   <dir>/<sample id>/image_<i>.png context i, 8-bit RGB
//   <dir>/<sample id>/depth.png     reference depth, 16-bit grey, value = metres * 256, 0 = invalid
//
// manifest.txt:
//   DROSET1 <width> <height> <fx> <fy> <cx> <cy>
//   # <key> = <value>                         metadata, any number of lines
//   <image path> <depth path | -> <pose | ->  one line per frame
//
// Paths are relative to <dir>. A pose is 12 numbers, [R|t] row-major, mapping
// reference-camera points into the frame's camera. Frames sharing a parent
// directory form one sample; the first of them is the reference.

#include <png.h>

#include <cerrno>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dro/scene.hpp"

namespace dro {

namespace fs = std::filesystem;

struct Raster {
  int width = 0, height = 0, channels = 0, bit_depth = 8;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  return f;
}

inline void png_warning_silent(png_structp, png_const_charp) {}

// setjmp-based error handling: no C++ object with a non-trivial destructor is
// created between setjmp and the libpng calls.
inline bool png_write_rows(std::FILE* f, int w, int h, int bit_depth, int color_type, png_bytepp rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_silent);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct PngHeader {
  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  std::size_t rowbytes = 0;
};

inline bool png_read_header(png_structp png, png_infop info, PngHeader* hd) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  png_set_expand(png);  // palette -> RGB, grey < 8 bit -> 8 bit, tRNS -> alpha
  png_read_update_info(png, info);
  hd->w = png_get_image_width(png, info);
  hd->h = png_get_image_height(png, info);
  hd->bit_depth = png_get_bit_depth(png, info);
  hd->color_type = png_get_color_type(png, info);
  hd->rowbytes = png_get_rowbytes(png, info);
  return true;
}

inline bool png_read_rows(png_structp png, png_infop info, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, info);
  return true;
}

}  // namespace detail

inline void write_png(const fs::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw FormatError("write_png supports 1 or 3 channels");
  if (r.bit_depth != 8 && r.bit_depth != 16) throw FormatError("write_png supports 8 or 16 bit samples");
  const std::size_t bps = r.bit_depth / 8;
  const std::size_t row = static_cast<std::size_t>(r.width) * r.channels;
  std::vector<unsigned char> buf(row * r.height * bps);
  for (std::size_t k = 0; k < row * r.height; ++k) {
    if (bps == 1) {
      buf[k] = static_cast<unsigned char>(r.samples[k]);
    } else {
      buf[2 * k] = static_cast<unsigned char>(r.samples[k] >> 8);  // PNG is big-endian
      buf[2 * k + 1] = static_cast<unsigned char>(r.samples[k] & 0xff);
    }
  }
  std::vector<png_bytep> rows(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = buf.data() + y * row * bps;
  auto f = detail::open_file(path, "wb");
  const int ct = r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  if (!detail::png_write_rows(f.get(), r.width, r.height, r.bit_depth, ct, rows.data()))
    throw IoError("failed to write PNG " + path.string());
  if (std::fflush(f.get()) != 0) throw IoError("failed to write " + path.string() + ": " + std::strerror(errno));
}

/// Alpha channels are dropped; palette and low-bit grey are expanded.
inline Raster read_png(const fs::path& path) {
  auto f = detail::open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warning_silent);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  detail::PngHeader hd;
  if (!detail::png_read_header(png, info, &hd)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG header: " + path.string());
  }
  std::vector<unsigned char> buf(hd.rowbytes * hd.h);
  std::vector<png_bytep> rows(hd.h);
  for (png_uint_32 y = 0; y < hd.h; ++y) rows[y] = buf.data() + y * hd.rowbytes;
  const bool ok = detail::png_read_rows(png, info, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw IoError("corrupt PNG data: " + path.string());

  int stored = 0, keep = 0;
  switch (hd.color_type) {
    case PNG_COLOR_TYPE_GRAY: stored = keep = 1; break;
    case PNG_COLOR_TYPE_GRAY_ALPHA: stored = 2, keep = 1; break;
    case PNG_COLOR_TYPE_RGB: stored = keep = 3; break;
    case PNG_COLOR_TYPE_RGB_ALPHA: stored = 4, keep = 3; break;
    default: throw FormatError("unsupported PNG colour type in " + path.string());
  }
  Raster r;
  r.width = static_cast<int>(hd.w);
  r.height = static_cast<int>(hd.h);
  r.channels = keep;
  r.bit_depth = hd.bit_depth;
  r.samples.resize(static_cast<std::size_t>(r.width) * r.height * keep);
  const std::size_t bps = hd.bit_depth == 16 ? 2 : 1;
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < keep; ++c) {
        const unsigned char* p = rows[y] + (static_cast<std::size_t>(x) * stored + c) * bps;
        r.samples[(static_cast<std::size_t>(y) * r.width + x) * keep + c] =
            bps == 2 ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : p[0];
      }
  return r;
}

inline void write_image_png(const fs::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) throw FormatError("images must have 1 or 3 channels");
  Raster r{img.width, img.height, img.channels, 8, {}};
  r.samples.resize(img.data.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        r.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = static_cast<std::uint16_t>(
            std::lround(std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0) * 255.0));
  write_png(path, r);
}

/// 3-channel image in [0,1]; grey files are replicated, 16-bit files rescaled.
inline Image read_image_png(const fs::path& path) {
  const Raster r = read_png(path);
  const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(3, r.height, r.width);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = r.channels == 1 ? 0 : c;
        img.at(c, y, x) = static_cast<float>(
            r.samples[(static_cast<std::size_t>(y) * r.width + x) * r.channels + src] / scale);
      }
  return img;
}

inline constexpr double kDepthScale = 256.0;

inline std::uint16_t encode_depth(double metres) {
  if (!(metres > 0)) return 0;
  return static_cast<std::uint16_t>(std::min(std::lround(metres * kDepthScale), 65535L));
}

inline void write_depth_png(const fs::path& path, const Image& depth) {
  if (depth.channels != 1) throw FormatError("depth maps have one channel");
  Raster r{depth.width, depth.height, 1, 16, {}};
  r.samples.resize(depth.data.size());
  for (std::size_t k = 0; k < depth.data.size(); ++k) r.samples[k] = encode_depth(depth.data[k]);
  write_png(path, r);
}

inline Image read_depth_png(const fs::path& path) {
  const Raster r = read_png(path);
  if (r.channels != 1 || r.bit_depth != 16) throw FormatError("depth file is not 16-bit grey: " + path.string());
  Image d(1, r.height, r.width);
  for (std::size_t k = 0; k < r.samples.size(); ++k) d.data[k] = static_cast<float>(r.samples[k] / kDepthScale);
  return d;
}

struct ManifestFrame {
  std::string image;
  std::string depth;  // empty = none
  std::optional<Pose> pose;
};

struct ManifestSample {
  std::string id;
  std::vector<ManifestFrame> frames;
};

struct Manifest {
  Intrinsics K;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<ManifestSample> samples;

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return std::nullopt;
  }
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta)
      if (k == key) {
        v = value;
        return;
      }
    meta.emplace_back(key, value);
  }
  bool has_depth() const {
    for (const auto& s : samples)
      if (s.frames.empty() || s.frames.front().depth.empty()) return false;
    return !samples.empty();
  }
};

inline const char* kManifestMagic = "DROSET1";

inline void write_manifest(const fs::path& dir, const Manifest& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << kManifestMagic << ' ' << m.K.width << ' ' << m.K.height << ' ' << m.K.fx << ' ' << m.K.fy << ' ' << m.K.cx
     << ' ' << m.K.cy << '\n';
  for (const auto& [k, v] : m.meta) os << "# " << k << " = " << v << '\n';
  for (const auto& s : m.samples)
    for (const auto& f : s.frames)
      os << f.image << ' ' << (f.depth.empty() ? "-" : f.depth) << ' ' << (f.pose ? format_pose(*f.pose) : "-")
         << '\n';
  const fs::path path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << os.str();
  if (!out) throw IoError("failed writing " + path.string());
}

inline Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  Manifest m;
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    return FormatError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  if (!std::getline(in, line)) throw bad("empty manifest");
  ++lineno;
  {
    std::istringstream is(line);
    std::string magic;
    if (!(is >> magic >> m.K.width >> m.K.height >> m.K.fx >> m.K.fy >> m.K.cx >> m.K.cy) || magic != kManifestMagic)
      throw bad("bad header");
    try {
      m.K.validate();
    } catch (const DomainError& e) {
      throw bad(e.what());
    }
  }
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      m.meta.emplace_back(trim(line.substr(1, eq - 1)), trim(line.substr(eq + 1)));
      continue;
    }
    std::istringstream is(line);
    ManifestFrame f;
    std::string depth, first;
    if (!(is >> f.image >> depth >> first)) throw bad("frame line needs image, depth and pose fields");
    if (depth != "-") f.depth = depth;
    if (first != "-") {
      std::vector<double> v;
      try {
        v.push_back(std::stod(first));
      } catch (const std::exception&) {
        throw bad("bad pose value '" + first + "'");
      }
      double x;
      while (is >> x) v.push_back(x);
      if (!is.eof()) throw bad("bad pose value");
      if (v.size() != 12) throw bad("pose needs 12 numbers, got " + std::to_string(v.size()));
      f.pose = pose_from_row_major(v);
    } else {
      std::string extra;
      if (is >> extra) throw bad("unexpected trailing field '" + extra + "'");
    }
    const std::string id = fs::path(f.image).parent_path().string();
    auto it = index.find(id);
    if (it == index.end()) {
      index[id] = m.samples.size();
      m.samples.push_back({id, {}});
      it = index.find(id);
    } else if (it->second + 1 != m.samples.size()) {
      throw bad("frames of sample '" + id + "' are not contiguous");
    }
    m.samples[it->second].frames.push_back(std::move(f));
  }
  for (const auto& s : m.samples)
    if (s.frames.size() < 2) throw FormatError(path.string() + ": sample '" + s.id + "' has no context frame");
  return m;
}

/// Loads one sample. Ground-truth poses are present when every context frame
/// carries one; depth when the reference frame names a depth file.
inline SceneSample load_sample(const fs::path& dir, const Manifest& m, std::size_t index) {
  const auto& ms = m.samples.at(index);
  SceneSample s;
  s.id = ms.id;
  s.K = m.K;
  auto load_img = [&](const std::string& rel) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) throw IoError("missing file " + p.string());
    Image img = read_image_png(p);
    if (img.width != m.K.width || img.height != m.K.height)
      throw FormatError(p.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", manifest says " + std::to_string(m.K.width) + "x" + std::to_string(m.K.height));
    return img;
  };
  s.reference = load_img(ms.frames[0].image);
  if (!ms.frames[0].depth.empty()) {
    const fs::path p = dir / ms.frames[0].depth;
    if (!fs::exists(p)) throw IoError("missing file " + p.string());
    s.gt_depth = read_depth_png(p);
    if (s.gt_depth->width != m.K.width || s.gt_depth->height != m.K.height)
      throw FormatError(p.string() + " extents differ from the manifest");
  }
  bool all_poses = true;
  std::vector<Pose> poses;
  for (std::size_t k = 1; k < ms.frames.size(); ++k) {
    s.contexts.push_back(load_img(ms.frames[k].image));
    if (ms.frames[k].pose)
      poses.push_back(*ms.frames[k].pose);
    else
      all_poses = false;
  }
  if (all_poses) s.gt_poses = poses;
  s.validate();
  return s;
}

/// Random-access reader over a dataset directory.
class SequenceReader {
 public:
  explicit SequenceReader(fs::path dir) : dir_(std::move(dir)), manifest_(read_manifest(dir_)) {}
  std::size_t size() const { return manifest_.samples.size(); }
  SceneSample operator[](std::size_t i) const { return load_sample(dir_, manifest_, i); }
  const Manifest& manifest() const { return manifest_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  Manifest manifest_;
};

inline SequenceReader load_sequence(const fs::path& dir) { return SequenceReader(dir); }

/// Writes the sample's files under dir/<id>/ and appends its frames to `m`.
/// Context frames carry the ground-truth pose when known; the reference
/// frame carries the identity.
inline void save_sample(const SceneSample& s, const fs::path& dir, Manifest& m) {
  s.validate();
  if (s.id.empty() || s.id.find('/') != std::string::npos || s.id.find(' ') != std::string::npos)
    throw FormatError("sample id must be a plain directory name: '" + s.id + "'");
  std::error_code ec;
  fs::create_directories(dir / s.id, ec);
  if (ec) throw IoError("cannot create " + (dir / s.id).string() + ": " + ec.message());
  ManifestSample ms{s.id, {}};
  ManifestFrame ref{s.id + "/image_0.png", {}, {}};
  write_image_png(dir / ref.image, s.reference);
  if (s.gt_depth) {
    ref.depth = s.id + "/depth.png";
    write_depth_png(dir / ref.depth, *s.gt_depth);
  }
  if (s.gt_poses) ref.pose = Pose::identity();
  ms.frames.push_back(ref);
  for (std::size_t i = 0; i < s.contexts.size(); ++i) {
    ManifestFrame f{s.id + "/image_" + std::to_string(i + 1) + ".png", {}, {}};
    write_image_png(dir / f.image, s.contexts[i]);
    if (s.gt_poses) f.pose = (*s.gt_poses)[i];
    ms.frames.push_back(f);
  }
  m.samples.push_back(std::move(ms));
}

}  // namespace dro
