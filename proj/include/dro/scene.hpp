#pragma once

// Synthetic multi-view scenes with exact ground truth.
//
// The texture is a procedural function of reference-image pixel coordinates,
// painted onto the scene geometry by projection from the reference camera.
// Every view (the reference included) is rendered by casting rays through
// 2x2 supersampled pixel positions, intersecting the analytic geometry, and
// reading the texture where the hit point lands in the reference image. The
// texture therefore carries no monocular depth cue.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dro/geometry.hpp"

namespace dro {

/// Float image, CxHxW row-major, values in [0,1] for colour images.
struct Image {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}
  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_extent(const Image& o) const { return height == o.height && width == o.width; }
};

template <typename T>
Tensor<T> to_tensor(const Image& img) {
  return Tensor<T>::from({img.channels, img.height, img.width}, std::vector<T>(img.data.begin(), img.data.end()));
}

template <typename T>
Image to_image(const Tensor<T>& t) {
  if (t.rank() != 3) throw DimensionError("to_image expects CxHxW");
  Image img(t.dim(0), t.dim(1), t.dim(2));
  std::copy(t.data().begin(), t.data().end(), img.data.begin());
  return img;
}

struct SceneSample {
  std::string id;
  Image reference;
  std::vector<Image> contexts;
  Intrinsics K;
  std::optional<Image> gt_depth;         // 1xHxW metres, 0 = invalid
  std::optional<std::vector<Pose>> gt_poses;  // context-from-reference, one per context

  void validate() const {
    if (reference.channels != 3) throw FormatError("reference image must have 3 channels");
    for (const auto& c : contexts)
      if (!c.same_extent(reference) || c.channels != 3) throw FormatError("context image extent mismatch in " + id);
    if (gt_depth && !gt_depth->same_extent(reference)) throw FormatError("depth extent mismatch in " + id);
    if (gt_poses && gt_poses->size() != contexts.size()) throw FormatError("pose count mismatch in " + id);
    if (reference.width != K.width || reference.height != K.height)
      throw FormatError("intrinsics extents do not match images in " + id);
  }
};

enum class GeometryMode { fronto_parallel, tilted_plane, two_plane_step, sphere_on_plane, mixed };

inline std::string to_string(GeometryMode g) {
  switch (g) {
    case GeometryMode::fronto_parallel: return "fronto-parallel";
    case GeometryMode::tilted_plane: return "tilted-plane";
    case GeometryMode::two_plane_step: return "two-plane-step";
    case GeometryMode::sphere_on_plane: return "sphere-on-plane";
    case GeometryMode::mixed: return "mixed";
  }
  return "?";
}

inline GeometryMode parse_geometry(const std::string& s) {
  for (auto g : {GeometryMode::fronto_parallel, GeometryMode::tilted_plane, GeometryMode::two_plane_step,
                 GeometryMode::sphere_on_plane, GeometryMode::mixed})
    if (to_string(g) == s) return g;
  throw ConfigError("unknown geometry mode: " + s);
}

struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64, height = 64;
  double focal = 64.0;  // pixels, fx = fy
  GeometryMode geometry = GeometryMode::mixed;
  int views = 1;  // context images per sample
  double max_rotation_deg = 5.0;
  double min_translation = 0.1, max_translation = 0.2;  // metres, magnitude
  double depth_min = 1.0, depth_max = 3.0;
  double noise_sigma = 0.0;  // optional Gaussian pixel noise (before quantization)
  double min_overlap = 0.8;
  double texture_scale = 1.0;  // octave periods are 24, 12, 6, 3 px times this
  bool lateral = false;  // translation direction restricted to the image plane

  Intrinsics intrinsics() const {
    return {focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  }
  void validate() const {
    if (width < 8 || height < 8 || width % 8 || height % 8) throw ConfigError("scene extents must be multiples of 8");
    if (!(focal > 0)) throw ConfigError("focal length must be positive");
    if (views < 1) throw ConfigError("views must be >= 1");
    if (!(depth_min > 0 && depth_max > depth_min)) throw ConfigError("invalid scene depth range");
    if (max_rotation_deg < 0 || min_translation < 0 || max_translation < min_translation)
      throw ConfigError("invalid motion bounds");
    if (max_rotation_deg > 5.0 || max_translation > 0.2)
      throw ConfigError("motion bounds exceed rotation 5 deg / translation 0.2 m");
  }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Multi-octave value noise plus a linear colour gradient, defined on the
/// whole plane of reference pixel coordinates.
struct Texture {
  std::uint64_t key = 0;
  double scale = 1.0;  // multiplies every octave period
  std::array<double, 3> base{}, grad_u{}, grad_v{};
  static constexpr std::array<double, 4> periods{24.0, 12.0, 6.0, 3.0};
  static constexpr std::array<double, 4> amps{0.5, 0.3, 0.2, 0.12};

  double lattice(int octave, int ch, std::int64_t ix, std::int64_t iy) const {
    std::uint64_t h = mix64(key ^ mix64(static_cast<std::uint64_t>(octave * 3 + ch)));
    h = mix64(h ^ static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(iy) * 0x85157af5ULL);
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0;
  }

  double noise(int octave, int ch, double u, double v) const {
    const double x = u / (scale * periods[octave]), y = v / (scale * periods[octave]);
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    double tx = x - fx, ty = y - fy;
    tx = tx * tx * (3 - 2 * tx);
    ty = ty * ty * (3 - 2 * ty);
    const double a = lattice(octave, ch, ix, iy), b = lattice(octave, ch, ix + 1, iy);
    const double c = lattice(octave, ch, ix, iy + 1), d = lattice(octave, ch, ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  }

  std::array<double, 3> color(double u, double v) const {
    std::array<double, 3> out{};
    for (int ch = 0; ch < 3; ++ch) {
      double s = base[ch] + grad_u[ch] * u + grad_v[ch] * v;
      for (int o = 0; o < 4; ++o) s += amps[o] * noise(o, ch, u, v);
      out[ch] = s;
    }
    return out;
  }
};

/// Analytic scene geometry in the reference camera frame.
struct SceneGeometry {
  GeometryMode mode = GeometryMode::fronto_parallel;
  // plane n.X = offset (background plane for every mode)
  Eigen::Vector3d normal{0, 0, 1};
  double offset = 2.0;
  // two-plane step: near plane z = near_depth, restricted to dir.(X/Z) < edge in normalized coords
  double near_depth = 1.0;
  Eigen::Vector2d step_dir{1, 0};
  double step_edge = 0.0;
  // sphere
  Eigen::Vector3d center{0, 0, 2};
  double radius = 0.3;

  /// Distance along the ray (origin o, direction d) to the first hit; negative on miss.
  double intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
    double best = -1;
    auto consider = [&](double s) {
      if (s > 1e-9 && (best < 0 || s < best)) best = s;
    };
    const double nd = normal.dot(d);
    if (std::abs(nd) > 1e-12) consider((offset - normal.dot(o)) / nd);
    if (mode == GeometryMode::two_plane_step && std::abs(d.z()) > 1e-12) {
      const double s = (near_depth - o.z()) / d.z();
      const Eigen::Vector3d p = o + s * d;
      if (s > 1e-9 && step_dir.dot(Eigen::Vector2d(p.x(), p.y()) / near_depth) < step_edge) consider(s);
    }
    if (mode == GeometryMode::sphere_on_plane) {
      const Eigen::Vector3d oc = o - center;
      const double b = oc.dot(d), c = oc.squaredNorm() - radius * radius, a = d.squaredNorm();
      const double disc = b * b - a * c;
      if (disc >= 0) {
        const double r = std::sqrt(disc);
        consider((-b - r) / a);
      }
    }
    return best;
  }
};

}  // namespace detail

/// Renders one view. `pose` maps reference-frame points into the view's frame.
inline Image render_view(const detail::SceneGeometry& geo, const detail::Texture& tex, const Pose& pose,
                         const Intrinsics& K) {
  Image img(3, K.height, K.width);
  const Eigen::Matrix3d Rt = pose.R.transpose();
  const Eigen::Vector3d origin = -(Rt * pose.t);
  static constexpr double offs[2] = {-0.25, 0.25};
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      std::array<double, 3> acc{};
      for (double oy : offs)
        for (double ox : offs) {
          const Eigen::Vector3d dir = Rt * Eigen::Vector3d((x + ox - K.cx) / K.fx, (y + oy - K.cy) / K.fy, 1.0);
          const double s = geo.intersect(origin, dir);
          std::array<double, 3> c{0.5, 0.5, 0.5};
          if (s > 0) {
            const Eigen::Vector3d X = origin + s * dir;
            const auto pr = project(X, K);
            c = tex.color(pr.pixel.x(), pr.pixel.y());
          }
          for (int ch = 0; ch < 3; ++ch) acc[ch] += 0.25 * c[ch];
        }
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = static_cast<float>(acc[ch]);
    }
  return img;
}

/// Reference-camera depth at pixel centres (metres, 0 where the ray misses).
inline Image render_depth(const detail::SceneGeometry& geo, const Intrinsics& K) {
  Image d(1, K.height, K.width);
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d dir((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const double s = geo.intersect(Eigen::Vector3d::Zero(), dir);
      d.at(0, y, x) = s > 0 ? static_cast<float>(s) : 0.f;
    }
  return d;
}

inline void quantize_8bit(Image& img) {
  for (auto& v : img.data) v = static_cast<float>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0)) / 255.f;
}

/// Fraction of reference pixels whose ground-truth reprojection lands in front
/// of the view and inside its frame.
inline double view_overlap(const Image& depth, const Pose& pose, const Intrinsics& K) {
  std::size_t in = 0, total = 0;
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      const double d = depth.at(0, y, x);
      if (!(d > 0)) continue;
      ++total;
      const auto pr = project(transform(pose, backproject({double(x), double(y)}, d, K)), K);
      if (pr.in_front && pr.pixel.x() >= 0 && pr.pixel.x() <= K.width - 1 && pr.pixel.y() >= 0 &&
          pr.pixel.y() <= K.height - 1)
        ++in;
    }
  return total ? static_cast<double>(in) / total : 0.0;
}

namespace detail {

inline SceneGeometry sample_geometry(GeometryMode mode, const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto lerp = [&](double a, double b) { return a + (b - a) * U(rng); };
  const double lo = spec.depth_min, hi = spec.depth_max;
  SceneGeometry g;
  g.mode = mode;
  switch (mode) {
    case GeometryMode::fronto_parallel:
      g.normal = {0, 0, 1};
      g.offset = lerp(lo, hi);
      break;
    case GeometryMode::tilted_plane: {
      const double tilt = lerp(15.0, 50.0) * M_PI / 180.0, az = lerp(0.0, 2 * M_PI);
      g.normal = {std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az), std::cos(tilt)};
      g.offset = lerp(lo, hi) * g.normal.z();  // passes through (0,0,d0)
      break;
    }
    case GeometryMode::two_plane_step: {
      const double far = lerp(lo + 0.3 * (hi - lo), hi);
      g.normal = {0, 0, 1};
      g.offset = far;
      g.near_depth = lerp(lo, std::max(lo, far / 1.3));
      const double az = lerp(0.0, 2 * M_PI);
      g.step_dir = {std::cos(az), std::sin(az)};
      g.step_edge = lerp(-0.2, 0.2);
      break;
    }
    case GeometryMode::sphere_on_plane: {
      const double far = lerp(lo + 0.5 * (hi - lo), hi);
      g.normal = {0, 0, 1};
      g.offset = far;
      const double zc = lerp(lo + 0.15 * (hi - lo), 0.5 * (lo + far));
      g.radius = std::min(zc - lo, far - zc) * lerp(0.5, 0.95);
      const double half_w = (spec.width / 2.0) / spec.focal, half_h = (spec.height / 2.0) / spec.focal;
      g.center = {lerp(-0.5, 0.5) * half_w * zc, lerp(-0.5, 0.5) * half_h * zc, zc};
      break;
    }
    case GeometryMode::mixed: break;
  }
  return g;
}

inline Texture sample_texture(std::mt19937_64& rng, const SceneSpec& spec) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Texture t;
  t.key = rng();
  t.scale = spec.texture_scale;
  for (int ch = 0; ch < 3; ++ch) {
    t.base[ch] = 0.3 + 0.4 * U(rng);
    t.grad_u[ch] = (U(rng) - 0.5) * 0.3 / spec.width;
    t.grad_v[ch] = (U(rng) - 0.5) * 0.3 / spec.height;
    t.base[ch] -= t.grad_u[ch] * spec.width / 2 + t.grad_v[ch] * spec.height / 2;
  }
  return t;
}

inline Pose sample_motion(const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  auto unit = [&]() {
    Eigen::Vector3d v;
    do v = {N(rng), N(rng), N(rng)};
    while (v.norm() < 1e-6);
    return Eigen::Vector3d(v.normalized());
  };
  const double angle = spec.max_rotation_deg * M_PI / 180.0 * U(rng);
  const double mag = spec.min_translation + (spec.max_translation - spec.min_translation) * U(rng);
  Vector6d xi;
  xi.head<3>() = unit() * angle;
  xi.tail<3>().setZero();
  Pose p = se3_exp(xi);
  Eigen::Vector3d dir = unit();
  if (spec.lateral) {
    const double a = 2 * M_PI * U(rng);
    dir = {std::cos(a), std::sin(a), 0.0};
  }
  p.t = dir * mag;
  return p;
}

}  // namespace detail

/// Deterministic in (spec, index): every sample draws from its own stream
/// derived from the master seed.
inline SceneSample generate_scene(const SceneSpec& spec, std::uint64_t index = 0) {
  spec.validate();
  std::mt19937_64 rng(detail::mix64(spec.seed * 0x9e3779b97f4a7c15ULL + index + 1));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Intrinsics K = spec.intrinsics();

  GeometryMode mode = spec.geometry;
  if (mode == GeometryMode::mixed) mode = static_cast<GeometryMode>(rng() % 4);

  detail::SceneGeometry geo;
  Image depth;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    geo = detail::sample_geometry(mode, spec, rng);
    depth = render_depth(geo, K);
    ok = true;
    for (float d : depth.data)
      if (!(d >= spec.depth_min && d <= spec.depth_max)) ok = false;
  }
  if (!ok) throw GenerationError("could not sample geometry within the depth range after 100 attempts");

  const auto tex = detail::sample_texture(rng, spec);
  SceneSample s;
  char id[32];
  std::snprintf(id, sizeof id, "s%05llu", static_cast<unsigned long long>(index));
  s.id = id;
  s.K = K;
  s.gt_depth = depth;
  s.gt_poses = std::vector<Pose>{};
  for (int v = 0; v < spec.views; ++v) {
    Pose pose;
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      pose = detail::sample_motion(spec, rng);
      found = view_overlap(depth, pose, K) >= spec.min_overlap;
    }
    if (!found) throw GenerationError("view overlap below " + std::to_string(spec.min_overlap) + " after 100 resamples");
    s.gt_poses->push_back(pose);
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  auto finish = [&](Image img) {
    if (spec.noise_sigma > 0)
      for (auto& x : img.data) x = static_cast<float>(x + noise(rng));
    quantize_8bit(img);
    return img;
  };
  s.reference = finish(render_view(geo, tex, Pose::identity(), K));
  for (const auto& p : *s.gt_poses) s.contexts.push_back(finish(render_view(geo, tex, p, K)));
  return s;
}

}  // namespace dro

namespace dro {

/// One of the 8 symmetries of the square (bit 0: flip x, bit 1: flip y,
/// bit 2: transpose, applied in that order) with poses conjugated to match.
/// Transposition needs a square image with fx == fy and cx == cy.
inline SceneSample apply_symmetry(const SceneSample& s, int code) {
  const Intrinsics& K = s.K;
  const bool fx = code & 1, fy = code & 2, tr = code & 4;
  if (tr && (K.width != K.height || K.fx != K.fy || K.cx != K.cy))
    throw ConfigError("transpose symmetry needs square, isotropic intrinsics");
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  if (fx) F(0, 0) = -1;
  if (fy) F(1, 1) = -1;
  if (tr) F = (Eigen::Matrix3d() << 0, 1, 0, 1, 0, 0, 0, 0, 1).finished() * F;
  const double cx = fx ? K.width - 1 - K.cx : K.cx, cy = fy ? K.height - 1 - K.cy : K.cy;
  auto map_image = [&](const Image& in) {
    Image out(in.channels, tr ? in.width : in.height, tr ? in.height : in.width);
    for (int c = 0; c < in.channels; ++c)
      for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
          int u = fx ? in.width - 1 - x : x, v = fy ? in.height - 1 - y : y;
          if (tr) std::swap(u, v);
          out.at(c, v, u) = in.at(c, y, x);
        }
    return out;
  };
  SceneSample o;
  o.id = s.id;
  o.K = {tr ? K.fy : K.fx, tr ? K.fx : K.fy, tr ? cy : cx, tr ? cx : cy, tr ? K.height : K.width,
         tr ? K.width : K.height};
  o.reference = map_image(s.reference);
  for (const auto& c : s.contexts) o.contexts.push_back(map_image(c));
  if (s.gt_depth) o.gt_depth = map_image(*s.gt_depth);
  if (s.gt_poses) {
    o.gt_poses = std::vector<Pose>{};
    for (const auto& p : *s.gt_poses) {
      Pose q;
      q.R = F * p.R * F.transpose();
      q.t = F * p.t;
      o.gt_poses->push_back(q);
    }
  }
  return o;
}

/// Permutes colour channels (perm[c] = source channel) and optionally inverts intensities.
inline void remap_colours(SceneSample& s, const std::array<int, 3>& perm, bool invert) {
  auto apply = [&](Image& img) {
    const Image src = img;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          const float v = src.at(perm[c], y, x);
          img.at(c, y, x) = invert ? 1.f - v : v;
        }
  };
  apply(s.reference);
  for (auto& c : s.contexts) apply(c);
}

}  // namespace dro
