#pragma once

// Pinhole camera model, SE(3) pose algebra and dense warping.
//
// A pose T maps points from the reference camera frame into another camera's
// frame: X_i = R * X_0 + t. Tangent vectors are ordered (omega, rho): rotation
// vector first, then the translational part of the se(3) exponential.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dro/dual.hpp"
#include "dro/ops.hpp"

namespace dro {

inline constexpr double kZEps = 1e-5;  // metres; points closer than this are "behind"

using Vector6d = Eigen::Matrix<double, 6, 1>;

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw DomainError("intrinsics need positive focal lengths");
    if (width < 1 || height < 1) throw DomainError("intrinsics need positive image extents");
  }
  /// Intrinsics for a map downsampled by `factor`. Pixel i of the downsampled
  /// map is the centre of the original's pixels [factor*i, factor*i + factor).
  Intrinsics scaled(int factor) const {
    if (factor < 1 || width % factor || height % factor)
      throw DimensionError("image extents " + std::to_string(width) + "x" + std::to_string(height) +
                           " not divisible by " + std::to_string(factor));
    return {fx / factor, fy / factor, (cx + 0.5) / factor - 0.5, (cy + 0.5) / factor - 0.5, width / factor,
            height / factor};
  }
};

struct DepthBounds {
  double d_min = 0.1;
  double d_max = 100.0;
};

struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int compositions = 0;  // since last re-orthonormalization

  static Pose identity() { return {}; }
};

struct Projection {
  Eigen::Vector2d pixel;
  bool in_front;
};

inline Projection project(const Eigen::Vector3d& p, const Intrinsics& K) {
  const bool front = p.z() > kZEps;
  return {{K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy}, front};
}

inline Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const Intrinsics& K) {
  if (!(depth > 0)) throw DomainError("backproject needs positive depth");
  return {(pixel.x() - K.cx) / K.fx * depth, (pixel.y() - K.cy) / K.fy * depth, depth};
}

inline Eigen::Vector3d transform(const Pose& T, const Eigen::Vector3d& p) { return T.R * p + T.t; }

inline Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& R) {
  Eigen::Vector3d r0 = R.row(0).normalized();
  Eigen::Vector3d r1 = (Eigen::Vector3d(R.row(1)) - r0.dot(R.row(1)) * r0).normalized();
  Eigen::Vector3d r2 = r0.cross(r1);
  Eigen::Matrix3d out;
  out.row(0) = r0;
  out.row(1) = r1;
  out.row(2) = r2;
  return out;
}

inline constexpr int kOrthonormalizeEvery = 64;

/// a ∘ b: apply b first, then a. Rotation is re-orthonormalized (Gram-Schmidt)
/// once 64 compositions have accumulated.
inline Pose compose(const Pose& a, const Pose& b) {
  Pose r;
  r.R = a.R * b.R;
  r.t = a.R * b.t + a.t;
  r.compositions = std::max(a.compositions, b.compositions) + 1;
  if (r.compositions >= kOrthonormalizeEvery) {
    r.R = orthonormalize(r.R);
    r.compositions = 0;
  }
  return r;
}

inline Pose inverse(const Pose& T) {
  Pose r;
  r.R = T.R.transpose();
  r.t = -(r.R * T.t);
  r.compositions = T.compositions;
  return r;
}

/// SE(3) exponential on any scalar type (plain or dual). Writes R row-major
/// into out[0..8] and t into out[9..11]. Below |omega| = 1e-3 the Rodrigues
/// coefficients come from their Taylor series in theta^2.
template <typename S>
void se3_exp_raw(const S xi[6], S out[12]) {
  const S wx = xi[0], wy = xi[1], wz = xi[2];
  const S th2 = wx * wx + wy * wy + wz * wz;
  S A, B, C;
  if (value_of(th2) < 1e-6) {
    const S th4 = th2 * th2;
    A = S(1) - th2 / S(6) + th4 / S(120);
    B = S(0.5) - th2 / S(24) + th4 / S(720);
    C = S(1) / S(6) - th2 / S(120) + th4 / S(5040);
  } else {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const S th = sqrt(th2);
    A = sin(th) / th;
    B = (S(1) - cos(th)) / th2;
    C = (S(1) - A) / th2;
  }
  // W = [omega]x, W^2 = omega omega^T - theta^2 I
  const S W[9] = {S(0), -wz, wy, wz, S(0), -wx, -wy, wx, S(0)};
  const S w[3] = {wx, wy, wz};
  S R[9], V[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const S eye = i == j ? S(1) : S(0);
      const S W2 = w[i] * w[j] - (i == j ? th2 : S(0));
      R[i * 3 + j] = eye + A * W[i * 3 + j] + B * W2;
      V[i * 3 + j] = eye + B * W[i * 3 + j] + C * W2;
    }
  for (int k = 0; k < 9; ++k) out[k] = R[k];
  for (int i = 0; i < 3; ++i) out[9 + i] = V[i * 3] * xi[3] + V[i * 3 + 1] * xi[4] + V[i * 3 + 2] * xi[5];
}

inline Pose se3_exp(const Vector6d& xi) {
  double raw[12];
  se3_exp_raw(xi.data(), raw);
  Pose p;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) p.R(i, j) = raw[i * 3 + j];
    p.t(i) = raw[9 + i];
  }
  return p;
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  const Eigen::Vector3d vee(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = 0.5 * vee.norm();
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(s, c);
  if (theta < 1e-3) {
    // theta / (2 sin theta) ~ 1/2 + theta^2/12
    return (0.5 + theta * theta / 12.0) * vee;
  }
  if (theta > M_PI - 1e-3) {
    // Near pi: axis from the symmetric part, sign from the skew part.
    const Eigen::Matrix3d B = 0.5 * (R + Eigen::Matrix3d::Identity());
    int k;
    B.diagonal().maxCoeff(&k);
    Eigen::Vector3d axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(vee) < 0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * s) * vee;
}

inline Vector6d se3_log(const Pose& T) {
  const Eigen::Vector3d w = so3_log(T.R);
  const double th2 = w.squaredNorm();
  Eigen::Matrix3d W;
  W << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  double coef;  // (1 - A / (2B)) / theta^2
  if (th2 < 1e-6) {
    coef = 1.0 / 12.0 + th2 / 720.0;
  } else {
    const double th = std::sqrt(th2);
    const double A = std::sin(th) / th, B = (1 - std::cos(th)) / th2;
    coef = (1.0 - A / (2.0 * B)) / th2;
  }
  const Eigen::Matrix3d Vinv = Eigen::Matrix3d::Identity() - 0.5 * W + coef * W * W;
  Vector6d xi;
  xi.head<3>() = w;
  xi.tail<3>() = Vinv * T.t;
  return xi;
}

/// "r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2"
inline std::string format_pose(const Pose& T) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) os << T.R(i, j) << ' ';
    os << T.t(i) << (i < 2 ? " " : "");
  }
  return os.str();
}

inline Pose pose_from_row_major(const std::vector<double>& v) {
  if (v.size() != 12) throw FormatError("pose needs 12 numbers, got " + std::to_string(v.size()));
  Pose T;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) T.R(i, j) = v[i * 4 + j];
    T.t(i) = v[i * 4 + 3];
  }
  return T;
}

/// Differentiable SE(3) exponential: xi [6] -> [12] (R row-major, then t).
template <typename T>
Tensor<T> se3_exp(const Tensor<T>& xi) {
  if (xi.numel() != 6) throw DimensionError("se3_exp expects 6 values, got " + shape_str(xi.shape()));
  using D = Dual<T, 6>;
  D in[6], res[12];
  for (int i = 0; i < 6; ++i) in[i] = D::variable(xi[i], i);
  se3_exp_raw(in, res);
  auto jac = std::make_shared<std::array<T, 72>>();
  auto out = detail::make_result<T>({12}, "se3_exp", {&xi});
  for (int k = 0; k < 12; ++k) {
    out->value[k] = res[k].v;
    for (int i = 0; i < 6; ++i) (*jac)[k * 6 + i] = res[k].d[i];
  }
  detail::check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [jac](Node<T>& n) {
      T* g = detail::parent_grad(n, 0);
      if (!g) return;
      for (int k = 0; k < 12; ++k)
        for (int i = 0; i < 6; ++i) g[i] += n.grad[k] * (*jac)[k * 6 + i];
    };
  }
  return Tensor<T>(out);
}

/// Rigid transform as a constant [12] tensor (R row-major, then t).
template <typename T>
Tensor<T> pose_tensor(const Pose& P) {
  std::vector<T> v(12);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) v[i * 3 + j] = static_cast<T>(P.R(i, j));
    v[9 + i] = static_cast<T>(P.t(i));
  }
  return Tensor<T>::from({12}, std::move(v));
}

template <typename T>
Pose pose_from_tensor(const Tensor<T>& rt) {
  if (rt.numel() != 12) throw DimensionError("pose tensor needs 12 values");
  Pose P;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) P.R(i, j) = static_cast<double>(rt[i * 3 + j]);
    P.t(i) = static_cast<double>(rt[9 + i]);
  }
  return P;
}

/// Per-pixel location in the target view of every reference pixel lifted with
/// `depth` (1xHxW) and moved by `rt` ([12], R then t). Returns coords
/// (2xHxW, x then y) and a constant validity mask (in front of the target
/// camera and inside its frame). Under the identity transform the coordinates
/// reproduce the pixel grid exactly. `in_front`, when given, receives the
/// mask of pixels landing in front of the camera regardless of the frame.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> warp_coords(const Tensor<T>& depth, const Tensor<T>& rt, const Intrinsics& K,
                                            Tensor<T>* in_front = nullptr) {
  if (depth.rank() != 3 || depth.dim(0) != 1)
    throw DimensionError("warp_coords expects a 1xHxW depth map, got " + shape_str(depth.shape()));
  if (depth.dim(1) != K.height || depth.dim(2) != K.width)
    throw DimensionError("depth map " + shape_str(depth.shape()) + " does not match intrinsics extents " +
                         std::to_string(K.height) + "x" + std::to_string(K.width));
  if (rt.numel() != 12) throw DimensionError("warp_coords expects a [12] rigid transform");
  const int h = depth.dim(1), w = depth.dim(2);
  const std::size_t np = static_cast<std::size_t>(h) * w;
  const auto& dv = depth.node().value;
  const auto& P = rt.node().value;
  auto out = detail::make_result<T>({2, h, w}, "warp_coords", {&depth, &rt});
  auto valid = Tensor<T>::zeros({1, h, w});
  auto front = std::make_shared<std::vector<char>>(np, 0);
  const T fx = static_cast<T>(K.fx), fy = static_cast<T>(K.fy);
  const T cx = static_cast<T>(K.cx), cy = static_cast<T>(K.cy);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const std::size_t k = static_cast<std::size_t>(v) * w + u;
      const T d = dv[k];
      if (!(d > T(0))) throw DomainError("warp_coords needs strictly positive depth");
      const T xn = (T(u) - cx) / fx, yn = (T(v) - cy) / fy, inv = T(1) / d;
      const T px = P[0] * xn + P[1] * yn + P[2] + P[9] * inv;
      const T py = P[3] * xn + P[4] * yn + P[5] + P[10] * inv;
      const T pz = P[6] * xn + P[7] * yn + P[8] + P[11] * inv;
      if (!(d * pz > T(kZEps))) {
        out->value[k] = T(-1);
        out->value[np + k] = T(-1);
        continue;
      }
      (*front)[k] = 1;
      const T uu = T(u) + fx * (px / pz - xn);
      const T vv = T(v) + fy * (py / pz - yn);
      out->value[k] = uu;
      out->value[np + k] = vv;
      if (uu >= T(0) && uu <= T(w - 1) && vv >= T(0) && vv <= T(h - 1)) valid.mutable_data()[k] = T(1);
    }
  detail::check_finite(*out);
  if (in_front) {
    *in_front = Tensor<T>::zeros({1, h, w});
    for (std::size_t k = 0; k < np; ++k) in_front->mutable_data()[k] = (*front)[k] ? T(1) : T(0);
  }
  if (out->requires_grad) {
    out->backward_fn = [front, h, w, np, fx, fy, cx, cy](Node<T>& n) {
      T* gd = detail::parent_grad(n, 0);
      T* gp = detail::parent_grad(n, 1);
      const auto& dv = n.parents[0]->value;
      const auto& P = n.parents[1]->value;
      T acc[12] = {};
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const std::size_t k = static_cast<std::size_t>(v) * w + u;
          if (!(*front)[k]) continue;
          const T gu = n.grad[k], gv = n.grad[np + k];
          if (gu == T(0) && gv == T(0)) continue;
          const T d = dv[k];
          const T xn = (T(u) - cx) / fx, yn = (T(v) - cy) / fy, inv = T(1) / d;
          const T px = P[0] * xn + P[1] * yn + P[2] + P[9] * inv;
          const T py = P[3] * xn + P[4] * yn + P[5] + P[10] * inv;
          const T pz = P[6] * xn + P[7] * yn + P[8] + P[11] * inv;
          const T iz = T(1) / pz;
          const T g0 = gu * fx * iz;
          const T g1 = gv * fy * iz;
          const T g2 = -(gu * fx * px + gv * fy * py) * iz * iz;
          if (gd) gd[k] += (g0 * P[9] + g1 * P[10] + g2 * P[11]) * (-inv * inv);
          if (gp) {
            const T q[3] = {xn, yn, T(1)};
            const T gpt[3] = {g0, g1, g2};
            for (int i = 0; i < 3; ++i) {
              for (int j = 0; j < 3; ++j) acc[i * 3 + j] += gpt[i] * q[j];
              acc[9 + i] += gpt[i] * inv;
            }
          }
        }
      if (gp)
        for (int i = 0; i < 12; ++i) gp[i] += acc[i];
    };
  }
  return {Tensor<T>(out), valid};
}

}  // namespace dro
