#pragma once

// Bilinear sampling at arbitrary pixel locations, bilinear resizing and the
// 3x3 mean filter used by SSIM.

#include <cmath>
#include <utility>

#include "dro/ops.hpp"

namespace dro {

/// Samples `map` (CxHxW) at `coords` (2xH'xW', channel 0 = x/column, channel 1 =
/// y/row). Coordinates are clamped to the image border before interpolation;
/// `valid` (1xH'xW', constant) is 1 where the unclamped location lies inside
/// [0,W-1]x[0,H-1]. Differentiable w.r.t. map and coords (zero coordinate
/// gradient where clamping is active).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> bilinear_sample(const Tensor<T>& map, const Tensor<T>& coords) {
  if (map.rank() != 3 || coords.rank() != 3 || coords.dim(0) != 2)
    throw DimensionError("bilinear_sample expects CxHxW map and 2xHxW coords, got " + shape_str(map.shape()) +
                         " and " + shape_str(coords.shape()));
  const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const int ho = coords.dim(1), wo = coords.dim(2);
  const std::size_t np = static_cast<std::size_t>(ho) * wo;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  struct Cell {
    int x0, y0, x1, y1;
    T fx, fy;
    bool clamped_x, clamped_y;
  };
  auto cells = std::make_shared<std::vector<Cell>>(np);
  auto valid = Tensor<T>::zeros({1, ho, wo});
  const auto& cv = coords.node().value;
  for (std::size_t k = 0; k < np; ++k) {
    const T x = cv[k], y = cv[np + k];
    if (!std::isfinite(x) || !std::isfinite(y)) throw NumericsError("bilinear_sample: non-finite coordinate");
    const bool in = x >= T(0) && x <= T(w - 1) && y >= T(0) && y <= T(h - 1);
    valid.mutable_data()[k] = in ? T(1) : T(0);
    Cell cell{};
    const T xc = std::clamp(x, T(0), T(w - 1));
    const T yc = std::clamp(y, T(0), T(h - 1));
    cell.clamped_x = xc != x;
    cell.clamped_y = yc != y;
    cell.x0 = std::min(static_cast<int>(std::floor(xc)), std::max(w - 2, 0));
    cell.y0 = std::min(static_cast<int>(std::floor(yc)), std::max(h - 2, 0));
    cell.x1 = std::min(cell.x0 + 1, w - 1);
    cell.y1 = std::min(cell.y0 + 1, h - 1);
    cell.fx = w > 1 ? xc - T(cell.x0) : T(0);
    cell.fy = h > 1 ? yc - T(cell.y0) : T(0);
    (*cells)[k] = cell;
  }

  auto out = detail::make_result<T>({c, ho, wo}, "bilinear_sample", {&map, &coords});
  const auto& mv = map.node().value;
  for (int ch = 0; ch < c; ++ch) {
    const T* m = mv.data() + ch * plane;
    T* o = out->value.data() + ch * np;
    for (std::size_t k = 0; k < np; ++k) {
      const Cell& e = (*cells)[k];
      const T top = (T(1) - e.fx) * m[e.y0 * w + e.x0] + e.fx * m[e.y0 * w + e.x1];
      const T bot = (T(1) - e.fx) * m[e.y1 * w + e.x0] + e.fx * m[e.y1 * w + e.x1];
      o[k] = (T(1) - e.fy) * top + e.fy * bot;
    }
  }
  detail::check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [cells, c, w, np, plane](Node<T>& n) {
      T* gm = detail::parent_grad(n, 0);
      T* gc = detail::parent_grad(n, 1);
      const auto& mv = n.parents[0]->value;
      for (int ch = 0; ch < c; ++ch) {
        const T* m = mv.data() + ch * plane;
        const T* g = n.grad.data() + ch * np;
        for (std::size_t k = 0; k < np; ++k) {
          const Cell& e = (*cells)[k];
          const T gk = g[k];
          if (gk == T(0)) continue;
          const T v00 = m[e.y0 * w + e.x0], v01 = m[e.y0 * w + e.x1];
          const T v10 = m[e.y1 * w + e.x0], v11 = m[e.y1 * w + e.x1];
          if (gm) {
            T* gp = gm + ch * plane;
            gp[e.y0 * w + e.x0] += gk * (T(1) - e.fy) * (T(1) - e.fx);
            gp[e.y0 * w + e.x1] += gk * (T(1) - e.fy) * e.fx;
            gp[e.y1 * w + e.x0] += gk * e.fy * (T(1) - e.fx);
            gp[e.y1 * w + e.x1] += gk * e.fy * e.fx;
          }
          if (gc) {
            if (!e.clamped_x && e.x1 != e.x0)
              gc[k] += gk * ((T(1) - e.fy) * (v01 - v00) + e.fy * (v11 - v10));
            if (!e.clamped_y && e.y1 != e.y0)
              gc[np + k] += gk * ((T(1) - e.fx) * (v10 - v00) + e.fx * (v11 - v01));
          }
        }
      }
    };
  }
  return {Tensor<T>(out), valid};
}

namespace detail {

/// Fixed sparse linear map applied independently to each channel plane.
struct PlaneGather {
  int fanin = 0;
  std::size_t in_plane = 0, out_plane = 0;
  std::vector<std::size_t> idx;  // out_plane * fanin
  std::vector<double> weight;    // out_plane * fanin
};

template <typename T>
Tensor<T> apply_gather(const Tensor<T>& x, std::shared_ptr<const PlaneGather> pg, Shape out_shape,
                       const char* name) {
  const int c = x.dim(0);
  auto out = make_result<T>(out_shape, name, {&x});
  const auto& xv = x.node().value;
  for (int ch = 0; ch < c; ++ch) {
    const T* in = xv.data() + ch * pg->in_plane;
    T* o = out->value.data() + ch * pg->out_plane;
    for (std::size_t k = 0; k < pg->out_plane; ++k) {
      T s = 0;
      for (int j = 0; j < pg->fanin; ++j)
        s += static_cast<T>(pg->weight[k * pg->fanin + j]) * in[pg->idx[k * pg->fanin + j]];
      o[k] = s;
    }
  }
  check_finite(*out);
  if (out->requires_grad) {
    out->backward_fn = [pg, c](Node<T>& n) {
      T* gx = parent_grad(n, 0);
      if (!gx) return;
      for (int ch = 0; ch < c; ++ch) {
        T* gi = gx + ch * pg->in_plane;
        const T* g = n.grad.data() + ch * pg->out_plane;
        for (std::size_t k = 0; k < pg->out_plane; ++k)
          for (int j = 0; j < pg->fanin; ++j)
            gi[pg->idx[k * pg->fanin + j]] += static_cast<T>(pg->weight[k * pg->fanin + j]) * g[k];
      }
    };
  }
  return Tensor<T>(out);
}

}  // namespace detail

/// Bilinear resize of a CxHxW map to CxOHxOW using half-pixel centres
/// (source = (dst + 0.5) * in/out - 0.5, clamped to the border).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  if (x.rank() != 3) throw DimensionError("resize_bilinear expects CxHxW, got " + shape_str(x.shape()));
  const int h = x.dim(1), w = x.dim(2);
  auto pg = std::make_shared<detail::PlaneGather>();
  pg->fanin = 4;
  pg->in_plane = static_cast<std::size_t>(h) * w;
  pg->out_plane = static_cast<std::size_t>(out_h) * out_w;
  pg->idx.resize(pg->out_plane * 4);
  pg->weight.resize(pg->out_plane * 4);
  auto axis = [](int dst, int n_in, int n_out, int& i0, int& i1, double& f) {
    double s = (dst + 0.5) * static_cast<double>(n_in) / n_out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
    i0 = std::min(static_cast<int>(std::floor(s)), std::max(n_in - 2, 0));
    i1 = std::min(i0 + 1, n_in - 1);
    f = n_in > 1 ? s - i0 : 0.0;
  };
  for (int oy = 0; oy < out_h; ++oy) {
    int y0, y1;
    double fy;
    axis(oy, h, out_h, y0, y1, fy);
    for (int ox = 0; ox < out_w; ++ox) {
      int x0, x1;
      double fx;
      axis(ox, w, out_w, x0, x1, fx);
      const std::size_t k = (static_cast<std::size_t>(oy) * out_w + ox) * 4;
      pg->idx[k + 0] = static_cast<std::size_t>(y0) * w + x0;
      pg->idx[k + 1] = static_cast<std::size_t>(y0) * w + x1;
      pg->idx[k + 2] = static_cast<std::size_t>(y1) * w + x0;
      pg->idx[k + 3] = static_cast<std::size_t>(y1) * w + x1;
      pg->weight[k + 0] = (1 - fy) * (1 - fx);
      pg->weight[k + 1] = (1 - fy) * fx;
      pg->weight[k + 2] = fy * (1 - fx);
      pg->weight[k + 3] = fy * fx;
    }
  }
  return detail::apply_gather<T>(x, pg, {x.dim(0), out_h, out_w}, "resize_bilinear");
}

/// 3x3 mean filter with reflection padding (index -1 maps to 1).
template <typename T>
Tensor<T> box_filter3x3(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(1) < 2 || x.dim(2) < 2)
    throw DimensionError("box_filter3x3 expects CxHxW with H,W >= 2, got " + shape_str(x.shape()));
  const int h = x.dim(1), w = x.dim(2);
  auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  auto pg = std::make_shared<detail::PlaneGather>();
  pg->fanin = 9;
  pg->in_plane = pg->out_plane = static_cast<std::size_t>(h) * w;
  pg->idx.resize(pg->out_plane * 9);
  pg->weight.assign(pg->out_plane * 9, 1.0 / 9.0);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      std::size_t k = (static_cast<std::size_t>(y) * w + xx) * 9;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          pg->idx[k++] = static_cast<std::size_t>(reflect(y + dy, h)) * w + reflect(xx + dx, w);
    }
  return detail::apply_gather<T>(x, pg, x.shape(), "box_filter3x3");
}

}  // namespace dro
