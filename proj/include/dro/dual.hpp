#pragma once

#include <array>
#include <cmath>

namespace dro {

/// Forward-mode dual number carrying N directional derivatives. Used to
/// obtain exact Jacobians of small closed-form maps (the SE(3) exponential).
template <typename T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit lift of constants
  static Dual variable(T value, int i) {
    Dual x(value);
    x.d[i] = T(1);
    return x;
  }

  friend Dual operator+(const Dual& a, const Dual& b) {
    Dual r(a.v + b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    Dual r(a.v - b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
  }
  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
    return r;
  }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
};

template <typename T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
  Dual<T, N> r(std::sqrt(a.v));
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] / (T(2) * r.v);
  return r;
}
template <typename T, int N>
Dual<T, N> sin(const Dual<T, N>& a) {
  Dual<T, N> r(std::sin(a.v));
  const T c = std::cos(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * c;
  return r;
}
template <typename T, int N>
Dual<T, N> cos(const Dual<T, N>& a) {
  Dual<T, N> r(std::cos(a.v));
  const T s = -std::sin(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
  return r;
}

template <typename T>
T value_of(const T& x) {
  return x;
}
template <typename T, int N>
T value_of(const Dual<T, N>& x) {
  return x.v;
}

}  // namespace dro
