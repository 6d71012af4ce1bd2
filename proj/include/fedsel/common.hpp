#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsel {

// Row-major dense matrix of doubles. Small sizes only, no BLAS.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Mat mat_mul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw std::invalid_argument("mat_mul: shape mismatch");
  Mat out(x.rows, y.cols, 0.0);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const double v = x(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
    }
  return out;
}

inline Mat mat_identity(int n) {
  Mat m(n, n, 0.0);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

// x^p by binary exponentiation; p >= 0.
inline Mat mat_pow(const Mat& x, long p) {
  if (x.rows != x.cols) throw std::invalid_argument("mat_pow: matrix not square");
  if (p < 0) throw std::invalid_argument("mat_pow: negative exponent");
  Mat result = mat_identity(x.rows);
  Mat base = x;
  while (p > 0) {
    if (p & 1) result = mat_mul(result, base);
    base = mat_mul(base, base);
    p >>= 1;
  }
  return result;
}

// row vector times matrix
inline std::vector<double> vec_mat(const std::vector<double>& v, const Mat& m) {
  if (static_cast<int>(v.size()) != m.rows) throw std::invalid_argument("vec_mat: shape mismatch");
  std::vector<double> out(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double vi = v[i];
    for (int j = 0; j < m.cols; ++j) out[j] += vi * m(i, j);
  }
  return out;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and a tag path.
// Fixed derivation paths keep parallel evaluation order irrelevant.
inline uint64_t seed_stream(uint64_t master, std::initializer_list<uint64_t> tags) {
  uint64_t s = splitmix64(master);
  for (uint64_t t : tags) s = splitmix64(s ^ (t + 0x9e3779b97f4a7c15ull));
  return s;
}

inline std::mt19937_64 make_engine(uint64_t master, std::initializer_list<uint64_t> tags) {
  return std::mt19937_64(seed_stream(master, tags));
}

// FNV-1a, used to fingerprint configs in output files.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_g17(double v);

}  // namespace fedsel
