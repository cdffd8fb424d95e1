#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace eegraph {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 transform; length must be a power of two.
inline void fft_pow2(std::vector<cdouble>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const cdouble wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cdouble w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const cdouble u = a[i + j];
        const cdouble v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

}  // namespace detail

// Forward DFT of a real signal at the signal's own length (no padding of the
// reported bins), returning the n/2+1 nonnegative-frequency coefficients.
// Power-of-two lengths use radix-2 directly; other lengths go through
// Bluestein's chirp transform, which zero-pads to the next power of two
// internally but still evaluates the exact length-n DFT. That keeps the bin
// spacing at fs/n, which downstream spectral code relies on.
class RealFft {
 public:
  explicit RealFft(size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("RealFft: empty input length");
    if (detail::is_pow2(n_)) return;
    // Bluestein setup: chirp w[k] = exp(-i*pi*k^2/n) and the FFT of its
    // conjugate wrapped into a circular-convolution kernel.
    m_ = detail::next_pow2(2 * n_ - 1);
    chirp_.resize(n_);
    for (size_t k = 0; k < n_; ++k) {
      // k^2 mod 2n keeps the argument small for large n.
      const double q = static_cast<double>((k * k) % (2 * n_));
      const double ang = -std::numbers::pi * q / static_cast<double>(n_);
      chirp_[k] = cdouble(std::cos(ang), std::sin(ang));
    }
    kernel_fft_.assign(m_, cdouble(0.0, 0.0));
    kernel_fft_[0] = std::conj(chirp_[0]);
    for (size_t k = 1; k < n_; ++k) {
      kernel_fft_[k] = std::conj(chirp_[k]);
      kernel_fft_[m_ - k] = std::conj(chirp_[k]);
    }
    detail::fft_pow2(kernel_fft_, false);
  }

  size_t length() const { return n_; }

  std::vector<cdouble> operator()(std::span<const double> x) const {
    if (x.size() != n_) throw std::invalid_argument("RealFft: input length mismatch");
    std::vector<cdouble> full;
    if (detail::is_pow2(n_)) {
      full.assign(x.begin(), x.end());
      detail::fft_pow2(full, false);
    } else {
      std::vector<cdouble> a(m_, cdouble(0.0, 0.0));
      for (size_t k = 0; k < n_; ++k) a[k] = x[k] * chirp_[k];
      detail::fft_pow2(a, false);
      for (size_t k = 0; k < m_; ++k) a[k] *= kernel_fft_[k];
      detail::fft_pow2(a, true);
      full.resize(n_);
      for (size_t k = 0; k < n_; ++k) full[k] = a[k] * chirp_[k];
    }
    full.resize(n_ / 2 + 1);
    return full;
  }

 private:
  size_t n_ = 0;
  size_t m_ = 0;                      // Bluestein convolution length
  std::vector<cdouble> chirp_;        // exp(-i*pi*k^2/n)
  std::vector<cdouble> kernel_fft_;   // FFT of conj(chirp) kernel
};

inline std::vector<cdouble> rfft(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("rfft: empty input");
  return RealFft(x.size())(x);
}

}  // namespace eegraph
