#pragma once

#include <complex>
#include <span>
#include <vector>

namespace dsq::fft {

/// Reusable forward real FFT plan of fixed size. Not shareable across threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  /// |X[k]|^2 for k in [0, n/2]; input is zero-padded/truncated to n.
  void power_spectrum(std::span<const double> input, std::span<double> out);

 private:
  std::size_t n_;
  double* in_ = nullptr;
  void* out_ = nullptr;
  void* plan_ = nullptr;
};

/// Forward real FFT of length `n` (input zero-padded/truncated to n). Returns n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> input, std::size_t n);

/// Inverse of rfft, normalized so irfft(rfft(x, n), n) == x.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

/// Linear convolution via FFT, first `keep` output samples.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b,
                             std::size_t keep);

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

}  // namespace dsq::fft
