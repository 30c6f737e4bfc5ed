#include "dsq/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <new>

namespace dsq::fft {
namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanGuard {
  fftw_plan plan = nullptr;
  ~PlanGuard() {
    if (plan != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

template <typename T>
struct AlignedBuffer {
  T* data;
  explicit AlignedBuffer(std::size_t n) : data(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {
    if (data == nullptr) throw std::bad_alloc();
  }
  ~AlignedBuffer() { fftw_free(data); }
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;
};

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  in_ = fftw_alloc_real(n);
  out_ = fftw_alloc_complex(n / 2 + 1);
  std::lock_guard lock(planner_mutex());
  plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, static_cast<fftw_complex*>(out_), FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  }
  fftw_free(in_);
  fftw_free(out_);
}

void RealFft::power_spectrum(std::span<const double> input, std::span<double> out) {
  const std::size_t m = std::min(n_, input.size());
  std::copy_n(input.begin(), m, in_);
  std::fill(in_ + m, in_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(plan_));
  const auto* bins = static_cast<const fftw_complex*>(out_);
  for (std::size_t k = 0; k < std::min(out.size(), n_ / 2 + 1); ++k) {
    out[k] = bins[k][0] * bins[k][0] + bins[k][1] * bins[k][1];
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1U;
  return p;
}

std::vector<std::complex<double>> rfft(std::span<const double> input, std::size_t n) {
  // FFTW-allocated buffers keep alignment, and therefore the chosen codelets and the
  // exact floating-point results, identical from call to call.
  AlignedBuffer<double> in(n);
  AlignedBuffer<fftw_complex> spec(n / 2 + 1);
  std::fill_n(in.data, n, 0.0);
  std::copy_n(input.begin(), std::min(n, input.size()), in.data);
  PlanGuard guard;
  {
    std::lock_guard lock(planner_mutex());
    guard.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data, spec.data, FFTW_ESTIMATE);
  }
  fftw_execute(guard.plan);
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec.data[k][0], spec.data[k][1]};
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  AlignedBuffer<fftw_complex> spec(n / 2 + 1);
  AlignedBuffer<double> out_buf(n);
  for (std::size_t k = 0; k < n / 2 + 1; ++k) {
    const auto v = k < spectrum.size() ? spectrum[k] : std::complex<double>{};
    spec.data[k][0] = v.real();
    spec.data[k][1] = v.imag();
  }
  PlanGuard guard;
  {
    std::lock_guard lock(planner_mutex());
    guard.plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec.data, out_buf.data, FFTW_ESTIMATE);
  }
  fftw_execute(guard.plan);
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = out_buf.data[i] * scale;
  return out;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b, std::size_t keep) {
  if (a.empty() || b.empty()) return std::vector<double>(keep, 0.0);
  const std::size_t full = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(full);
  auto fa = rfft(a, n);
  const auto fb = rfft(b, n);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  auto out = irfft(fa, n);
  out.resize(std::min(keep, full));
  out.resize(keep, 0.0);
  return out;
}

}  // namespace dsq::fft
