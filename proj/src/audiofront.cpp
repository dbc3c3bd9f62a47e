// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/audiofront.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tefal {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Owns one r2c plan and its buffers.
class RealDft {
 public:
  explicit RealDft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    if (in_ == nullptr || out_ == nullptr) throw std::bad_alloc();
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    if (plan_ == nullptr) throw std::runtime_error("fftw: failed to create plan");
  }
  ~RealDft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealDft(const RealDft&) = delete;
  RealDft& operator=(const RealDft&) = delete;

  double* input() { return in_; }

  // Magnitudes of bins 0..n/2.
  void magnitude(std::vector<double>& mag) {
    fftw_execute(plan_);
    mag.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

std::size_t window_samples(double window_ms, int sample_rate) {
  if (!(window_ms > 0.0)) throw std::invalid_argument("window length must be positive");
  const auto n = static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
  if (n < 2) throw std::invalid_argument("window shorter than two samples");
  return n;
}

void require_fbank_rate(const Waveform& w) {
  w.validate();
  if (w.sample_rate != kFbankSampleRate) {
    throw std::invalid_argument("fbank expects " + std::to_string(kFbankSampleRate) +
                                " Hz audio, got " + std::to_string(w.sample_rate) +
                                " Hz; resample upstream");
  }
}

// Frames at the given start positions, windowed, DFT magnitude, Mel, log.
Matrix fbank_frames(const Waveform& w, const std::vector<std::size_t>& starts, std::size_t n_mels,
                    double window_ms) {
  const std::size_t win = window_samples(window_ms, w.sample_rate);
  const std::size_t nfft = next_power_of_two(win);
  const std::vector<double> window = hamming_window(win);
  const Matrix mel = mel_filter_bank(n_mels, nfft, w.sample_rate);

  RealDft dft(nfft);
  std::vector<double> mag;
  Matrix out(starts.size(), n_mels);
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double* in = dft.input();
    std::fill(in, in + nfft, 0.0);
    for (std::size_t i = 0; i < win; ++i) {
      const std::size_t s = starts[f] + i;
      if (s < w.samples.size()) in[i] = w.samples[s] * window[i];
    }
    dft.magnitude(mag);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double energy = 0.0;
      const auto filt = mel.row(m);
      for (std::size_t k = 0; k < mag.size(); ++k) energy += filt[k] * mag[k];
      out(f, m) = std::log(std::max(energy, kLogFloor));
    }
  }
  return out;
}

Waveform padded_to_window(const Waveform& w, double window_ms) {
  const std::size_t win = window_samples(window_ms, w.sample_rate);
  if (w.samples.size() >= win) return w;
  std::cerr << "warning: clip of " << w.samples.size() << " samples is shorter than one " << win
            << "-sample window; zero-padding\n";
  Waveform padded = w;
  padded.samples.resize(win, 0.0);
  return padded;
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

double Waveform::duration_seconds() const {
  return static_cast<double>(samples.size()) / sample_rate;
}

void Waveform::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (samples.empty()) throw std::invalid_argument("waveform has no samples");
}

double adaptive_frame_shift(std::size_t n_frm, int sample_rate, std::size_t target_length) {
  if (n_frm == 0 || sample_rate <= 0 || target_length == 0) {
    throw std::invalid_argument("adaptive_frame_shift: all inputs must be positive");
  }
  return static_cast<double>(n_frm) * 1000.0 /
         (static_cast<double>(sample_rate) * static_cast<double>(target_length));
}

std::size_t frame_start(std::size_t k, std::size_t n_frm, std::size_t target_length) {
  if (target_length == 0) throw std::invalid_argument("frame_start: target length must be positive");
  // round-half-up of k*n/L in integers; k*n = k*q*L + k*r
  const std::size_t q = n_frm / target_length;
  const std::size_t r = n_frm % target_length;
  return k * q + (2 * k * r + target_length) / (2 * target_length);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_edge_frequencies(std::size_t n_mels) {
  if (n_mels == 0) throw std::invalid_argument("n_mels must be positive");
  const double top = hz_to_mel(kMelMaxHz);
  std::vector<double> hz(n_mels + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return hz;
}

Matrix mel_filter_bank(std::size_t n_mels, std::size_t nfft, int sample_rate) {
  if (nfft < 2) throw std::invalid_argument("nfft must be at least 2");
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  const std::size_t bins = nfft / 2 + 1;
  const double top = hz_to_mel(kMelMaxHz);
  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double step = top / static_cast<double>(n_mels + 1);
    const double lo = step * static_cast<double>(m);
    const double mid = lo + step;
    const double hi = mid + step;
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / static_cast<double>(nfft));
      double weight = 0.0;
      if (mel > lo && mel <= mid) {
        weight = (mel - lo) / (mid - lo);
      } else if (mel > mid && mel < hi) {
        weight = (hi - mel) / (hi - mid);
      }
      fb(m, k) = weight;
    }
  }
  return fb;
}

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> hamming_window(std::size_t n) {
  if (n < 2) throw std::invalid_argument("hamming window needs at least two points");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

MelFilterBank compute_fbank(const Waveform& w, std::size_t target_length, std::size_t n_mels,
                            double window_ms) {
  require_fbank_rate(w);
  if (target_length == 0) throw std::invalid_argument("target length must be positive");
  const Waveform clip = padded_to_window(w, window_ms);
  const std::size_t n = clip.n_frm();
  std::vector<std::size_t> starts(target_length);
  for (std::size_t k = 0; k < target_length; ++k) starts[k] = frame_start(k, n, target_length);
  MelFilterBank out;
  out.frames = fbank_frames(clip, starts, n_mels, window_ms);
  out.frame_shift_ms = adaptive_frame_shift(n, clip.sample_rate, target_length);
  return out;
}

MelFilterBank compute_fbank_fixed_shift(const Waveform& w, double shift_ms, std::size_t n_mels,
                                        double window_ms) {
  require_fbank_rate(w);
  if (!(shift_ms > 0.0)) throw std::invalid_argument("frame shift must be positive");
  const Waveform clip = padded_to_window(w, window_ms);
  const std::size_t win = window_samples(window_ms, clip.sample_rate);
  const double hop = shift_ms * clip.sample_rate / 1000.0;
  std::vector<std::size_t> starts;
  for (std::size_t k = 0;; ++k) {
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(k) * hop));
    if (s + win > clip.n_frm()) break;
    starts.push_back(s);
  }
  MelFilterBank out;
  out.frames = fbank_frames(clip, starts, n_mels, window_ms);
  out.frame_shift_ms = shift_ms;
  return out;
}

MelFilterBank zero_fbank(std::size_t target_length, std::size_t n_mels) {
  MelFilterBank out;
  out.frames = Matrix(target_length, n_mels);
  out.missing_audio = true;
  return out;
}

PatchGrid patch_grid(std::size_t target_length, std::size_t n_mels, std::size_t patch,
                     std::size_t stride) {
  if (patch == 0 || stride == 0) throw std::invalid_argument("patch and stride must be positive");
  if (patch > target_length || patch > n_mels) {
    throw std::invalid_argument("patch size " + std::to_string(patch) + " exceeds the " +
                                std::to_string(target_length) + "x" + std::to_string(n_mels) +
                                " grid");
  }
  PatchGrid g;
  g.patch_size = patch;
  g.stride = stride;
  g.n_time_patches = (target_length - patch) / stride + 1;
  g.n_freq_patches = (n_mels - patch) / stride + 1;
  return g;
}

std::size_t patch_count(std::size_t target_length, std::size_t n_mels, std::size_t patch,
                        std::size_t stride) {
  return patch_grid(target_length, n_mels, patch, stride).n_a();
}

Waveform parse_wav(std::span<const std::uint8_t> b) {
  auto tag = [&](std::size_t at, const char* t) {
    return at + 4 <= b.size() && std::equal(t, t + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
  };
  if (!tag(0, "RIFF") || !tag(8, "WAVE")) throw std::runtime_error("wav: not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t len = read_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + len > b.size()) throw std::runtime_error("wav: truncated chunk");
    if (tag(at, "fmt ")) {
      if (len < 16) throw std::runtime_error("wav: fmt chunk too short");
      const std::uint16_t format = read_u16(b, body);
      channels = read_u16(b, body + 2);
      rate = read_u32(b, body + 4);
      bits = read_u16(b, body + 14);
      if (format != 1) throw std::runtime_error("wav: only PCM (format 1) is supported");
      if (channels != 1) {
        throw std::runtime_error("wav: expected mono, got " + std::to_string(channels) +
                                 " channels");
      }
      if (bits != 16) throw std::runtime_error("wav: expected 16-bit samples");
      if (rate != static_cast<std::uint32_t>(kFbankSampleRate)) {
        throw std::runtime_error("wav: expected " + std::to_string(kFbankSampleRate) +
                                 " Hz, got " + std::to_string(rate) + " Hz; resample upstream");
      }
      have_fmt = true;
    } else if (tag(at, "data")) {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt chunk");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      if (w.samples.empty()) throw std::runtime_error("wav: no samples");
      return w;
    }
    at = body + len + (len & 1U);
  }
  throw std::runtime_error("wav: no data chunk");
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  w.validate();
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  for (char c : std::string("RIFF")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 36 + data_len);
  for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  for (char c : std::string("data")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, data_len);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace tefal
