// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Raw-audio front end: log-Mel filter bank with an adaptive frame shift, so
// every clip yields exactly L_tar frames, plus the patch-grid geometry of the
// audio encoder that turns the filter bank into N_a tokens.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tefal/matrix.h"

namespace tefal {

inline constexpr int kFbankSampleRate = 16000;
inline constexpr std::size_t kDefaultTargetLength = 1024;
inline constexpr std::size_t kDefaultMelBins = 128;
inline constexpr double kDefaultWindowMs = 25.0;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kMelMaxHz = 8000.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kFbankSampleRate;

  std::size_t n_frm() const { return samples.size(); }
  double duration_seconds() const;
  void validate() const;
};

struct MelFilterBank {
  Matrix frames;  // L_tar x n_mels log-Mel energies
  double frame_shift_ms = 0.0;
  bool missing_audio = false;

  std::size_t target_length() const { return frames.rows(); }
  std::size_t n_mels() const { return frames.cols(); }
};

struct PatchGrid {
  std::size_t patch_size = 16;
  std::size_t stride = 10;
  std::size_t n_time_patches = 0;
  std::size_t n_freq_patches = 0;

  std::size_t n_a() const { return n_time_patches * n_freq_patches; }
};

/// f_shift = n_frm * 1000 / (sr * L_tar), in milliseconds.
double adaptive_frame_shift(std::size_t n_frm, int sample_rate, std::size_t target_length);

/// Start sample of frame k: round(k * n_frm / L_tar), computed exactly.
std::size_t frame_start(std::size_t k, std::size_t n_frm, std::size_t target_length);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the HTK Mel scale spanning [0, kMelMaxHz], evaluated
/// at the nfft/2+1 bin frequencies. Shape n_mels x (nfft/2 + 1).
Matrix mel_filter_bank(std::size_t n_mels, std::size_t nfft, int sample_rate);

/// Center frequency (Hz) of every filter in mel_filter_bank, plus the two
/// outer edges: n_mels + 2 points.
std::vector<double> mel_edge_frequencies(std::size_t n_mels);

/// Smallest power of two >= n.
std::size_t next_power_of_two(std::size_t n);

/// Symmetric Hamming window of length n.
std::vector<double> hamming_window(std::size_t n);

MelFilterBank compute_fbank(const Waveform& w, std::size_t target_length = kDefaultTargetLength,
                            std::size_t n_mels = kDefaultMelBins,
                            double window_ms = kDefaultWindowMs);

/// Conventional fixed-hop variant: frame count follows the clip duration.
MelFilterBank compute_fbank_fixed_shift(const Waveform& w, double shift_ms,
                                        std::size_t n_mels = kDefaultMelBins,
                                        double window_ms = kDefaultWindowMs);

MelFilterBank zero_fbank(std::size_t target_length = kDefaultTargetLength,
                         std::size_t n_mels = kDefaultMelBins);

PatchGrid patch_grid(std::size_t target_length, std::size_t n_mels, std::size_t patch = 16,
                     std::size_t stride = 10);
std::size_t patch_count(std::size_t target_length, std::size_t n_mels, std::size_t patch = 16,
                        std::size_t stride = 10);

// 16-bit PCM mono RIFF/WAVE, little-endian.
Waveform parse_wav(std::span<const std::uint8_t> bytes);
Waveform read_wav(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& w);
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace tefal
