// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef UTTENC_FEATURES_HPP_
#define UTTENC_FEATURES_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uttenc/errors.hpp"

namespace uttenc {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  /// Throws DataError unless samples are finite and the rate is 8 or 16 kHz.
  void validate() const;
};

/// D x L feature matrix of one utterance (rows are coefficients).
struct FrameSequence {
  Eigen::MatrixXd features;
  std::string utterance_id;
  std::optional<int> label;

  Eigen::Index dims() const { return features.rows(); }
  Eigen::Index frames() const { return features.cols(); }
};

enum class WindowKind { kHamming, kHanning, kRectangular };

struct FbankOptions {
  int n_mels = 64;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double low_freq = 20.0;
  double high_freq = 0.0;  // <= 0: Nyquist
  WindowKind window = WindowKind::kHamming;

  int frame_length(int sample_rate) const;
  int frame_shift(int sample_rate) const;
};

// ---------------------------------------------------------------------------
// Filterbank analysis

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Smallest power of two >= n.
int fft_size_for(int n);

/// |X_k|^2 for k = 0..fft_size/2 of the zero-padded frame.
Eigen::VectorXd power_spectrum(std::span<const double> frame, int fft_size);

/// Triangular mel filters, n_mels x (fft_size/2 + 1).
Eigen::MatrixXd mel_filterbank(int n_mels, int fft_size, int sample_rate,
                               double low_freq, double high_freq);

/// Center frequency in Hz of each filter of mel_filterbank().
Eigen::VectorXd mel_center_frequencies(int n_mels, int sample_rate, double low_freq,
                                       double high_freq);

Eigen::VectorXd analysis_window(WindowKind kind, int length);

/// Log mel filterbank energies: per frame pre-emphasis, window, power
/// spectrum, mel filters, log(energy + floor).
FrameSequence fbank(const AudioClip& clip, const FbankOptions& opts = {});

// ---------------------------------------------------------------------------
// Post-processing

/// Per-frame energy in dB, 10 log10(sum_j exp(feature_j)), for log
/// filterbank features.
Eigen::VectorXd frame_energy_db(const FrameSequence& seq);

/// Keeps frames whose energy exceeds (max energy - offset_db). The loudest
/// frame is always kept.
std::vector<bool> energy_vad(const Eigen::VectorXd& energy_db, double offset_db = 40.0);
std::vector<bool> energy_vad(const FrameSequence& seq, double offset_db = 40.0);

FrameSequence select_frames(const FrameSequence& seq, const std::vector<bool>& keep);

/// Subtracts, per coefficient, the mean of a centered window of `window`
/// frames truncated at the utterance edges.
FrameSequence sliding_cmn(const FrameSequence& seq, int window);

/// Random contiguous crop when longer than `target`, cyclic tiling when
/// shorter, identity when equal.
FrameSequence crop_or_extend(const FrameSequence& seq, int target, std::mt19937_64& rng);

struct FeaturePipelineOptions {
  FbankOptions fbank;
  double vad_offset_db = 40.0;
  int cmn_window = 300;  // frames; 3 s at a 10 ms shift
};

/// fbank -> energy VAD mask -> sliding CMN -> keep voiced frames.
FrameSequence extract_features(const AudioClip& clip, const FeaturePipelineOptions& opts = {});

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthOptions {
  int n_classes = 8;
  int utts_per_class = 20;
  int dims = 64;
  int min_frames = 64;
  int max_frames = 128;
  double mean_scale = 1.0;      // std of class offset coefficients
  double mean_smoothing = 0.0;  // Gaussian smoothing along coefficients, in coefficients
  double noise = 1.0;           // std of the frame-level AR(1) process
  double ar_coeff = 0.9;        // temporal correlation of the frame noise
  double session_ratio = 0.5;   // per-utterance offset std, relative to noise
  int states = 0;               // shared phone-like states; 0 for a single static mean
  double state_scale = 1.0;     // std of the shared state templates
  double state_duration = 8.0;  // mean frames spent in a state
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic synthetic corpus, utterances ordered by class. Without
/// states, class c frames are o_c + s_u + noise * z_t with z an AR(1)
/// process and s_u a per-utterance offset. With S states, a sticky random
/// state sequence k_t picks a shared template and a class-specific offset:
/// x_t = m_k + o_{c,k} + s_u + noise * z_t.
std::vector<FrameSequence> synth_corpus(const SynthOptions& opts);

// ---------------------------------------------------------------------------
// Files

/// "UEFB" feature file: magic, u32 version, u32 D, u32 L, then D*L
/// little-endian float32 values, row-major (rows = coefficients).
void write_uefb(const std::filesystem::path& path, const Eigen::MatrixXd& features);
Eigen::MatrixXd read_uefb(const std::filesystem::path& path);

inline constexpr std::uint32_t kUefbVersion = 1;

/// 16-bit PCM mono WAV. Samples are scaled to [-1, 1).
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace uttenc

#endif  // UTTENC_FEATURES_HPP_
