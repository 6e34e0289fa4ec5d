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

#include "uttenc/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace uttenc {

void AudioClip::validate() const {
  if (sample_rate != 8000 && sample_rate != 16000) {
    throw DataError("unsupported sample rate " + std::to_string(sample_rate) +
                    " (expected 8000 or 16000)");
  }
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("audio contains non-finite samples");
  }
}

int FbankOptions::frame_length(int sample_rate) const {
  return static_cast<int>(std::lround(sample_rate * frame_length_ms / 1000.0));
}

int FbankOptions::frame_shift(int sample_rate) const {
  return static_cast<int>(std::lround(sample_rate * frame_shift_ms / 1000.0));
}

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

int fft_size_for(int n) {
  return static_cast<int>(std::bit_ceil(static_cast<unsigned>(std::max(n, 1))));
}

Eigen::VectorXd power_spectrum(std::span<const double> frame, int fft_size) {
  if (static_cast<int>(frame.size()) > fft_size) {
    throw std::invalid_argument("frame longer than FFT size");
  }
  std::vector<double> padded(static_cast<std::size_t>(fft_size), 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, padded);
  const int bins = fft_size / 2 + 1;
  Eigen::VectorXd power(bins);
  for (int k = 0; k < bins; ++k) power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
  return power;
}

namespace {

double resolve_high(double high_freq, int sample_rate) {
  const double nyquist = 0.5 * sample_rate;
  return high_freq <= 0.0 ? nyquist : std::min(high_freq, nyquist);
}

}  // namespace

Eigen::VectorXd mel_center_frequencies(int n_mels, int sample_rate, double low_freq,
                                       double high_freq) {
  const double lo = hz_to_mel(low_freq);
  const double hi = hz_to_mel(resolve_high(high_freq, sample_rate));
  const double step = (hi - lo) / (n_mels + 1);
  Eigen::VectorXd centers(n_mels);
  for (int j = 0; j < n_mels; ++j) centers(j) = mel_to_hz(lo + (j + 1) * step);
  return centers;
}

Eigen::MatrixXd mel_filterbank(int n_mels, int fft_size, int sample_rate,
                               double low_freq, double high_freq) {
  if (n_mels < 1) throw std::invalid_argument("need at least one mel filter");
  const double lo = hz_to_mel(low_freq);
  const double hi = hz_to_mel(resolve_high(high_freq, sample_rate));
  if (!(hi > lo)) throw std::invalid_argument("mel filterbank: empty frequency range");
  const double step = (hi - lo) / (n_mels + 1);
  const int bins = fft_size / 2 + 1;
  Eigen::MatrixXd filters = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int j = 0; j < n_mels; ++j) {
    const double left = lo + j * step, center = left + step, right = center + step;
    for (int k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / fft_size);
      if (mel > left && mel <= center) {
        filters(j, k) = (mel - left) / (center - left);
      } else if (mel > center && mel < right) {
        filters(j, k) = (right - mel) / (right - center);
      }
    }
  }
  return filters;
}

Eigen::VectorXd analysis_window(WindowKind kind, int length) {
  Eigen::VectorXd w(length);
  const double denom = length > 1 ? length - 1 : 1;
  for (int i = 0; i < length; ++i) {
    const double phase = 2.0 * std::numbers::pi * i / denom;
    switch (kind) {
      case WindowKind::kHamming: w(i) = 0.54 - 0.46 * std::cos(phase); break;
      case WindowKind::kHanning: w(i) = 0.5 - 0.5 * std::cos(phase); break;
      case WindowKind::kRectangular: w(i) = 1.0; break;
    }
  }
  return w;
}

FrameSequence fbank(const AudioClip& clip, const FbankOptions& opts) {
  clip.validate();
  const int len = opts.frame_length(clip.sample_rate);
  const int shift = opts.frame_shift(clip.sample_rate);
  if (len < 1 || shift < 1) throw std::invalid_argument("fbank: frame length and shift must be positive");
  const int n = static_cast<int>(clip.samples.size());
  if (n < len) {
    throw EmptyInputError("fbank: clip of " + std::to_string(n) +
                          " samples is shorter than one frame (" + std::to_string(len) + ")");
  }
  const int frames = 1 + (n - len) / shift;
  const int nfft = fft_size_for(len);
  const Eigen::MatrixXd filters =
      mel_filterbank(opts.n_mels, nfft, clip.sample_rate, opts.low_freq, opts.high_freq);
  const Eigen::VectorXd window = analysis_window(opts.window, len);

  FrameSequence seq;
  seq.features.resize(opts.n_mels, frames);
  std::vector<double> frame(static_cast<std::size_t>(len));
  for (int t = 0; t < frames; ++t) {
    const double* src = clip.samples.data() + static_cast<std::ptrdiff_t>(t) * shift;
    std::copy(src, src + len, frame.begin());
    for (int i = len - 1; i > 0; --i) frame[i] -= opts.preemphasis * frame[i - 1];
    frame[0] -= opts.preemphasis * frame[0];
    for (int i = 0; i < len; ++i) frame[i] *= window(i);
    const Eigen::VectorXd energies = filters * power_spectrum(frame, nfft);
    seq.features.col(t) = (energies.array() + opts.log_floor).log().matrix();
  }
  return seq;
}

Eigen::VectorXd frame_energy_db(const FrameSequence& seq) {
  Eigen::VectorXd out(seq.frames());
  for (Eigen::Index t = 0; t < seq.frames(); ++t) {
    const auto col = seq.features.col(t).array();
    const double hi = col.maxCoeff();
    const double lse = hi + std::log((col - hi).exp().sum());
    out(t) = 10.0 * lse / std::numbers::ln10;
  }
  return out;
}

std::vector<bool> energy_vad(const Eigen::VectorXd& energy_db, double offset_db) {
  if (energy_db.size() == 0) throw EmptyInputError("energy_vad: no frames");
  Eigen::Index loudest = 0;
  const double hi = energy_db.maxCoeff(&loudest);
  std::vector<bool> keep(static_cast<std::size_t>(energy_db.size()));
  for (Eigen::Index t = 0; t < energy_db.size(); ++t)
    keep[static_cast<std::size_t>(t)] = energy_db(t) > hi - offset_db;
  keep[static_cast<std::size_t>(loudest)] = true;
  return keep;
}

std::vector<bool> energy_vad(const FrameSequence& seq, double offset_db) {
  return energy_vad(frame_energy_db(seq), offset_db);
}

FrameSequence select_frames(const FrameSequence& seq, const std::vector<bool>& keep) {
  if (static_cast<Eigen::Index>(keep.size()) != seq.frames()) {
    throw std::invalid_argument("frame mask length does not match sequence");
  }
  const auto kept = std::count(keep.begin(), keep.end(), true);
  FrameSequence out{Eigen::MatrixXd(seq.dims(), kept), seq.utterance_id, seq.label};
  Eigen::Index j = 0;
  for (Eigen::Index t = 0; t < seq.frames(); ++t)
    if (keep[static_cast<std::size_t>(t)]) out.features.col(j++) = seq.features.col(t);
  return out;
}

FrameSequence sliding_cmn(const FrameSequence& seq, int window) {
  if (window < 1) throw std::invalid_argument("sliding_cmn: window must be >= 1");
  const Eigen::Index frames = seq.frames();
  const Eigen::Index left = (window - 1) / 2;
  const Eigen::Index right = window - 1 - left;
  // prefix(:, t) = sum of columns [0, t)
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(seq.dims(), frames + 1);
  for (Eigen::Index t = 0; t < frames; ++t)
    prefix.col(t + 1) = prefix.col(t) + seq.features.col(t);
  FrameSequence out = seq;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index begin = std::max<Eigen::Index>(0, t - left);
    const Eigen::Index end = std::min(frames, t + right + 1);
    out.features.col(t) -= (prefix.col(end) - prefix.col(begin)) / static_cast<double>(end - begin);
  }
  return out;
}

FrameSequence crop_or_extend(const FrameSequence& seq, int target, std::mt19937_64& rng) {
  if (target < 1) throw std::invalid_argument("crop_or_extend: target must be >= 1");
  const Eigen::Index frames = seq.frames();
  if (frames == 0) throw EmptyInputError("crop_or_extend: empty sequence");
  if (frames == target) return seq;
  FrameSequence out{Eigen::MatrixXd(seq.dims(), target), seq.utterance_id, seq.label};
  if (frames > target) {
    std::uniform_int_distribution<Eigen::Index> start(0, frames - target);
    out.features = seq.features.middleCols(start(rng), target);
  } else {
    for (int t = 0; t < target; ++t) out.features.col(t) = seq.features.col(t % frames);
  }
  return out;
}

FrameSequence extract_features(const AudioClip& clip, const FeaturePipelineOptions& opts) {
  FrameSequence raw = fbank(clip, opts.fbank);
  const auto keep = energy_vad(raw, opts.vad_offset_db);
  return select_frames(sliding_cmn(raw, opts.cmn_window), keep);
}

void SynthOptions::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synth_corpus: need at least 2 classes");
  if (utts_per_class < 1 || dims < 1) throw std::invalid_argument("synth_corpus: empty corpus");
  if (min_frames < 1 || max_frames < min_frames) {
    throw std::invalid_argument("synth_corpus: invalid length range");
  }
  if (!(std::abs(ar_coeff) < 1.0)) throw std::invalid_argument("synth_corpus: |ar_coeff| must be < 1");
  if (mean_scale < 0 || noise < 0 || session_ratio < 0 || mean_smoothing < 0 || state_scale < 0) {
    throw std::invalid_argument("synth_corpus: scales must be non-negative");
  }
  if (states < 0) throw std::invalid_argument("synth_corpus: states must be >= 0");
  if (states > 0 && !(state_duration >= 1.0)) {
    throw std::invalid_argument("synth_corpus: state_duration must be >= 1 frame");
  }
}

namespace {

// dims x count Gaussian vectors, optionally smoothed along the coefficient
// axis (kernel truncated at 3 sigma, unit-norm so the variance is kept).
Eigen::MatrixXd draw_profiles(int dims, int count, double scale, double smoothing,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd raw(dims, count);
  for (int c = 0; c < count; ++c)
    for (int d = 0; d < dims; ++d) raw(d, c) = normal(rng);
  if (smoothing <= 0.0) return scale * raw;
  const int half = static_cast<int>(std::ceil(3.0 * smoothing));
  Eigen::VectorXd kernel(2 * half + 1);
  for (int i = -half; i <= half; ++i)
    kernel(i + half) = std::exp(-0.5 * i * i / (smoothing * smoothing));
  kernel /= kernel.norm();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dims, count);
  for (int d = 0; d < dims; ++d)
    for (int i = -half; i <= half; ++i) {
      const int src = d + i;
      if (src >= 0 && src < dims) out.row(d) += kernel(i + half) * raw.row(src);
    }
  return scale * out;
}

}  // namespace

std::vector<FrameSequence> synth_corpus(const SynthOptions& opts) {
  opts.validate();
  std::mt19937_64 rng(opts.seed);
  const int states = std::max(opts.states, 1);
  // Shared state templates, then per-class (per-state) offsets.
  const Eigen::MatrixXd templates =
      opts.states > 0 ? draw_profiles(opts.dims, states, opts.state_scale, opts.mean_smoothing, rng)
                      : Eigen::MatrixXd::Zero(opts.dims, 1);
  const Eigen::MatrixXd offsets =
      draw_profiles(opts.dims, opts.n_classes * states, opts.mean_scale, opts.mean_smoothing, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(opts.min_frames, opts.max_frames);
  std::uniform_int_distribution<int> pick_state(0, states - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double innovation = std::sqrt(1.0 - opts.ar_coeff * opts.ar_coeff);
  const double switch_prob = opts.states > 0 ? 1.0 / opts.state_duration : 0.0;
  std::vector<FrameSequence> corpus;
  corpus.reserve(static_cast<std::size_t>(opts.n_classes * opts.utts_per_class));
  for (int c = 0; c < opts.n_classes; ++c) {
    for (int u = 0; u < opts.utts_per_class; ++u) {
      const int frames = length(rng);
      Eigen::VectorXd session(opts.dims);
      for (int d = 0; d < opts.dims; ++d) session(d) = opts.session_ratio * opts.noise * normal(rng);
      Eigen::VectorXd z(opts.dims);
      for (int d = 0; d < opts.dims; ++d) z(d) = normal(rng);
      int k = pick_state(rng);
      FrameSequence seq;
      seq.features.resize(opts.dims, frames);
      for (int t = 0; t < frames; ++t) {
        if (t > 0) {
          for (int d = 0; d < opts.dims; ++d) z(d) = opts.ar_coeff * z(d) + innovation * normal(rng);
          if (unit(rng) < switch_prob) k = pick_state(rng);
        }
        seq.features.col(t) =
            templates.col(k) + offsets.col(c * states + k) + session + opts.noise * z;
      }
      char id[32];
      std::snprintf(id, sizeof(id), "c%03d_u%03d", c, u);
      seq.utterance_id = id;
      seq.label = c;
      corpus.push_back(std::move(seq));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Files

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("truncated file " + path.string());
  }
  return v;
}

}  // namespace

void write_uefb(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write("UEFB", 4);
  put<std::uint32_t>(os, kUefbVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(features.rows()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index d = 0; d < features.rows(); ++d)
    for (Eigen::Index t = 0; t < features.cols(); ++t)
      put<float>(os, static_cast<float>(features(d, t)));
  if (!os) throw DataError("failed writing " + path.string());
}

Eigen::MatrixXd read_uefb(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "UEFB", 4) != 0) {
    throw DataError(path.string() + " is not a UEFB feature file");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kUefbVersion) {
    throw DataError(path.string() + ": unsupported UEFB version " + std::to_string(version));
  }
  const auto rows = get<std::uint32_t>(is, path);
  const auto cols = get<std::uint32_t>(is, path);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t d = 0; d < rows; ++d)
    for (std::uint32_t t = 0; t < cols; ++t) m(d, t) = get<float>(is, path);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": trailing bytes after UEFB payload");
  }
  return m;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char tag[4];
  if (!is.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0) {
    throw DataError(path.string() + " is not a RIFF file");
  }
  get<std::uint32_t>(is, path);
  if (!is.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0) {
    throw DataError(path.string() + " is not a WAVE file");
  }
  AudioClip clip;
  bool have_fmt = false;
  while (is.read(tag, 4)) {
    const auto size = get<std::uint32_t>(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const auto format = get<std::uint16_t>(is, path);
      const auto channels = get<std::uint16_t>(is, path);
      const auto rate = get<std::uint32_t>(is, path);
      get<std::uint32_t>(is, path);
      get<std::uint16_t>(is, path);
      const auto bits = get<std::uint16_t>(is, path);
      if (format != 1 || channels != 1 || bits != 16) {
        throw DataError(path.string() + ": only 16-bit PCM mono WAV is supported");
      }
      clip.sample_rate = static_cast<int>(rate);
      is.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError(path.string() + ": data chunk before fmt chunk");
      clip.samples.resize(size / 2);
      for (auto& s : clip.samples) s = get<std::int16_t>(is, path) / 32768.0;
      clip.validate();
      return clip;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw DataError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  const auto bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  os.write("RIFF", 4);
  put<std::uint32_t>(os, 36 + bytes);
  os.write("WAVEfmt ", 8);
  put<std::uint32_t>(os, 16);
  put<std::uint16_t>(os, 1);
  put<std::uint16_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
  put<std::uint16_t>(os, 2);
  put<std::uint16_t>(os, 16);
  os.write("data", 4);
  put<std::uint32_t>(os, bytes);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put<std::int16_t>(os, static_cast<std::int16_t>(scaled));
  }
}

}  // namespace uttenc
