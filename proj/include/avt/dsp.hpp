#pragma once
// Waveform <-> spectrogram transforms, masking, mixing, separation metrics.
// Pure buffer code, no autograd: spectrograms enter the differentiable world
// only when the harness lifts magnitudes into Tensors.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "avt/common.hpp"

namespace avt::dsp {

// in-place complex FFT, any n (fast for smooth n, O(n*p) per prime factor p)
void fft(std::vector<std::complex<double>>& x, bool inverse);

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = 16000.0;
};

struct Spectrogram {
  std::vector<double> magnitude;  // frames x bins, row-major, >= 0
  std::vector<double> phase;      // frames x bins, in (-pi, pi]
  std::size_t frames = 0;
  std::size_t bins = 0;      // win_len/2 + 1
  std::size_t hop = 0;       // samples
  std::size_t win_len = 0;   // samples
  double sample_rate = 16000.0;
  std::size_t num_samples = 0;  // original waveform length (0 = unknown)

  double mag(std::size_t f, std::size_t b) const { return magnitude[f * bins + b]; }
};

// Hann analysis window (half-sample offset so every sample has nonzero
// weight and overlap-add inversion is exact; see istft)
std::vector<double> hann_window(std::size_t win_len);

// frames = floor((len-win)/hop) + 1, plus one zero-padded tail frame when
// hop does not divide (len-win). 40 ms / 10 ms at 16 kHz = 640 / 160.
Spectrogram stft(const Waveform& w, std::size_t win_len = 640,
                 std::size_t hop = 160);

// Weighted overlap-add with per-sample window-power normalization.
// Requires win_len divisible by hop (Hann COLA family).
Waveform istft(const Spectrogram& s);

// magnitude' = mask .* magnitude; phase' = wrap(phase + delta) if given.
// mask values outside [0,1] are an error.
Spectrogram apply_mask(const Spectrogram& s, const std::vector<double>& mag_mask,
                       const std::vector<double>* phase_delta = nullptr);

struct MixResult {
  Waveform mix;
  std::size_t clipped = 0;  // samples clamped into [-1, 1]
};
MixResult mix(const std::vector<Waveform>& sources,
              const std::vector<double>& gains);

// scale-invariant signal-to-distortion ratio, dB, capped to [-100, 100]
double si_sdr(const Waveform& estimate, const Waveform& reference);

// oracle magnitude mask |clean| / (|clean| + |interference|), in [0,1]
std::vector<double> ideal_ratio_mask(const Spectrogram& clean,
                                     const Spectrogram& interference);

// WAV, PCM16 little-endian, mono
void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

}  // namespace avt::dsp
