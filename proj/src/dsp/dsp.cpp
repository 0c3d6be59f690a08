#include "avt/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "avt/kernels.hpp"

namespace avt::dsp {

namespace {

double wrap_phase(double p) {
  // into (-pi, pi]
  p = std::fmod(p, 2.0 * M_PI);
  if (p > M_PI) p -= 2.0 * M_PI;
  if (p <= -M_PI) p += 2.0 * M_PI;
  return p;
}

}  // namespace

std::vector<double> hann_window(std::size_t win_len) {
  std::vector<double> w(win_len);
  for (std::size_t j = 0; j < win_len; ++j) {
    double s = std::sin(M_PI * (static_cast<double>(j) + 0.5) /
                        static_cast<double>(win_len));
    w[j] = s * s;  // 0.5*(1 - cos(2*pi*(j+0.5)/n)), strictly positive
  }
  return w;
}

Spectrogram stft(const Waveform& w, std::size_t win_len, std::size_t hop) {
  if (win_len == 0 || hop == 0 || win_len < hop)
    throw ValueError(strcat_msg("stft: need win_len >= hop > 0, got ", win_len,
                                "/", hop));
  std::size_t len = w.samples.size();
  if (len < win_len)
    throw ValueError(strcat_msg("stft: waveform of ", len,
                                " samples shorter than window ", win_len));
  std::size_t frames = (len - win_len) / hop + 1;
  if ((len - win_len) % hop != 0) frames += 1;  // zero-padded tail frame
  std::size_t bins = win_len / 2 + 1;

  std::vector<double> window = hann_window(win_len);
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  s.hop = hop;
  s.win_len = win_len;
  s.sample_rate = w.sample_rate;
  s.num_samples = len;
  s.magnitude.resize(frames * bins);
  s.phase.resize(frames * bins);

  std::vector<std::complex<double>> buf(win_len);
  for (std::size_t f = 0; f < frames; ++f) {
    std::size_t start = f * hop;
    for (std::size_t j = 0; j < win_len; ++j) {
      double v = start + j < len ? w.samples[start + j] : 0.0;
      buf[j] = std::complex<double>(v * window[j], 0.0);
    }
    fft(buf, false);
    for (std::size_t b = 0; b < bins; ++b) {
      s.magnitude[f * bins + b] = std::abs(buf[b]);
      s.phase[f * bins + b] = std::arg(buf[b]);
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s) {
  if (s.win_len == 0 || s.hop == 0 || s.win_len % s.hop != 0)
    throw ValueError(strcat_msg("istft: win_len ", s.win_len,
                                " not divisible by hop ", s.hop,
                                " (constant overlap-add violated)"));
  if (s.bins != s.win_len / 2 + 1)
    throw ShapeError(strcat_msg("istft: bins ", s.bins, " != win_len/2+1 for ",
                                s.win_len));
  std::size_t len = (s.frames - 1) * s.hop + s.win_len;
  std::vector<double> window = hann_window(s.win_len);
  std::vector<double> num(len, 0.0), den(len, 0.0);

  std::vector<std::complex<double>> buf(s.win_len);
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t b = 0; b < s.bins; ++b) {
      double m = s.magnitude[f * s.bins + b];
      double p = s.phase[f * s.bins + b];
      buf[b] = std::polar(m, p);
    }
    for (std::size_t b = s.bins; b < s.win_len; ++b)
      buf[b] = std::conj(buf[s.win_len - b]);
    fft(buf, true);
    std::size_t start = f * s.hop;
    for (std::size_t j = 0; j < s.win_len; ++j) {
      num[start + j] += window[j] * buf[j].real();
      den[start + j] += window[j] * window[j];
    }
  }
  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i)
    out.samples[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  if (s.num_samples > 0 && s.num_samples <= len)
    out.samples.resize(s.num_samples);
  else if (s.num_samples > len)
    out.samples.resize(s.num_samples, 0.0);
  return out;
}

Spectrogram apply_mask(const Spectrogram& s, const std::vector<double>& mag_mask,
                       const std::vector<double>* phase_delta) {
  if (mag_mask.size() != s.magnitude.size())
    throw ShapeError(strcat_msg("apply_mask: mask has ", mag_mask.size(),
                                " values, spectrogram ", s.frames, "x", s.bins));
  for (std::size_t i = 0; i < mag_mask.size(); ++i)
    if (!(mag_mask[i] >= 0.0 && mag_mask[i] <= 1.0))
      throw ValueError(strcat_msg("apply_mask: mask value ", mag_mask[i],
                                  " at index ", i, " outside [0,1]"));
  if (phase_delta && phase_delta->size() != s.phase.size())
    throw ShapeError("apply_mask: phase delta size mismatch");

  Spectrogram out = s;
  kernels::mul(s.magnitude.data(), mag_mask.data(), out.magnitude.data(),
               s.magnitude.size());
  if (phase_delta) {
    for (std::size_t i = 0; i < out.phase.size(); ++i)
      out.phase[i] = wrap_phase(s.phase[i] + (*phase_delta)[i]);
  }
  return out;
}

MixResult mix(const std::vector<Waveform>& sources,
              const std::vector<double>& gains) {
  if (sources.empty()) throw ValueError("mix: no sources");
  if (sources.size() != gains.size())
    throw ValueError(strcat_msg("mix: ", sources.size(), " sources but ",
                                gains.size(), " gains"));
  std::size_t len = sources[0].samples.size();
  double rate = sources[0].sample_rate;
  for (const Waveform& s : sources) {
    if (s.samples.size() != len)
      throw ValueError(strcat_msg("mix: length mismatch (", len, " vs ",
                                  s.samples.size(), ")"));
    if (s.sample_rate != rate) throw ValueError("mix: sample rate mismatch");
  }
  MixResult r;
  r.mix.sample_rate = rate;
  r.mix.samples.assign(len, 0.0);
  for (std::size_t k = 0; k < sources.size(); ++k)
    kernels::axpy(gains[k], sources[k].samples.data(), r.mix.samples.data(), len);
  for (double& v : r.mix.samples) {
    if (v > 1.0) {
      v = 1.0;
      ++r.clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++r.clipped;
    }
  }
  return r;
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  const auto& e = estimate.samples;
  const auto& s = reference.samples;
  if (e.size() != s.size())
    throw ValueError(strcat_msg("si_sdr: length mismatch (", e.size(), " vs ",
                                s.size(), ")"));
  double ss = kernels::dot(s.data(), s.data(), s.size());
  if (ss <= 0.0) throw ValueError("si_sdr: reference is identically zero");
  double alpha = kernels::dot(e.data(), s.data(), e.size()) / ss;
  double target = alpha * alpha * ss;  // ||alpha*s||^2
  double err = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    double d = alpha * s[i] - e[i];
    err += d * d;
  }
  if (err <= target * 1e-10) return 100.0;
  if (target <= err * 1e-10) return -100.0;
  double db = 10.0 * std::log10(target / err);
  return std::clamp(db, -100.0, 100.0);
}

std::vector<double> ideal_ratio_mask(const Spectrogram& clean,
                                     const Spectrogram& interference) {
  if (clean.magnitude.size() != interference.magnitude.size())
    throw ShapeError("ideal_ratio_mask: geometry mismatch");
  std::vector<double> mask(clean.magnitude.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    double c = clean.magnitude[i], n = interference.magnitude[i];
    mask[i] = c + n > 1e-12 ? c / (c + n) : 0.0;
  }
  return mask;
}

}  // namespace avt::dsp
