#pragma once

#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/eig.hpp"
#include "eegraph/fft.hpp"
#include "eegraph/mat.hpp"
#include "eegraph/recording.hpp"

namespace eegraph {

struct Band {
  std::string name;
  double f_lo = 0.0;
  double f_hi = 0.0;
};

// Canonical band table. Delta's lower edge is 0.5 Hz so the DC bin never
// enters a feature vector.
inline Band band_by_name(const std::string& name) {
  if (name == "delta") return {"delta", 0.5, 4.0};
  if (name == "theta") return {"theta", 4.0, 8.0};
  if (name == "alpha") return {"alpha", 8.0, 13.0};
  if (name == "beta") return {"beta", 13.0, 40.0};
  throw std::invalid_argument("unknown band: " + name);
}

inline const std::vector<std::string>& band_names() {
  static const std::vector<std::string> names = {"delta", "theta", "alpha", "beta"};
  return names;
}

struct WindowPlan {
  double window_s = 5.0;
  double step_s = 0.5;
  int taper_count = 4;
  double time_bandwidth = 2.5;

  void validate() const {
    if (window_s <= 0.0 || step_s <= 0.0) throw std::invalid_argument("WindowPlan: nonpositive sizes");
    if (step_s > window_s) throw std::invalid_argument("WindowPlan: step_s must be <= window_s");
  }

  size_t window_len(double fs) const { return static_cast<size_t>(std::llround(window_s * fs)); }
  size_t step_len(double fs) const { return static_cast<size_t>(std::llround(step_s * fs)); }

  size_t n_windows(size_t n_samples, double fs) const {
    const size_t w = window_len(fs);
    if (n_samples < w) return 0;
    return (n_samples - w) / step_len(fs) + 1;
  }
};

struct TaperSet {
  Matrix tapers;                    // [K x window_len], rows orthonormal
  std::vector<double> eigenvalues;  // spectral concentrations, decreasing in (0,1)
};

// Discrete prolate spheroidal sequences via the symmetric tridiagonal
// formulation: diag_i = ((N-1)/2 - i)^2 cos(2 pi W), offdiag_i = (i+1)(N-1-i)/2
// with W = NW/N. The k most concentrated tapers are the eigenvectors of the k
// largest eigenvalues. Reported eigenvalues are the in-band energy
// concentrations, computed from the taper autocorrelation.
inline TaperSet dpss(size_t window_len, double time_bandwidth, size_t k) {
  if (time_bandwidth <= 0.0) throw std::invalid_argument("dpss: time_bandwidth must be > 0");
  if (k < 1 || static_cast<double>(k) > 2.0 * time_bandwidth - 1.0)
    throw std::invalid_argument("dpss: k too large for bandwidth (need k <= 2*NW - 1)");
  if (window_len < k) throw std::invalid_argument("dpss: window_len must be >= k");

  const double n = static_cast<double>(window_len);
  const double w = time_bandwidth / n;
  const double cos2w = std::cos(2.0 * 3.14159265358979323846 * w);
  std::vector<double> diag(window_len), offdiag(window_len > 0 ? window_len - 1 : 0);
  for (size_t i = 0; i < window_len; ++i) {
    const double c = (n - 1.0) / 2.0 - static_cast<double>(i);
    diag[i] = c * c * cos2w;
  }
  for (size_t i = 0; i + 1 < window_len; ++i)
    offdiag[i] = (static_cast<double>(i) + 1.0) * (n - 1.0 - static_cast<double>(i)) / 2.0;

  const auto pairs = sym_tridiag_eig(diag, offdiag, k);

  TaperSet out;
  out.tapers = Matrix(k, window_len);
  out.eigenvalues.resize(k);
  for (size_t t = 0; t < k; ++t) {
    std::vector<double> taper = pairs[t].vector;
    double norm = 0.0, sum = 0.0;
    for (double v : taper) {
      norm += v * v;
      sum += v;
    }
    norm = std::sqrt(norm);
    for (double& v : taper) v /= norm;
    sum /= norm;
    // Sign convention: positive mean, or positive first nonzero element for
    // the antisymmetric tapers whose mean vanishes. Nonzero taper sums are
    // O(1); the threshold only has to sit above the numerical zero.
    double sign = 0.0;
    if (std::abs(sum) > 1e-8) {
      sign = sum > 0.0 ? 1.0 : -1.0;
    } else {
      for (double v : taper)
        if (std::abs(v) > 1e-12) {
          sign = v > 0.0 ? 1.0 : -1.0;
          break;
        }
    }
    if (sign < 0.0)
      for (double& v : taper) v = -v;

    // Concentration lambda = sum_{m} r[m] * (sin(2 pi W m)/(pi m)), r the
    // autocorrelation, diagonal term 2W.
    double lambda = 2.0 * w;  // m = 0 term (r[0] = 1)
    for (size_t m = 1; m < window_len; ++m) {
      double r = 0.0;
      for (size_t i = 0; i + m < window_len; ++i) r += taper[i] * taper[i + m];
      lambda += 2.0 * r * std::sin(2.0 * 3.14159265358979323846 * w * static_cast<double>(m)) /
                (3.14159265358979323846 * static_cast<double>(m));
    }
    out.eigenvalues[t] = lambda;
    for (size_t i = 0; i < window_len; ++i) out.tapers(t, i) = taper[i];
  }
  return out;
}

// Per-window, per-taper complex spectra plus the averaged one-sided PSD.
struct MultitaperSpectra {
  double sample_rate_hz = 0.0;
  size_t n_windows = 0;
  size_t n_tapers = 0;
  size_t n_channels = 0;
  size_t n_bins = 0;  // window_len/2 + 1
  double bin_hz = 0.0;
  std::vector<double> freq;        // bin centers, 0..fs/2
  Matrix psd;                      // [N x n_bins]
  std::vector<cdouble> coeff;      // [window][taper][channel][bin]

  const cdouble* coeff_at(size_t w, size_t t, size_t ch) const {
    return &coeff[((w * n_tapers + t) * n_channels + ch) * n_bins];
  }
  cdouble* coeff_at(size_t w, size_t t, size_t ch) {
    return &coeff[((w * n_tapers + t) * n_channels + ch) * n_bins];
  }
};

// Sliding-window multitaper estimate. The DFT runs at the exact window length
// so the bin spacing is 1/window_s; PSD uses the standard 1/(fs*||taper||^2)
// scaling with one-sided doubling, averaged jointly over windows and tapers.
inline MultitaperSpectra multitaper_spectra(const Recording& rec, const WindowPlan& plan) {
  plan.validate();
  const double fs = rec.sample_rate_hz;
  const size_t win = plan.window_len(fs);
  const size_t step = plan.step_len(fs);
  const size_t n_w = plan.n_windows(rec.n_samples(), fs);
  if (n_w == 0)
    throw std::invalid_argument("multitaper_spectra: recording shorter than one window");

  const TaperSet tapers = dpss(win, plan.time_bandwidth, static_cast<size_t>(plan.taper_count));
  const RealFft fft(win);

  MultitaperSpectra out;
  out.sample_rate_hz = fs;
  out.n_windows = n_w;
  out.n_tapers = static_cast<size_t>(plan.taper_count);
  out.n_channels = rec.n_channels();
  out.n_bins = win / 2 + 1;
  out.bin_hz = fs / static_cast<double>(win);  // == 1/window_s
  out.freq.resize(out.n_bins);
  for (size_t b = 0; b < out.n_bins; ++b) out.freq[b] = out.bin_hz * static_cast<double>(b);
  out.psd = Matrix(out.n_channels, out.n_bins);
  out.coeff.resize(n_w * out.n_tapers * out.n_channels * out.n_bins);

  std::vector<double> buf(win);
  const double n_obs = static_cast<double>(n_w * out.n_tapers);
  for (size_t w = 0; w < n_w; ++w) {
    const size_t start = w * step;
    for (size_t t = 0; t < out.n_tapers; ++t) {
      for (size_t ch = 0; ch < out.n_channels; ++ch) {
        for (size_t i = 0; i < win; ++i) buf[i] = tapers.tapers(t, i) * rec.data(ch, start + i);
        const auto spec = fft(buf);
        cdouble* dst = out.coeff_at(w, t, ch);
        for (size_t b = 0; b < out.n_bins; ++b) {
          dst[b] = spec[b];
          double scale = 2.0;
          if (b == 0 || (win % 2 == 0 && b == out.n_bins - 1)) scale = 1.0;
          out.psd(ch, b) += scale * std::norm(spec[b]) / (fs * n_obs);
        }
      }
    }
    }
  return out;
}

// Standardized per-node feature vectors for one (subject, segment, band),
// with the window-level complex spectra of the band kept for connectivity.
struct BandFeatureSet {
  std::string subject_id;
  GroupLabel group = GroupLabel::HC;
  int segment_id = 1;
  Band band;
  std::vector<std::string> channels;
  Matrix features;                 // [N x F], z-scored per node row
  std::vector<int> degenerate_rows;  // rows that had zero variance, set to 0
  size_t n_obs = 0;                // windows * tapers
  size_t n_band_bins = 0;
  std::vector<double> band_freq;
  std::vector<cdouble> band_coeff;  // [obs][channel][band bin]

  const cdouble* obs_at(size_t obs, size_t ch) const {
    return &band_coeff[(obs * channels.size() + ch) * n_band_bins];
  }
  cdouble* obs_at(size_t obs, size_t ch) {
    return &band_coeff[(obs * channels.size() + ch) * n_band_bins];
  }
};

inline BandFeatureSet extract_band_features(const MultitaperSpectra& spectra, const Band& band,
                                            const Recording& rec) {
  if (band.f_lo >= band.f_hi) throw std::invalid_argument("extract_band_features: bad band edges");
  if (band.f_lo >= spectra.sample_rate_hz / 2.0)
    throw std::invalid_argument("extract_band_features: band outside Nyquist range");

  // Bins with f_lo <= f < f_hi on the 1/window_s grid; tolerant comparisons so
  // edges landing exactly on a bin behave predictably.
  std::vector<size_t> bins;
  for (size_t b = 0; b < spectra.n_bins; ++b) {
    const double f = spectra.freq[b];
    if (f >= band.f_lo - 1e-9 && f < band.f_hi - 1e-9) bins.push_back(b);
  }
  if (bins.empty())
    throw std::invalid_argument("extract_band_features: band has zero bins at this resolution");

  BandFeatureSet out;
  out.subject_id = rec.subject_id;
  out.group = rec.group;
  out.segment_id = rec.segment_id;
  out.band = band;
  out.channels = rec.channels;
  out.n_obs = spectra.n_windows * spectra.n_tapers;
  out.n_band_bins = bins.size();
  out.band_freq.reserve(bins.size());
  for (size_t b : bins) out.band_freq.push_back(spectra.freq[b]);

  const size_t n_ch = spectra.n_channels;
  out.features = Matrix(n_ch, bins.size());
  for (size_t ch = 0; ch < n_ch; ++ch) {
    double mean = 0.0;
    for (size_t j = 0; j < bins.size(); ++j) {
      out.features(ch, j) = spectra.psd(ch, bins[j]);
      mean += out.features(ch, j);
    }
    mean /= static_cast<double>(bins.size());
    double var = 0.0;
    for (size_t j = 0; j < bins.size(); ++j) {
      const double d = out.features(ch, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(bins.size());
    const double sd = std::sqrt(var);
    // Degenerate when the row is (relatively) constant; exact zeros included.
    if (!(sd > 1e-12 * std::abs(mean))) {
      for (size_t j = 0; j < bins.size(); ++j) out.features(ch, j) = 0.0;
      out.degenerate_rows.push_back(static_cast<int>(ch));
    } else {
      for (size_t j = 0; j < bins.size(); ++j) out.features(ch, j) = (out.features(ch, j) - mean) / sd;
    }
  }

  out.band_coeff.resize(out.n_obs * n_ch * bins.size());
  size_t obs = 0;
  for (size_t w = 0; w < spectra.n_windows; ++w)
    for (size_t t = 0; t < spectra.n_tapers; ++t, ++obs)
      for (size_t ch = 0; ch < n_ch; ++ch) {
        const cdouble* src = spectra.coeff_at(w, t, ch);
        cdouble* dst = out.obs_at(obs, ch);
        for (size_t j = 0; j < bins.size(); ++j) dst[j] = src[bins[j]];
      }
  return out;
}

// JSON + packed-binary sidecar serialization.
inline void write_band_features(const BandFeatureSet& fs, const std::string& json_path,
                                const std::string& bin_path) {
  nlohmann::ordered_json j;
  j["subject_id"] = fs.subject_id;
  j["group"] = to_string(fs.group);
  j["segment_id"] = fs.segment_id;
  j["band"] = {{"name", fs.band.name}, {"f_lo", fs.band.f_lo}, {"f_hi", fs.band.f_hi}};
  j["channels"] = fs.channels;
  j["n_obs"] = fs.n_obs;
  j["n_band_bins"] = fs.n_band_bins;
  j["band_freq"] = fs.band_freq;
  j["degenerate_rows"] = fs.degenerate_rows;
  j["sidecar"] = bin_path.substr(bin_path.find_last_of('/') + 1);
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot open for writing: " + json_path);
  js << j.dump(2) << "\n";

  std::ofstream bs(bin_path, std::ios::binary);
  if (!bs) throw std::runtime_error("cannot open for writing: " + bin_path);
  bs.write(reinterpret_cast<const char*>(fs.features.v.data()),
           static_cast<std::streamsize>(fs.features.v.size() * sizeof(double)));
  bs.write(reinterpret_cast<const char*>(fs.band_coeff.data()),
           static_cast<std::streamsize>(fs.band_coeff.size() * sizeof(cdouble)));
  if (!bs) throw std::runtime_error("write failed: " + bin_path);
}

inline BandFeatureSet read_band_features(const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("cannot open: " + json_path);
  nlohmann::json j;
  js >> j;
  BandFeatureSet fs;
  fs.subject_id = j.at("subject_id").get<std::string>();
  fs.group = group_from_string(j.at("group").get<std::string>());
  fs.segment_id = j.at("segment_id").get<int>();
  fs.band = {j.at("band").at("name").get<std::string>(), j.at("band").at("f_lo").get<double>(),
             j.at("band").at("f_hi").get<double>()};
  fs.channels = j.at("channels").get<std::vector<std::string>>();
  fs.n_obs = j.at("n_obs").get<size_t>();
  fs.n_band_bins = j.at("n_band_bins").get<size_t>();
  fs.band_freq = j.at("band_freq").get<std::vector<double>>();
  fs.degenerate_rows = j.at("degenerate_rows").get<std::vector<int>>();

  const std::string dir = json_path.substr(0, json_path.find_last_of('/') + 1);
  const std::string bin_path = dir + j.at("sidecar").get<std::string>();
  std::ifstream bs(bin_path, std::ios::binary);
  if (!bs) throw std::runtime_error("cannot open sidecar: " + bin_path);
  fs.features = Matrix(fs.channels.size(), fs.n_band_bins);
  bs.read(reinterpret_cast<char*>(fs.features.v.data()),
          static_cast<std::streamsize>(fs.features.v.size() * sizeof(double)));
  fs.band_coeff.resize(fs.n_obs * fs.channels.size() * fs.n_band_bins);
  bs.read(reinterpret_cast<char*>(fs.band_coeff.data()),
          static_cast<std::streamsize>(fs.band_coeff.size() * sizeof(cdouble)));
  if (!bs) throw std::runtime_error("truncated sidecar: " + bin_path);
  return fs;
}

}  // namespace eegraph
