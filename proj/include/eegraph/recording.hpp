#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/mat.hpp"
#include "eegraph/rng.hpp"

namespace eegraph {

enum class GroupLabel { HC = 0, AD = 1 };

inline std::string to_string(GroupLabel g) { return g == GroupLabel::HC ? "HC" : "AD"; }

inline GroupLabel group_from_string(const std::string& s) {
  if (s == "HC") return GroupLabel::HC;
  if (s == "AD") return GroupLabel::AD;
  throw std::invalid_argument("unknown group label: " + s);
}

// One multichannel recording, already cleaned; the ingestion contract assumes
// artifact removal happened upstream.
struct Recording {
  std::string subject_id;
  GroupLabel group = GroupLabel::HC;
  int segment_id = 1;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channels;
  Matrix data;  // [n_channels x n_samples], microvolts

  size_t n_channels() const { return channels.size(); }
  size_t n_samples() const { return data.cols; }

  void validate() const {
    if (sample_rate_hz <= 0.0) throw std::invalid_argument("Recording: sample_rate_hz must be > 0");
    if (channels.empty()) throw std::invalid_argument("Recording: no channels");
    if (data.rows != channels.size())
      throw std::invalid_argument("Recording: data rows do not match channel count");
    std::set<std::string> names(channels.begin(), channels.end());
    if (names.size() != channels.size())
      throw std::invalid_argument("Recording: duplicate channel names");
    if (segment_id < 1 || segment_id > 3)
      throw std::invalid_argument("Recording: segment_id must be in {1,2,3}");
    if (static_cast<double>(data.cols) < sample_rate_hz * 5.0)
      throw std::invalid_argument("Recording: shorter than 5 s (one analysis window)");
  }
};

struct MontageChannel {
  std::string name;
  double x = 0.0;
  double y = 0.0;
};

// 2-D unit-disc projection of the 10-20 layout for the 17 channels kept after
// dropping the bad channels T6 and O2.
struct Montage {
  std::vector<MontageChannel> channels;

  void validate() const {
    for (const auto& c : channels)
      if (c.x * c.x + c.y * c.y > 1.0 + 1e-12)
        throw std::invalid_argument("Montage: channel " + c.name + " outside unit disc");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(channels.size());
    for (const auto& c : channels) out.push_back(c.name);
    return out;
  }
};

inline Montage default_montage() {
  Montage m;
  m.channels = {
      {"Fp1", -0.28, 0.86}, {"Fp2", 0.28, 0.86},  {"F7", -0.73, 0.53},  {"F3", -0.37, 0.45},
      {"Fz", 0.00, 0.45},   {"F4", 0.37, 0.45},   {"F8", 0.73, 0.53},   {"T3", -0.90, 0.00},
      {"C3", -0.45, 0.00},  {"Cz", 0.00, 0.00},   {"C4", 0.45, 0.00},   {"T4", 0.90, 0.00},
      {"T5", -0.73, -0.53}, {"P3", -0.37, -0.45}, {"Pz", 0.00, -0.45},  {"P4", 0.37, -0.45},
      {"O1", -0.28, -0.86},
  };
  m.validate();
  return m;
}

// Synthetic cohort description. Stands in for clinical acquisition: each
// channel is a sum of per-band narrowband oscillators (wandering-phase
// sinusoids) plus Gaussian noise, and listed channel pairs get their phase in
// `coupling_band` blended toward the first channel with a group-dependent
// weight, which makes PLV/PLI group-separable in that band.
struct SynthSpec {
  int n_subjects_per_group = 12;
  double duration_s = 30.0;
  double sample_rate_hz = 256.0;
  double coupling_strength_ad = 0.9;
  double coupling_strength_hc = 0.0;
  // C4-F8 and C4-Fp2: the right somatosensory-to-frontal connections most
  // separable between groups.
  std::vector<std::pair<int, int>> coupled_pairs = {{10, 6}, {10, 1}};
  std::string coupling_band = "alpha";
  double noise_sigma = 0.5;
  uint64_t rng_seed = 1;

  void validate(size_t n_channels) const {
    if (n_subjects_per_group < 1) throw std::invalid_argument("SynthSpec: need >=1 subject per group");
    if (duration_s < 10.0) throw std::invalid_argument("SynthSpec: duration_s must be >= 10");
    if (sample_rate_hz <= 0.0) throw std::invalid_argument("SynthSpec: sample_rate_hz must be > 0");
    for (double c : {coupling_strength_ad, coupling_strength_hc})
      if (c < 0.0 || c > 1.0) throw std::invalid_argument("SynthSpec: coupling must be in [0,1]");
    for (auto [a, b] : coupled_pairs)
      if (a < 0 || b < 0 || a >= static_cast<int>(n_channels) || b >= static_cast<int>(n_channels) || a == b)
        throw std::invalid_argument("SynthSpec: coupled pair index out of range");
    if (noise_sigma < 0.0) throw std::invalid_argument("SynthSpec: noise_sigma must be >= 0");
  }

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec s;
    if (j.contains("n_subjects_per_group")) s.n_subjects_per_group = j.at("n_subjects_per_group").get<int>();
    if (j.contains("duration_s")) s.duration_s = j.at("duration_s").get<double>();
    if (j.contains("sample_rate_hz")) s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    if (j.contains("coupling_strength_ad")) s.coupling_strength_ad = j.at("coupling_strength_ad").get<double>();
    if (j.contains("coupling_strength_hc")) s.coupling_strength_hc = j.at("coupling_strength_hc").get<double>();
    if (j.contains("coupled_pairs")) {
      s.coupled_pairs.clear();
      for (const auto& p : j.at("coupled_pairs"))
        s.coupled_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
    if (j.contains("coupling_band")) s.coupling_band = j.at("coupling_band").get<std::string>();
    if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("rng_seed")) s.rng_seed = j.at("rng_seed").get<uint64_t>();
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["n_subjects_per_group"] = n_subjects_per_group;
    j["duration_s"] = duration_s;
    j["sample_rate_hz"] = sample_rate_hz;
    j["coupling_strength_ad"] = coupling_strength_ad;
    j["coupling_strength_hc"] = coupling_strength_hc;
    j["coupled_pairs"] = nlohmann::ordered_json::array();
    for (auto [a, b] : coupled_pairs) j["coupled_pairs"].push_back({a, b});
    j["coupling_band"] = coupling_band;
    j["noise_sigma"] = noise_sigma;
    j["rng_seed"] = rng_seed;
    return j;
  }
};

enum class RecordingFormat { csv, binary };

namespace detail {

inline void write_csv(const Recording& rec, std::ostream& os) {
  os << "# rate=" << rec.sample_rate_hz << " subject=" << rec.subject_id
     << " group=" << to_string(rec.group) << " segment=" << rec.segment_id << "\n";
  for (size_t c = 0; c < rec.channels.size(); ++c)
    os << rec.channels[c] << (c + 1 < rec.channels.size() ? "," : "\n");
  char buf[32];
  for (size_t c = 0; c < rec.data.rows; ++c) {
    for (size_t s = 0; s < rec.data.cols; ++s) {
      std::snprintf(buf, sizeof(buf), "%.17g", rec.data(c, s));
      os << buf << (s + 1 < rec.data.cols ? "," : "\n");
    }
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline Recording read_csv(std::istream& is, const std::string& path) {
  std::string header;
  if (!std::getline(is, header) || header.empty())
    throw std::runtime_error(path + ": no header");
  if (header.rfind("# rate=", 0) != 0)
    throw std::runtime_error(path + ": malformed header (expected '# rate=<hz>')");
  Recording rec;
  {
    std::istringstream hs(header.substr(2));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "rate") rec.sample_rate_hz = std::stod(val);
      else if (key == "subject") rec.subject_id = val;
      else if (key == "group") rec.group = group_from_string(val);
      else if (key == "segment") rec.segment_id = std::stoi(val);
    }
  }
  if (rec.sample_rate_hz <= 0.0) throw std::runtime_error(path + ": malformed header (bad rate)");
  std::string chan_line;
  if (!std::getline(is, chan_line) || chan_line.empty())
    throw std::runtime_error(path + ": malformed header (missing channel names)");
  rec.channels = split_csv_line(chan_line);

  std::vector<std::vector<double>> rows;
  std::string line;
  size_t row_idx = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      try {
        size_t pos = 0;
        v = std::stod(cells[j], &pos);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": unparseable sample at channel " + std::to_string(row_idx) +
                                 ", sample " + std::to_string(j));
      }
      if (!std::isfinite(v))
        throw std::runtime_error(path + ": non-finite sample at channel " + std::to_string(row_idx) +
                                 ", sample " + std::to_string(j));
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path + ": ragged row at channel " + std::to_string(row_idx));
    rows.push_back(std::move(row));
    ++row_idx;
  }
  if (rows.size() != rec.channels.size())
    throw std::runtime_error(path + ": expected " + std::to_string(rec.channels.size()) +
                             " data rows, got " + std::to_string(rows.size()));
  rec.data = Matrix(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) rec.data(i, j) = rows[i][j];
  rec.validate();
  return rec;
}

constexpr char kBinaryMagic[4] = {'E', 'E', 'G', 'R'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error(path + ": truncated binary recording");
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& path) {
  const auto n = get<uint32_t>(is, path);
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw std::runtime_error(path + ": truncated binary recording");
  return s;
}

inline void write_binary(const Recording& rec, std::ostream& os) {
  os.write(kBinaryMagic, 4);
  put<uint32_t>(os, 1);  // version
  put<double>(os, rec.sample_rate_hz);
  put<uint32_t>(os, static_cast<uint32_t>(rec.group));
  put<int32_t>(os, rec.segment_id);
  put_string(os, rec.subject_id);
  put<uint32_t>(os, static_cast<uint32_t>(rec.channels.size()));
  put<uint64_t>(os, rec.data.cols);
  for (const auto& c : rec.channels) put_string(os, c);
  os.write(reinterpret_cast<const char*>(rec.data.v.data()),
           static_cast<std::streamsize>(rec.data.v.size() * sizeof(double)));
}

inline Recording read_binary(std::istream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0)
    throw std::runtime_error(path + ": no header");
  const auto version = get<uint32_t>(is, path);
  if (version != 1) throw std::runtime_error(path + ": unsupported version");
  Recording rec;
  rec.sample_rate_hz = get<double>(is, path);
  rec.group = static_cast<GroupLabel>(get<uint32_t>(is, path));
  rec.segment_id = get<int32_t>(is, path);
  rec.subject_id = get_string(is, path);
  const auto n_ch = get<uint32_t>(is, path);
  const auto n_s = get<uint64_t>(is, path);
  for (uint32_t i = 0; i < n_ch; ++i) rec.channels.push_back(get_string(is, path));
  rec.data = Matrix(n_ch, n_s);
  if (!is.read(reinterpret_cast<char*>(rec.data.v.data()),
               static_cast<std::streamsize>(rec.data.v.size() * sizeof(double))))
    throw std::runtime_error(path + ": truncated binary recording");
  for (size_t c = 0; c < rec.data.rows; ++c)
    for (size_t s = 0; s < rec.data.cols; ++s)
      if (!std::isfinite(rec.data(c, s)))
        throw std::runtime_error(path + ": non-finite sample at channel " + std::to_string(c) +
                                 ", sample " + std::to_string(s));
  rec.validate();
  return rec;
}

}  // namespace detail

inline void write_recording(const Recording& rec, const std::string& path, RecordingFormat format) {
  rec.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  if (format == RecordingFormat::csv)
    detail::write_csv(rec, os);
  else
    detail::write_binary(rec, os);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Recording load_recording(const std::string& path, RecordingFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  if (is.peek() == std::ifstream::traits_type::eof()) throw std::runtime_error(path + ": no header");
  return format == RecordingFormat::csv ? detail::read_csv(is, path) : detail::read_binary(is, path);
}

namespace detail {

struct BandTone {
  double f_lo;
  double f_hi;
  double amplitude;
};

// Oscillator bank for the synthetic generator: one narrowband component per
// canonical band. Alpha is the most prominent, mimicking resting-state EEG.
inline const std::vector<std::pair<std::string, BandTone>>& synth_tones() {
  static const std::vector<std::pair<std::string, BandTone>> tones = {
      {"delta", {0.5, 4.0, 1.0}},
      {"theta", {4.0, 8.0, 0.9}},
      {"alpha", {8.0, 13.0, 1.2}},
      {"beta", {13.0, 40.0, 0.6}},
  };
  return tones;
}

}  // namespace detail

namespace detail {

// Distinct per-channel oscillator frequency inside a band, so every channel
// has an identifiable spectral signature. Channels named as the second member
// of a coupled pair adopt the first member's frequency (in the coupling band
// only), which keeps the phase blend coherent.
inline double channel_frequency(double f_lo, double f_hi, size_t channel, size_t n_channels) {
  return f_lo + (static_cast<double>(channel) + 0.5) * (f_hi - f_lo) / static_cast<double>(n_channels);
}

}  // namespace detail

// Deterministic synthetic cohort: 2 * n_subjects_per_group subjects, 3
// segments each. Coupled pairs lock with a fixed pi/4 lag so both PLV and PLI
// pick up the injected connectivity.
inline std::vector<Recording> generate_synthetic(const SynthSpec& spec) {
  const Montage montage = default_montage();
  const auto channel_names = montage.names();
  const size_t n_ch = channel_names.size();
  spec.validate(n_ch);

  const size_t n_samples = static_cast<size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
  const auto& tones = detail::synth_tones();
  size_t coupling_band_idx = tones.size();
  for (size_t b = 0; b < tones.size(); ++b)
    if (tones[b].first == spec.coupling_band) coupling_band_idx = b;
  if (coupling_band_idx == tones.size())
    throw std::invalid_argument("SynthSpec: unknown coupling_band " + spec.coupling_band);

  // Each oscillator's phase deviates from its ramp by an Ornstein-Uhlenbeck
  // process: bounded wander (stationary sd ~2.2 rad wraps the null pairs'
  // phase difference) with a ~1 s correlation time so analysis windows
  // decorrelate. A plain random walk cannot do both at once: whatever keeps
  // the null mixed also diffuses the coupled pair's residual apart.
  const double ou_sd = 2.2;   // rad
  const double ou_tau = 1.0;  // s
  const double ou_rho = std::exp(-1.0 / (spec.sample_rate_hz * ou_tau));
  const double ou_step = ou_sd * std::sqrt(1.0 - ou_rho * ou_rho);
  const double lag = 3.14159265358979323846 / 4.0;

  // Per-channel oscillator frequencies; coupled targets share the source's
  // frequency in the coupling band (group-independent, so the blend is the
  // only thing that differs between groups).
  std::vector<std::vector<double>> freq(n_ch, std::vector<double>(tones.size()));
  for (size_t c = 0; c < n_ch; ++c)
    for (size_t b = 0; b < tones.size(); ++b)
      freq[c][b] = detail::channel_frequency(tones[b].second.f_lo, tones[b].second.f_hi, c, n_ch);
  for (auto [src, dst] : spec.coupled_pairs)
    freq[static_cast<size_t>(dst)][coupling_band_idx] = freq[static_cast<size_t>(src)][coupling_band_idx];

  std::vector<Recording> out;
  for (int g = 0; g < 2; ++g) {
    const GroupLabel group = static_cast<GroupLabel>(g);
    const double coupling = (group == GroupLabel::AD) ? spec.coupling_strength_ad : spec.coupling_strength_hc;
    for (int s = 0; s < spec.n_subjects_per_group; ++s) {
      for (int seg = 1; seg <= 3; ++seg) {
        Rng rng(derive_seed(spec.rng_seed, static_cast<uint64_t>(g), static_cast<uint64_t>(s),
                            static_cast<uint64_t>(seg)));
        // Total phase per (channel, band, sample): the frequency ramp plus a
        // random initial phase plus the OU deviation.
        std::vector<std::vector<std::vector<double>>> phase(
            n_ch, std::vector<std::vector<double>>(tones.size()));
        for (size_t c = 0; c < n_ch; ++c) {
          for (size_t b = 0; b < tones.size(); ++b) {
            const double phase0 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            double dev = ou_sd * rng.normal();  // stationary start
            auto& ph = phase[c][b];
            ph.resize(n_samples);
            for (size_t t = 0; t < n_samples; ++t) {
              ph[t] = 2.0 * 3.14159265358979323846 * freq[c][b] *
                          (static_cast<double>(t) / spec.sample_rate_hz) +
                      phase0 + dev;
              dev = ou_rho * dev + ou_step * rng.normal();
            }
          }
        }
        for (auto [src, dst] : spec.coupled_pairs) {
          auto& pd = phase[static_cast<size_t>(dst)][coupling_band_idx];
          const auto& ps = phase[static_cast<size_t>(src)][coupling_band_idx];
          for (size_t t = 0; t < n_samples; ++t)
            pd[t] = (1.0 - coupling) * pd[t] + coupling * (ps[t] + lag);
        }
        Recording rec;
        rec.subject_id = (group == GroupLabel::AD ? "ad" : "hc") + std::string(s < 9 ? "0" : "") +
                         std::to_string(s + 1);
        rec.group = group;
        rec.segment_id = seg;
        rec.sample_rate_hz = spec.sample_rate_hz;
        rec.channels = channel_names;
        rec.data = Matrix(n_ch, n_samples);
        for (size_t c = 0; c < n_ch; ++c)
          for (size_t t = 0; t < n_samples; ++t) {
            double v = 0.0;
            for (size_t b = 0; b < tones.size(); ++b)
              v += tones[b].second.amplitude * std::sin(phase[c][b][t]);
            rec.data(c, t) = v;
          }
        if (spec.noise_sigma > 0.0)
          for (size_t c = 0; c < n_ch; ++c)
            for (size_t t = 0; t < n_samples; ++t)
              rec.data(c, t) += spec.noise_sigma * rng.normal();
        rec.validate();
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace eegraph
