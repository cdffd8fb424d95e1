#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/rng.hpp"

namespace eegraph {

enum class ParamType { uniform, log_uniform, int_uniform, categorical };

struct ParamDomain {
  std::string name;
  ParamType type = ParamType::uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> categories;
  // Active only when the sampled n_blocks is >= this value (0 = always).
  int requires_blocks = 0;
};

struct SearchSpace {
  std::vector<ParamDomain> params;

  const ParamDomain& domain(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw std::invalid_argument("SearchSpace: unknown parameter " + name);
  }

  // The tuned set: dropout, ASAP ratio, block count, per-block widths and
  // propagation depths, learning rate, batch size, plus the kNN K.
  static SearchSpace default_space() {
    SearchSpace s;
    s.params.push_back({"dropout", ParamType::uniform, 0.1, 0.5, {}, 0});
    s.params.push_back({"asap_ratio", ParamType::uniform, 0.1, 1.0, {}, 0});
    s.params.push_back({"n_blocks", ParamType::int_uniform, 1, 3, {}, 0});
    for (int b = 1; b <= 3; ++b) {
      s.params.push_back(
          {"out_channels_" + std::to_string(b), ParamType::int_uniform, 8, 256, {}, b});
      s.params.push_back(
          {"prop_steps_" + std::to_string(b), ParamType::int_uniform, 1, 17, {}, b});
    }
    s.params.push_back({"lr", ParamType::log_uniform, 1e-4, 1e-2, {}, 0});
    s.params.push_back({"batch_size", ParamType::categorical, 0, 0, {16, 32, 64}, 0});
    s.params.push_back({"k_neighbors", ParamType::int_uniform, 5, 17, {}, 0});
    return s;
  }
};

// A hyperparameter assignment; conditional parameters are simply absent.
using Assignment = std::map<std::string, double>;

enum class TrialState { running, complete, failed };

struct Trial {
  int id = 0;
  uint64_t seed = 0;
  Assignment assignment;
  std::array<double, 4> objectives{};  // maximized: AUC, precision, specificity, recall
  TrialState state = TrialState::running;
};

// a dominates b: >= in every objective, > in at least one.
inline bool dominates(const std::array<double, 4>& a, const std::array<double, 4>& b,
                      size_t n_objectives = 4) {
  bool strict = false;
  for (size_t i = 0; i < n_objectives; ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

// Fronts of nondominated sorting; front 0 is the Pareto archive.
inline std::vector<std::vector<int>> nondominated_sort(const std::vector<Trial>& trials,
                                                       size_t n_objectives = 4) {
  const size_t n = trials.size();
  std::vector<int> dominated_by(n, 0);
  std::vector<std::vector<int>> dominates_list(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(trials[i].objectives, trials[j].objectives, n_objectives)) {
        dominates_list[i].push_back(static_cast<int>(j));
        ++dominated_by[j];
      }
    }
  std::vector<std::vector<int>> fronts;
  std::vector<int> current;
  for (size_t i = 0; i < n; ++i)
    if (dominated_by[i] == 0) current.push_back(static_cast<int>(i));
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<int> next;
    for (int i : current)
      for (int j : dominates_list[static_cast<size_t>(i)])
        if (--dominated_by[static_cast<size_t>(j)] == 0) next.push_back(j);
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

// NSGA-II crowding distance within one front.
inline std::vector<double> crowding_distance(const std::vector<Trial>& trials,
                                             const std::vector<int>& front,
                                             size_t n_objectives = 4) {
  std::vector<double> dist(front.size(), 0.0);
  if (front.size() <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  for (size_t obj = 0; obj < n_objectives; ++obj) {
    std::vector<size_t> order(front.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return trials[static_cast<size_t>(front[a])].objectives[obj] <
             trials[static_cast<size_t>(front[b])].objectives[obj];
    });
    const double lo = trials[static_cast<size_t>(front[order.front()])].objectives[obj];
    const double hi = trials[static_cast<size_t>(front[order.back()])].objectives[obj];
    if (hi - lo < 1e-300) continue;  // degenerate objective: no information
    dist[order.front()] = std::numeric_limits<double>::infinity();
    dist[order.back()] = std::numeric_limits<double>::infinity();
    for (size_t r = 1; r + 1 < order.size(); ++r)
      dist[order[r]] += (trials[static_cast<size_t>(front[order[r + 1]])].objectives[obj] -
                         trials[static_cast<size_t>(front[order[r - 1]])].objectives[obj]) /
                        (hi - lo);
  }
  return dist;
}

// Split complete trials into "good" (top ceil(gamma*n) by dominance rank then
// crowding distance, insertion order last) and "bad" (the rest).
inline std::pair<std::vector<const Trial*>, std::vector<const Trial*>> split_observations(
    const std::vector<Trial>& trials, double gamma, size_t n_objectives = 4) {
  if (trials.size() < 2) throw std::invalid_argument("split_observations: need >= 2 trials");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw std::invalid_argument("split_observations: gamma must be in (0,1)");
  const size_t n_good =
      static_cast<size_t>(std::ceil(gamma * static_cast<double>(trials.size()) - 1e-12));

  const auto fronts = nondominated_sort(trials, n_objectives);
  std::vector<int> rank(trials.size(), 0);
  std::vector<double> crowd(trials.size(), 0.0);
  for (size_t f = 0; f < fronts.size(); ++f) {
    const auto cd = crowding_distance(trials, fronts[f], n_objectives);
    for (size_t i = 0; i < fronts[f].size(); ++i) {
      rank[static_cast<size_t>(fronts[f][i])] = static_cast<int>(f);
      crowd[static_cast<size_t>(fronts[f][i])] = cd[i];
    }
  }
  std::vector<size_t> order(trials.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (rank[a] != rank[b]) return rank[a] < rank[b];
    if (crowd[a] != crowd[b]) return crowd[a] > crowd[b];
    return a < b;  // documented tie-break: insertion order
  });
  std::vector<const Trial*> good, bad;
  for (size_t i = 0; i < order.size(); ++i)
    (i < n_good ? good : bad).push_back(&trials[order[i]]);
  return {good, bad};
}

// One-dimensional Parzen estimator over a parameter domain: a flat prior
// component plus one truncated Gaussian per observation (log-space for
// log-uniform parameters). Integer domains round the continuous model with
// the mass renormalized over [lo-1/2, hi+1/2]; categoricals are
// Dirichlet-smoothed counts.
class ParzenDensity {
 public:
  // prior_mass is the mixture weight of the flat prior component; by default
  // the prior counts as one extra observation. When comparing two densities
  // (the l/g ratio) both sides must be built with the same prior_mass, or
  // regions without observations score as (n_bad+1)/(n_good+1) instead of 1.
  ParzenDensity(const ParamDomain& dom, std::vector<double> observations, double prior_mass = -1.0)
      : dom_(dom) {
    for (double o : observations) check_in_domain(o);
    prior_mass_ = prior_mass > 0.0
                      ? prior_mass
                      : 1.0 / static_cast<double>(observations.size() + 1);
    if (dom_.type == ParamType::categorical) {
      weights_.assign(dom_.categories.size(), 1.0);  // Dirichlet(1) smoothing
      for (double o : observations) weights_[category_index(o)] += 1.0;
      double total = 0.0;
      for (double w : weights_) total += w;
      for (double& w : weights_) w /= total;
      return;
    }
    lo_t_ = transform(dom_.type == ParamType::int_uniform ? dom_.lo - 0.5 : dom_.lo);
    hi_t_ = transform(dom_.type == ParamType::int_uniform ? dom_.hi + 0.5 : dom_.hi);
    for (double o : observations) centers_.push_back(transform(o));
    std::sort(centers_.begin(), centers_.end());
    // Adaptive per-center bandwidth: the larger of the gaps to the adjacent
    // centers, with the domain edges acting as virtual neighbors. Centers at
    // the edge of the explored region get wide kernels that reach into
    // unexplored space; interior centers narrow as the region fills in.
    // Clipped to [width/min(100, 1+n), width], so the floor never drops
    // below 1% of the domain width.
    const double width = hi_t_ - lo_t_;
    const double min_bw =
        width / std::min(100.0, 1.0 + static_cast<double>(centers_.size()));
    bandwidths_.resize(centers_.size());
    for (size_t i = 0; i < centers_.size(); ++i) {
      const double left = (i == 0) ? lo_t_ : centers_[i - 1];
      const double right = (i + 1 == centers_.size()) ? hi_t_ : centers_[i + 1];
      const double bw = std::max(centers_[i] - left, right - centers_[i]);
      bandwidths_[i] = std::min(width, std::max(bw, min_bw));
    }
  }

  // Density in the parameter's own units (pmf for int/categorical domains).
  double pdf(double x) const {
    if (dom_.type == ParamType::categorical) return weights_[category_index(x)];
    if (dom_.type == ParamType::int_uniform) {
      const double v = std::round(x);
      check_in_domain(v);
      return cdf_t(transform(v + 0.5)) - cdf_t(transform(v - 0.5));
    }
    check_in_domain(x);
    const double t = transform(x);
    // d/dx of the CDF in t-space: multiply by |dt/dx|.
    const double jac = dom_.type == ParamType::log_uniform ? 1.0 / x : 1.0;
    return pdf_t(t) * jac;
  }

  double sample(Rng& rng) const {
    if (dom_.type == ParamType::categorical)
      return dom_.categories[rng.categorical(weights_)];
    double t = 0.0;
    if (centers_.empty() || rng.uniform() < prior_mass_) {
      t = rng.uniform(lo_t_, hi_t_);
    } else {
      const size_t pick = rng.uniform_int(centers_.size());
      do {
        t = rng.normal(centers_[pick], bandwidths_[pick]);
      } while (t < lo_t_ || t > hi_t_);
    }
    double x = dom_.type == ParamType::log_uniform ? std::exp(t) : t;
    if (dom_.type == ParamType::int_uniform)
      x = std::min(dom_.hi, std::max(dom_.lo, std::round(x)));
    return x;
  }

 private:
  static double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

  double transform(double x) const {
    return dom_.type == ParamType::log_uniform ? std::log(x) : x;
  }

  void check_in_domain(double x) const {
    if (dom_.type == ParamType::categorical) {
      category_index(x);
      return;
    }
    if (x < dom_.lo - 1e-9 || x > dom_.hi + 1e-9)
      throw std::invalid_argument("ParzenDensity: observation outside domain for " + dom_.name);
  }

  size_t category_index(double x) const {
    for (size_t i = 0; i < dom_.categories.size(); ++i)
      if (std::abs(dom_.categories[i] - x) < 1e-9) return i;
    throw std::invalid_argument("ParzenDensity: value is not a category of " + dom_.name);
  }

  // Mixture density/CDF in t-space: flat prior with mass prior_mass_, the
  // rest split equally over truncated Gaussians at the observations.
  double pdf_t(double t) const {
    double p = prior_mass_ / (hi_t_ - lo_t_);
    if (centers_.empty()) return p;
    const double w = (1.0 - prior_mass_) / static_cast<double>(centers_.size());
    for (size_t i = 0; i < centers_.size(); ++i) {
      const double bw = bandwidths_[i];
      const double za = (lo_t_ - centers_[i]) / bw;
      const double zb = (hi_t_ - centers_[i]) / bw;
      const double norm = phi(zb) - phi(za);
      const double z = (t - centers_[i]) / bw;
      p += w * std::exp(-0.5 * z * z) / (bw * std::sqrt(2.0 * 3.14159265358979323846) * norm);
    }
    return p;
  }

  double cdf_t(double t) const {
    t = std::min(hi_t_, std::max(lo_t_, t));
    double c = prior_mass_ * (t - lo_t_) / (hi_t_ - lo_t_);
    if (centers_.empty()) return c;
    const double w = (1.0 - prior_mass_) / static_cast<double>(centers_.size());
    for (size_t i = 0; i < centers_.size(); ++i) {
      const double bw = bandwidths_[i];
      const double za = (lo_t_ - centers_[i]) / bw;
      const double zb = (hi_t_ - centers_[i]) / bw;
      const double norm = phi(zb) - phi(za);
      c += w * (phi((t - centers_[i]) / bw) - phi(za)) / norm;
    }
    return c;
  }

  ParamDomain dom_;
  std::vector<double> centers_;      // transformed observations, sorted
  std::vector<double> bandwidths_;   // per center
  double prior_mass_ = 1.0;
  double lo_t_ = 0.0, hi_t_ = 1.0;
  std::vector<double> weights_;  // categorical only
};

struct MotpeOptions {
  int n_candidates = 24;
  int n_startup = 10;
  double gamma = 0.1;
  size_t n_objectives = 4;
};

namespace detail {

inline double sample_uniform_in_domain(const ParamDomain& d, Rng& rng) {
  switch (d.type) {
    case ParamType::uniform:
      return rng.uniform(d.lo, d.hi);
    case ParamType::log_uniform:
      return std::exp(rng.uniform(std::log(d.lo), std::log(d.hi)));
    case ParamType::int_uniform:
      return d.lo + static_cast<double>(rng.uniform_int(
                        static_cast<uint64_t>(d.hi - d.lo) + 1));
    case ParamType::categorical:
      return d.categories[rng.uniform_int(d.categories.size())];
  }
  throw std::logic_error("unreachable");
}

inline bool domain_active(const ParamDomain& d, const Assignment& partial) {
  if (d.requires_blocks == 0) return true;
  const auto it = partial.find("n_blocks");
  if (it == partial.end()) return false;
  return static_cast<int>(std::llround(it->second)) >= d.requires_blocks;
}

}  // namespace detail

// MOTPE suggestion: uniform during startup, then per parameter the argmax of
// l(x)/g(x) over n_candidates samples drawn from the "good" density l.
// Parameters are visited in space order, so n_blocks is fixed before its
// conditional children are considered.
inline Assignment suggest(const std::vector<Trial>& history, const SearchSpace& space, Rng& rng,
                          const MotpeOptions& opt = {}) {
  std::vector<Trial> complete;
  for (const auto& t : history)
    if (t.state == TrialState::complete) complete.push_back(t);

  Assignment out;
  if (complete.size() < static_cast<size_t>(opt.n_startup) || complete.size() < 2) {
    for (const auto& d : space.params)
      if (detail::domain_active(d, out)) out[d.name] = detail::sample_uniform_in_domain(d, rng);
    return out;
  }

  const auto [good, bad] = split_observations(complete, opt.gamma, opt.n_objectives);
  for (const auto& d : space.params) {
    if (!detail::domain_active(d, out)) continue;
    std::vector<double> obs_l, obs_g;
    for (const Trial* t : good) {
      const auto it = t->assignment.find(d.name);
      if (it != t->assignment.end()) obs_l.push_back(it->second);
    }
    for (const Trial* t : bad) {
      const auto it = t->assignment.find(d.name);
      if (it != t->assignment.end()) obs_g.push_back(it->second);
    }
    // Shared prior mass so the density ratio is 1, not a count artifact, away
    // from all observations.
    const double prior_mass = 1.0 / static_cast<double>(obs_l.size() + 1);
    const ParzenDensity l(d, obs_l, prior_mass);
    const ParzenDensity g(d, obs_g, prior_mass);
    double best_x = 0.0, best_ratio = -1.0;
    for (int c = 0; c < opt.n_candidates; ++c) {
      const double x = l.sample(rng);
      const double ratio = l.pdf(x) / std::max(g.pdf(x), 1e-300);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best_x = x;
      }
    }
    out[d.name] = best_x;
  }
  return out;
}

// Archive of nondominated complete trials; trials with equal objective
// vectors are all retained (equality is not dominance).
struct ParetoArchive {
  std::vector<Trial> members;
  size_t n_objectives = 4;

  void insert(const Trial& t) {
    if (t.state != TrialState::complete) return;
    for (const auto& m : members)
      if (dominates(m.objectives, t.objectives, n_objectives)) return;
    std::vector<Trial> kept;
    for (auto& m : members)
      if (!dominates(t.objectives, m.objectives, n_objectives)) kept.push_back(std::move(m));
    kept.push_back(t);
    members = std::move(kept);
  }
};

// Exact hypervolume (maximization) by recursive objective slicing; fine for
// the <= 4 objectives used here.
inline double hypervolume(const std::vector<std::array<double, 4>>& points,
                          const std::array<double, 4>& reference, size_t n_objectives = 4) {
  if (n_objectives < 1 || n_objectives > 4)
    throw std::invalid_argument("hypervolume: need 1..4 objectives");
  for (const auto& p : points)
    for (size_t d = 0; d < n_objectives; ++d)
      if (p[d] < reference[d])
        throw std::invalid_argument("hypervolume: reference point is not dominated");
  if (points.empty()) return 0.0;

  struct Rec {
    static double run(std::vector<std::array<double, 4>> pts, const std::array<double, 4>& ref,
                      size_t dim) {
      if (pts.empty()) return 0.0;
      if (dim == 1) {
        double mx = ref[0];
        for (const auto& p : pts) mx = std::max(mx, p[0]);
        return mx - ref[0];
      }
      const size_t d = dim - 1;
      std::sort(pts.begin(), pts.end(),
                [d](const auto& a, const auto& b) { return a[d] > b[d]; });
      double total = 0.0;
      std::vector<std::array<double, 4>> active;
      for (size_t i = 0; i < pts.size(); ++i) {
        active.push_back(pts[i]);
        const double top = pts[i][d];
        const double bottom = (i + 1 < pts.size()) ? pts[i + 1][d] : ref[d];
        if (top - bottom > 0.0) total += (top - bottom) * run(active, ref, d);
      }
      return total;
    }
  };
  return Rec::run(points, reference, n_objectives);
}

inline double hypervolume(const std::vector<Trial>& front, const std::array<double, 4>& reference,
                          size_t n_objectives = 4) {
  std::vector<std::array<double, 4>> pts;
  for (const auto& t : front) pts.push_back(t.objectives);
  return hypervolume(pts, reference, n_objectives);
}

// JSON-lines trial journal.
inline nlohmann::ordered_json trial_to_json(const Trial& t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["seed"] = t.seed;
  j["state"] = t.state == TrialState::complete ? "complete"
               : t.state == TrialState::failed ? "failed"
                                               : "running";
  j["assignment"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : t.assignment) j["assignment"][k] = v;
  if (t.state == TrialState::complete)
    j["objectives"] = {t.objectives[0], t.objectives[1], t.objectives[2], t.objectives[3]};
  else
    j["objectives"] = nullptr;
  return j;
}

inline Trial trial_from_json(const nlohmann::json& j) {
  Trial t;
  t.id = j.at("id").get<int>();
  t.seed = j.at("seed").get<uint64_t>();
  const std::string st = j.at("state").get<std::string>();
  t.state = st == "complete" ? TrialState::complete
            : st == "failed" ? TrialState::failed
                             : TrialState::running;
  for (const auto& [k, v] : j.at("assignment").items()) t.assignment[k] = v.get<double>();
  if (!j.at("objectives").is_null())
    for (size_t i = 0; i < 4; ++i) t.objectives[i] = j.at("objectives")[i].get<double>();
  return t;
}

inline void append_trial_journal(const std::string& path, const Trial& t) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open journal for append: " + path);
  os << trial_to_json(t).dump() << "\n";
}

inline std::vector<Trial> read_trial_journal(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open journal: " + path);
  std::vector<Trial> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(trial_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace eegraph
