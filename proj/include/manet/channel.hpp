// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "manet/common.hpp"
#include "manet/rng.hpp"
#include "manet/topology.hpp"

namespace manet {

struct SnrPoint {
  double snr_db = 0.0;
};

// SNR is defined against unit channel variance and unit power budget, so
// the per-band noise power is the only free quantity.
inline double noise_variance_from_snr(double snr_db) {
  return std::pow(10.0, -snr_db / 10.0);
}

// Complex link gains for every (band, unordered edge) plus per-band noise
// power. Storing one value per unordered edge makes reciprocity structural:
// h_{i->j} and h_{j->i} are the same slot.
struct CsiTensor {
  int bands = 0;
  // Band-major: gains[b * E + e] where e indexes Topology::edges.
  std::vector<std::complex<double>> gains;
  std::vector<double> noise_variance;  // length bands, all > 0

  std::complex<double> gain(int band, int edge) const {
    return gains[static_cast<std::size_t>(band) * edge_count() +
                 static_cast<std::size_t>(edge)];
  }

  std::size_t edge_count() const {
    return bands > 0 ? gains.size() / static_cast<std::size_t>(bands) : 0;
  }
};

inline void check_csi(const CsiTensor& csi, const Topology& t) {
  if (csi.bands < 1) throw ContractError("csi: needs at least one band");
  if (csi.gains.size() !=
      static_cast<std::size_t>(csi.bands) * t.edges.size())
    throw ContractError("csi: gain count does not match bands * edges");
  if (csi.noise_variance.size() != static_cast<std::size_t>(csi.bands))
    throw ContractError("csi: noise variance count does not match bands");
  for (double v : csi.noise_variance)
    if (!(v > 0.0)) throw ContractError("csi: noise variance must be positive");
}

// Gain between two adjacent nodes; direction independent by construction.
inline std::complex<double> link_gain(const CsiTensor& csi, const Topology& t,
                                      int band, int i, int j) {
  const int e = t.edge_id(i, j);
  if (e < 0) throw ContractError("link_gain: nodes are not adjacent");
  return csi.gain(band, e);
}

// Unit-variance Rayleigh fading, i.i.d. across bands and edges. Every band
// shares the same noise power 10^(-snr_db/10).
inline CsiTensor sample_rayleigh(const Topology& t, int bands, SnrPoint snr,
                                 Rng& rng) {
  if (bands < 1) throw ContractError("sample_rayleigh: bands must be >= 1");
  CsiTensor csi;
  csi.bands = bands;
  csi.gains.reserve(static_cast<std::size_t>(bands) * t.edges.size());
  for (int b = 0; b < bands; ++b)
    for (std::size_t e = 0; e < t.edges.size(); ++e)
      csi.gains.push_back(rng.cnormal(1.0));
  csi.noise_variance.assign(static_cast<std::size_t>(bands),
                            noise_variance_from_snr(snr.snr_db));
  return csi;
}

// Adds complex Gaussian error of variance sigma_train^2 to each unordered
// edge gain. Noise powers are not touched.
inline CsiTensor perturb_csi(const CsiTensor& csi, double sigma_train,
                             Rng& rng) {
  if (sigma_train < 0.0)
    throw ContractError("perturb_csi: sigma_train must be >= 0");
  if (sigma_train == 0.0) return csi;
  CsiTensor out = csi;
  const double var = sigma_train * sigma_train;
  for (auto& h : out.gains) h += rng.cnormal(var);
  return out;
}

inline double lmmse_shrinkage(double prior_var, double noise_var,
                              int n_pilots) {
  return prior_var / (prior_var + noise_var / n_pilots);
}

// Simulates n_pilots unit-amplitude pilot observations per (band, edge) and
// returns the Bayesian estimate with prior variance 1 (the Rayleigh
// generator's variance). Pilot noise reuses the band's data noise power.
inline CsiTensor lmmse_estimate(const CsiTensor& csi, int n_pilots, Rng& rng) {
  if (n_pilots < 1) throw ContractError("lmmse_estimate: need >= 1 pilot");
  constexpr double kPriorVar = 1.0;
  CsiTensor out = csi;
  const std::size_t edges = csi.edge_count();
  for (int b = 0; b < csi.bands; ++b) {
    const double noise_var = csi.noise_variance[static_cast<std::size_t>(b)];
    const double shrink = lmmse_shrinkage(kPriorVar, noise_var, n_pilots);
    for (std::size_t e = 0; e < edges; ++e) {
      std::complex<double> acc = 0.0;
      for (int k = 0; k < n_pilots; ++k)
        acc += csi.gain(b, static_cast<int>(e)) + rng.cnormal(noise_var);
      out.gains[static_cast<std::size_t>(b) * edges + e] =
          shrink * (acc / static_cast<double>(n_pilots));
    }
  }
  return out;
}

// Reorders the edge axis to match a relabeled topology. perm maps old node
// ids to new ones; the returned tensor indexes edges of relabel(t, perm).
inline CsiTensor relabel(const CsiTensor& csi, const Topology& t,
                         const Topology& relabeled,
                         const std::vector<int>& perm) {
  check_csi(csi, t);
  CsiTensor out = csi;
  const std::size_t edges = t.edges.size();
  for (std::size_t e = 0; e < edges; ++e) {
    const auto [a, b] = t.edges[e];
    const int ne = relabeled.edge_id(perm[static_cast<std::size_t>(a)],
                                     perm[static_cast<std::size_t>(b)]);
    if (ne < 0) throw ContractError("relabel: edge missing after relabeling");
    for (int band = 0; band < csi.bands; ++band)
      out.gains[static_cast<std::size_t>(band) * edges +
                static_cast<std::size_t>(ne)] =
          csi.gains[static_cast<std::size_t>(band) * edges + e];
  }
  return out;
}

}  // namespace manet
