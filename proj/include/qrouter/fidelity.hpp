#pragma once
// Channel tomography on an initial-state subspace, average process fidelity,
// a Haar Monte Carlo cross-check, routing tables and concurrence.

#include "qrouter/core.hpp"
#include "qrouter/dynamics.hpp"
#include "qrouter/router.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace qrouter {

struct SubspaceBasis {
  QubitRegister reg;
  std::vector<std::string> bitstrings;
  std::vector<std::size_t> indices;

  SubspaceBasis(QubitRegister r, std::vector<std::string> bits) : reg(std::move(r)), bitstrings(std::move(bits)) {
    if (bitstrings.empty()) throw ValidationError("subspace basis is empty");
    for (const auto& b : bitstrings) {
      const std::size_t idx = basis_index(reg, b);
      if (std::find(indices.begin(), indices.end(), idx) != indices.end())
        throw ValidationError("subspace basis state '" + b + "' repeated");
      indices.push_back(idx);
    }
  }

  std::size_t n() const { return indices.size(); }

  /// |i><j| on the full register.
  Matrix carrier(std::size_t i, std::size_t j) const {
    const auto d = static_cast<Eigen::Index>(reg.dim());
    Matrix m = Matrix::Zero(d, d);
    m(static_cast<Eigen::Index>(indices[i]), static_cast<Eigen::Index>(indices[j])) = 1.0;
    return m;
  }
};

/// {|0,00,0>, |1,00,0>, |0,00,1>, |1,00,1>} in (input, output1, output2, control) order.
inline SubspaceBasis two_output_basis() { return {two_output_register(), {"0000", "1000", "0001", "1001"}}; }

struct ChannelOnSubspace {
  SubspaceBasis basis;
  /// images[i * n + j] = E(|i><j|) on the full register.
  std::vector<Matrix> images;
  std::map<std::string, std::string> metadata;

  const Matrix& image(std::size_t i, std::size_t j) const { return images[i * basis.n() + j]; }

  /// action(k*n + l, i*n + j) = <u_k| E(|i><j|) |u_l> with u_k = target |k>.
  Matrix action(const Operator& target) const {
    require_same_register(basis.reg, target.reg);
    const std::size_t n = basis.n();
    Matrix u(static_cast<Eigen::Index>(basis.reg.dim()), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) u.col(static_cast<Eigen::Index>(k)) = target.m.col(static_cast<Eigen::Index>(basis.indices[k]));
    const auto nn = static_cast<Eigen::Index>(n * n);
    Matrix a(nn, nn);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const Matrix proj = u.adjoint() * image(i, j) * u;
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t l = 0; l < n; ++l)
            a(static_cast<Eigen::Index>(k * n + l), static_cast<Eigen::Index>(i * n + j)) =
                proj(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      }
    return a;
  }
};

inline ChannelOnSubspace channel_tomography(const Evolver& evolve, const SubspaceBasis& basis,
                                            std::map<std::string, std::string> metadata = {}) {
  ChannelOnSubspace ch{basis, {}, std::move(metadata)};
  const std::size_t n = basis.n();
  ch.images.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) ch.images.push_back(evolve(basis.carrier(i, j)));
  return ch;
}

/// Wraps an evolver with R^dag E(rho) R, R = exp(-i diag(H) t).
inline Evolver frame_aligned(Evolver inner, const Operator& h, double t) {
  Vector phase(static_cast<Eigen::Index>(h.dim()));
  for (Eigen::Index a = 0; a < phase.size(); ++a) phase(a) = std::exp(cplx{0.0, h.m(a, a).real() * t});
  return [inner = std::move(inner), phase](const Matrix& rho) -> Matrix {
    return phase.asDiagonal() * inner(rho) * phase.conjugate().asDiagonal();
  };
}

inline double average_process_fidelity(const ChannelOnSubspace& ch, const Operator& target) {
  if (!target.is_unitary()) throw ValidationError("fidelity target must be unitary");
  const Matrix a = ch.action(target);
  const std::size_t n = ch.basis.n();
  cplx sum{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      sum += a(static_cast<Eigen::Index>(i * n + i), static_cast<Eigen::Index>(j * n + j));
      sum += a(static_cast<Eigen::Index>(i * n + j), static_cast<Eigen::Index>(i * n + j));
    }
  return sum.real() / static_cast<double>(n * (n + 1));
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Mean of <psi|U^dag E(|psi><psi|) U|psi> over Haar-random |psi> in the subspace.
inline MonteCarloEstimate haar_monte_carlo_fidelity(const Evolver& evolve, const Operator& target,
                                                    const SubspaceBasis& basis, std::size_t samples,
                                                    std::uint64_t seed) {
  if (samples < 100) throw ValidationError("Monte Carlo fidelity needs at least 100 samples");
  if (!target.is_unitary()) throw ValidationError("fidelity target must be unitary");
  require_same_register(basis.reg, target.reg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(basis.reg.dim());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Vector psi = Vector::Zero(d);
    for (std::size_t k = 0; k < basis.n(); ++k) {
      const double re = normal(rng);
      const double im = normal(rng);
      psi(static_cast<Eigen::Index>(basis.indices[k])) = cplx{re, im};
    }
    psi.normalize();
    const Vector phi = target.m * psi;
    const Matrix out = evolve(psi * psi.adjoint());
    const double f = (phi.adjoint() * out * phi)(0, 0).real();
    sum += f;
    sum_sq += f * f;
  }
  const double ns = static_cast<double>(samples);
  const double mean = sum / ns;
  const double var = std::max(0.0, (sum_sq - ns * mean * mean) / (ns - 1.0));
  return {mean, std::sqrt(var / ns), samples};
}

/// Frame-aligned channel of the two-output router over [0, t].
inline Evolver two_output_channel(const TwoOutputParams& p, const NoiseModel& noise, double t) {
  const Operator h = two_output_hamiltonian(p);
  return frame_aligned(make_channel(h, t, noise), h, t);
}

/// F-bar of the two-output router against the ideal routing unitary at t = T.
inline double two_output_fidelity(const TwoOutputParams& p, const NoiseModel& noise) {
  const double t = p.transfer_time();
  const ChannelOnSubspace ch = channel_tomography(two_output_channel(p, noise, t), two_output_basis());
  return average_process_fidelity(ch, ideal_transfer_unitary());
}

/// Final-state fidelity of frame-aligned full evolution against the effective Hamiltonian, from |1,00,c>.
inline double rwa_fidelity(const TwoOutputParams& p, int control) {
  if (control != 0 && control != 1) throw ValidationError("control must be 0 or 1");
  const QubitRegister reg = two_output_register();
  const StateVector psi0 = basis_state(reg, control == 0 ? "1000" : "1001");
  const Operator h = two_output_hamiltonian(p, reg);
  const double t = p.transfer_time();
  Vector full = propagator(h, t).m * psi0.amp;
  for (Eigen::Index a = 0; a < full.size(); ++a) full(a) *= std::exp(cplx{0.0, h.m(a, a).real() * t});
  const Vector eff = propagator(rwa_effective_hamiltonian(p, reg), t).m * psi0.amp;
  return std::norm(eff.dot(full));
}

// ---------------------------------------------------------------------------
// Routing tables.

enum class RouteKind { selected, entangled, remained, ambiguous };

inline const char* to_string(RouteKind k) {
  switch (k) {
    case RouteKind::selected: return "selected";
    case RouteKind::entangled: return "entangled";
    case RouteKind::remained: return "remained";
    case RouteKind::ambiguous: return "ambiguous";
  }
  return "?";
}

struct RoutingRow {
  std::string controls;
  double time = 0.0;
  RouteKind kind = RouteKind::ambiguous;
  std::vector<std::string> destinations;
  /// Input first, then outputs in register order.
  std::vector<std::pair<std::string, double>> populations;

  double population(std::string_view label) const {
    for (const auto& [l, p] : populations)
      if (l == label) return p;
    throw LabelError("no population recorded for '" + std::string(label) + "'");
  }
};

struct RoutingTable {
  std::vector<RoutingRow> rows;

  const RoutingRow& row(std::string_view controls) const {
    for (const auto& r : rows)
      if (r.controls == controls) return r;
    throw LabelError("no routing row for controls '" + std::string(controls) + "'");
  }
};

/// One output above 0.5 is selected; two outputs each above 0.25 summing past
/// 0.9 are entangled; input above 0.5 remained; anything else is ambiguous.
inline void classify_route(RoutingRow& row) {
  std::vector<std::pair<std::string, double>> outs(row.populations.begin() + 1, row.populations.end());
  std::vector<std::string> above_half, above_quarter;
  double quarter_sum = 0.0;
  for (const auto& [l, p] : outs) {
    if (p > 0.5) above_half.push_back(l);
    if (p > 0.25) {
      above_quarter.push_back(l);
      quarter_sum += p;
    }
  }
  if (above_half.size() == 1) {
    row.kind = RouteKind::selected;
    row.destinations = above_half;
  } else if (above_quarter.size() == 2 && quarter_sum > 0.9) {
    row.kind = RouteKind::entangled;
    row.destinations = above_quarter;
  } else if (row.populations.front().second > 0.5) {
    row.kind = RouteKind::remained;
    row.destinations = {row.populations.front().first};
  } else {
    row.kind = RouteKind::ambiguous;
    row.destinations = above_quarter;
  }
}

namespace detail {

inline RoutingRow routing_row(const Operator& h, const std::string& state_bits, const std::string& controls,
                              double t, const std::vector<std::string>& watched) {
  const StateVector psi = StateVector{h.reg, Spectral(h).apply(t, basis_state(h.reg, state_bits).amp)};
  RoutingRow row{controls, t, RouteKind::ambiguous, {}, {}};
  for (const auto& l : watched) row.populations.emplace_back(l, excited_population(psi, l));
  classify_route(row);
  return row;
}

}  // namespace detail

inline RoutingTable routing_table(const TwoOutputParams& p, double t) {
  const Operator h = two_output_hamiltonian(p);
  RoutingTable tab;
  for (const char* c : {"0", "1"})
    tab.rows.push_back(detail::routing_row(h, std::string("100") + c, c, t,
                                           {roles::kInput, roles::kOutput1, roles::kOutput2}));
  return tab;
}

inline RoutingTable routing_table(const TwoOutputParams& p) { return routing_table(p, p.transfer_time()); }

/// Controls are written (control1, control2).
inline RoutingTable routing_table(const ThreeOutputParams& p, double t) {
  const Operator h = three_output_hamiltonian(p);
  RoutingTable tab;
  for (const char* c : {"00", "01", "10", "11"})
    tab.rows.push_back(detail::routing_row(h, std::string("1000") + c, c, t,
                                           {roles::kInput, roles::kOutput1, roles::kOutput2, roles::kOutput3}));
  return tab;
}

/// Selective mode at T, entangle mode at T' = T / sqrt(2).
inline double default_routing_time(const ThreeOutputParams& p) {
  return p.mode == ThreeOutputMode::selective ? p.transfer_time() : p.transfer_time() / std::sqrt(2.0);
}

/// Rows that are ambiguous at the mode's routing time are re-evaluated at the
/// other characteristic time (T or T / sqrt(2)), since a pair of open outputs
/// swaps at T' and a single one at T.
inline RoutingTable routing_table(const ThreeOutputParams& p) {
  const double t = default_routing_time(p);
  const double alt = p.mode == ThreeOutputMode::selective ? p.transfer_time() / std::sqrt(2.0) : p.transfer_time();
  RoutingTable tab = routing_table(p, t);
  const RoutingTable other = routing_table(p, alt);
  for (std::size_t i = 0; i < tab.rows.size(); ++i)
    if (tab.rows[i].kind == RouteKind::ambiguous && other.rows[i].kind != RouteKind::ambiguous)
      tab.rows[i] = other.rows[i];
  return tab;
}

struct TransferPeak {
  double time = 0.0;
  double population = 0.0;
};

/// Time in (0, t_max] maximizing the summed excited population of `targets`:
/// grid scan followed by golden-section refinement around the best point.
inline TransferPeak locate_transfer_time(const Operator& h, const StateVector& psi0,
                                         const std::vector<std::string>& targets, double t_max,
                                         std::size_t scan_points = 400) {
  require_same_register(h.reg, psi0.reg);
  if (!(t_max > 0.0)) throw ValidationError("t_max must be positive");
  if (scan_points < 3) throw ValidationError("need at least 3 scan points");
  const Spectral sp(h);
  auto pop = [&](double t) {
    const StateVector s{h.reg, sp.apply(t, psi0.amp)};
    double sum = 0.0;
    for (const auto& l : targets) sum += excited_population(s, l);
    return sum;
  };
  const double step = t_max / static_cast<double>(scan_points);
  std::size_t best = 1;
  double best_val = pop(step);
  for (std::size_t k = 2; k <= scan_points; ++k) {
    const double v = pop(step * static_cast<double>(k));
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = step * static_cast<double>(best - 1), b = std::min(t_max, step * static_cast<double>(best + 1));
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = pop(c), fd = pop(d);
  while (b - a > 1e-12 * t_max) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = pop(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = pop(d);
    }
  }
  const double t = 0.5 * (a + b);
  const double v = pop(t);
  if (best_val > v) return {step * static_cast<double>(best), best_val};
  return {t, v};
}

// ---------------------------------------------------------------------------
// Entanglement.

/// Wootters concurrence of a two-qubit state.
inline double concurrence(const DensityMatrix& rho) {
  if (rho.reg.size() != 2) throw ShapeError("concurrence needs a two-qubit state");
  if (!rho.physical) throw ValidationError("concurrence needs a physical state");
  rho.validate_physical();
  Matrix yy(4, 4);
  yy.setZero();
  yy(0, 3) = -1.0;
  yy(1, 2) = 1.0;
  yy(2, 1) = 1.0;
  yy(3, 0) = -1.0;
  const Matrix tilde = yy * rho.m.conjugate() * yy;
  Eigen::ComplexEigenSolver<Matrix> es(rho.m * tilde);
  std::vector<double> lam;
  for (Eigen::Index k = 0; k < 4; ++k) lam.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(k).real())));
  std::sort(lam.rbegin(), lam.rend());
  return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

/// Two-qubit (path, control) state from a two-output router state: the path
/// qubit is |0> for the excitation in output1 and |1> for output2. The state is
/// projected onto that sector and renormalized.
inline DensityMatrix path_control_state(const StateVector& s) {
  using namespace roles;
  detail::require_roles(s.reg, {kInput, kOutput1, kOutput2, kControl});
  Vector a(4);
  for (int path = 0; path < 2; ++path)
    for (int c = 0; c < 2; ++c) {
      std::string bits(s.reg.size(), '0');
      bits[s.reg.index_of(path == 0 ? kOutput1 : kOutput2)] = '1';
      bits[s.reg.index_of(kControl)] = c == 0 ? '0' : '1';
      a(2 * path + c) = s.amp(static_cast<Eigen::Index>(basis_index(s.reg, bits)));
    }
  const double w = a.norm();
  if (w < 1e-12) throw ValidationError("state has no weight in the single-output sector");
  a /= w;
  return {QubitRegister{"path", kControl}, a * a.adjoint(), true};
}

}  // namespace qrouter
