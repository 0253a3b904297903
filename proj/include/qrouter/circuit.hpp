#pragma once
// Transmon circuit of the two-output router (outputs 1, 2 and control C, input
// coupled capacitively). Capacitances in fF, energies in rad/us.

#include "qrouter/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace qrouter {

namespace constants {
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kHbar = 1.054571817e-34;              // J s
/// (2e)^2 / hbar expressed in rad/us * fF, so (2e)^2/(hbar C) = kCharging / C[fF].
inline constexpr double kCharging = 4.0 * kElementaryCharge * kElementaryCharge / kHbar * 1e-6 * 1e15;
}  // namespace constants

struct CircuitParams {
  double c_q = 0.0;  // fF, qubits 1, 2, C and input
  double c_z = 0.0;  // fF, both couplers
  double c_x = 0.0;  // fF, input coupling
  double e_i = 0.0;  // rad/us
  double e_1 = 0.0;
  double e_2 = 0.0;
  double e_c = 0.0;
  double e_z = 0.0;  // both coupler junctions

  static CircuitParams table_one() {
    using units::ghz;
    return {80.0, 13.7, 0.082, ghz(19.52), ghz(19.22), ghz(19.52), ghz(38.74), ghz(3.46)};
  }

  /// Table I with the couplers and input capacitor removed.
  static CircuitParams zero_coupler() {
    CircuitParams p = table_one();
    p.c_z = 0.0;
    p.c_x = 0.0;
    p.e_z = 0.0;
    return p;
  }

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    for (double v : {c_q, c_z, c_x, e_i, e_1, e_2, e_c, e_z})
      if (!finite(v)) throw ValidationError("circuit parameters must be finite");
    if (!(c_q > 0.0)) throw ValidationError("c_q must be positive");
    if (c_z < 0.0 || c_x < 0.0) throw ValidationError("coupling capacitances must be >= 0");
    if (!(e_i > 0.0 && e_1 > 0.0 && e_2 > 0.0 && e_c > 0.0))
      throw ValidationError("qubit junction energies must be positive");
    if (e_z < 0.0) throw ValidationError("coupler junction energy must be >= 0");
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    const double ej_min = std::min({e_1, e_2, e_c});
    if (e_z / ej_min >= 0.25) w.push_back("E_Jz / E_J >= 0.25: outside the weak-coupling regime");
    if (c_z / c_q >= 0.25) w.push_back("C_z / C_q >= 0.25: outside the weak-coupling regime");
    return w;
  }
};

/// Three-node capacitance matrix over (1, 2, C).
inline Eigen::Matrix3d capacitance_matrix(const CircuitParams& p) {
  p.validate();
  Eigen::Matrix3d c;
  c << p.c_q + p.c_z, 0.0, -p.c_z,
       0.0, p.c_q + p.c_z, -p.c_z,
       -p.c_z, -p.c_z, p.c_q + 2.0 * p.c_z;
  return c;
}

/// Four-node capacitance matrix over (I, 1, 2, C), including the input capacitors.
inline Eigen::Matrix4d full_capacitance_matrix(const CircuitParams& p) {
  p.validate();
  Eigen::Matrix4d c;
  c << p.c_q + 2.0 * p.c_x, -p.c_x, -p.c_x, 0.0,
       -p.c_x, p.c_q + p.c_z + p.c_x, 0.0, -p.c_z,
       -p.c_x, 0.0, p.c_q + p.c_z + p.c_x, -p.c_z,
       0.0, -p.c_z, -p.c_z, p.c_q + 2.0 * p.c_z;
  return c;
}

namespace detail {

template <class M>
M charging_inverse(const M& c) {
  Eigen::FullPivLU<M> lu(c);
  if (!lu.isInvertible()) throw ValidationError("capacitance matrix is singular");
  return constants::kCharging * lu.inverse();
}

}  // namespace detail

struct DerivedModeParams {
  /// (2e)^2/hbar * C^{-1}, rad/us.
  Eigen::Matrix3d cap_inv;
  std::array<double, 3> e_j_tilde{};
  std::array<double, 3> e_c{};
  std::array<double, 3> zeta{};
  std::array<double, 3> omega{};
  std::array<double, 3> alpha{};
  double omega_bar = 0.0;
  double small_delta = 0.0;
  double big_delta = 0.0;
};

inline DerivedModeParams derive_mode_params(const CircuitParams& p) {
  DerivedModeParams d;
  d.cap_inv = detail::charging_inverse(capacitance_matrix(p));
  d.e_j_tilde = {p.e_1 + p.e_z, p.e_2 + p.e_z, p.e_c + 2.0 * p.e_z};
  for (int i = 0; i < 3; ++i) {
    d.e_c[i] = d.cap_inv(i, i) / 8.0;
    d.zeta[i] = std::sqrt(d.cap_inv(i, i) / d.e_j_tilde[i]);
    d.alpha[i] = -d.e_c[i];
  }
  // Transmon 0-1 frequency sqrt(8 E_J E_C) + alpha, alpha = -E_C.
  for (int i = 0; i < 2; ++i)
    d.omega[i] = std::sqrt(8.0 * d.e_j_tilde[i] * d.e_c[i]) + d.alpha[i] - p.e_z * d.zeta[i] * d.zeta[2] / 8.0;
  d.omega[2] = std::sqrt(8.0 * d.e_j_tilde[2] * d.e_c[2]) + d.alpha[2] -
               p.e_z * (d.zeta[0] + d.zeta[1]) * d.zeta[2] / 8.0;
  d.omega_bar = 0.5 * (d.omega[0] + d.omega[1]);
  d.small_delta = 0.5 * (d.omega[0] - d.omega[1]);
  d.big_delta = d.omega[2] - d.omega_bar;
  return d;
}

struct CouplingStrengths {
  std::array<double, 2> g_z{};
  double g_x12 = 0.0;
  std::array<double, 2> g_x{};
  std::array<double, 2> g_xz{};
};

inline CouplingStrengths coupling_strengths(const CircuitParams& p, const DerivedModeParams& d) {
  CouplingStrengths g;
  const double zc = d.zeta[2];
  g.g_x12 = d.cap_inv(0, 1) / (2.0 * std::sqrt(d.zeta[0] * d.zeta[1]));
  for (int i = 0; i < 2; ++i) {
    const double zi = d.zeta[i], s = std::sqrt(zi * zc);
    g.g_z[i] = -p.e_z * zi * zc / 4.0;
    g.g_x[i] = d.cap_inv(i, 2) / (2.0 * s) - p.e_z * s / 2.0 + p.e_z * (zi + zc) * s / 16.0;
    g.g_xz[i] = p.e_z * s / 16.0;
  }
  return g;
}

struct EffectiveSpinParams {
  double delta_1 = 0.0;
  double delta_2 = 0.0;
  double delta_c = 0.0;
  std::array<double, 2> jz{};
  double jx12 = 0.0;
  double jxz12 = 0.0;
  std::array<double, 2> jx_in{};
  CouplingStrengths g;
  std::vector<std::string> warnings;
};

/// Input-output coupling C_x / (2 C~_I C~_j sqrt(zeta_I zeta_j)), with C~ the
/// diagonal of the four-node capacitance matrix and zeta from its inverse.
inline std::array<double, 2> input_couplings(const CircuitParams& p) {
  const Eigen::Matrix4d c = full_capacitance_matrix(p);
  const Eigen::Matrix4d ci = detail::charging_inverse(c);
  const std::array<double, 3> ej{p.e_i, p.e_1 + p.e_z, p.e_2 + p.e_z};
  const double zeta_in = std::sqrt(ci(0, 0) / ej[0]);
  std::array<double, 2> out{};
  for (int j = 0; j < 2; ++j) {
    const double zeta_j = std::sqrt(ci(j + 1, j + 1) / ej[static_cast<std::size_t>(j) + 1]);
    out[static_cast<std::size_t>(j)] =
        constants::kCharging * p.c_x / (2.0 * c(0, 0) * c(j + 1, j + 1) * std::sqrt(zeta_in * zeta_j));
  }
  return out;
}

/// Input qubit 0-1 frequency, sqrt(8 E_I E_CI) - E_CI from the four-node matrix.
inline double input_frequency(const CircuitParams& p) {
  const Eigen::Matrix4d ci = detail::charging_inverse(full_capacitance_matrix(p));
  const double ec = ci(0, 0) / 8.0;
  return std::sqrt(8.0 * p.e_i * ec) - ec;
}

inline EffectiveSpinParams effective_spin_params(const CircuitParams& p, const DerivedModeParams& d,
                                                 const CouplingStrengths& g) {
  const double big = d.big_delta;
  if (big == 0.0) throw ValidationError("control-output detuning Delta = 0: perturbation theory is singular");
  auto gamma = [&](int i, double n, double m) { return g.g_x[i] + g.g_xz[i] * (n * d.zeta[i] + m * d.zeta[2]); };
  auto shift = [&](int i) { return gamma(i, 1, 1) + gamma(i, 1, 3) - gamma(i, 3, 1); };

  EffectiveSpinParams e;
  e.g = g;
  e.delta_1 = -d.small_delta + g.g_z[0] / 2.0 - shift(0) / big;
  e.delta_2 = d.small_delta + g.g_z[1] / 2.0 - shift(1) / big;
  e.delta_c = (g.g_z[0] + g.g_z[1]) / 2.0 + (shift(0) + shift(1)) / big;
  for (int i = 0; i < 2; ++i) e.jz[i] = g.g_z[i] / 4.0 + (gamma(i, 3, 1) - gamma(i, 1, 3)) / (2.0 * big);
  e.jx12 = g.g_x12 - gamma(0, 1, 3) * gamma(1, 1, 3) / big;
  e.jxz12 = (gamma(0, 1, 3) * gamma(1, 1, 3) - gamma(0, 1, 1) * gamma(1, 1, 1)) / big;
  e.jx_in = input_couplings(p);

  const double gx_max = std::max(std::abs(g.g_x[0]), std::abs(g.g_x[1]));
  if (std::abs(big) < 10.0 * gx_max) e.warnings.push_back("|Delta| < 10 max|g_x|: dispersive treatment is marginal");
  const double jz_scale = std::max(std::abs(e.jz[0]), std::abs(e.jz[1]));
  for (double v : {e.jx12 + e.jxz12, e.jx12 - e.jxz12})
    if (jz_scale > 0.0 && std::abs(v) / jz_scale > 0.2) {
      e.warnings.push_back("|J^x_12 +- J^xz_12| / |J^z| > 0.2: residual output-output coupling is not small");
      break;
    }
  if (jz_scale == 0.0 && (e.jx12 != 0.0 || e.jxz12 != 0.0))
    e.warnings.push_back("J^z = 0 while the residual output-output coupling is non-zero");
  return e;
}

inline EffectiveSpinParams effective_spin_params(const CircuitParams& p) {
  const DerivedModeParams d = derive_mode_params(p);
  return effective_spin_params(p, d, coupling_strengths(p, d));
}

// ---------------------------------------------------------------------------
// Truncated bosonic Hamiltonian.

struct BosonicOperator {
  std::vector<std::string> modes;
  std::size_t levels = 0;
  Matrix m;

  std::size_t dim() const { return static_cast<std::size_t>(m.rows()); }
  std::size_t index(const std::array<int, 3>& n) const {
    return (static_cast<std::size_t>(n[0]) * levels + static_cast<std::size_t>(n[1])) * levels +
           static_cast<std::size_t>(n[2]);
  }
};

namespace detail {

/// Single-mode powers of (b^dag + b) and (b^dag - b), formed in a padded space
/// and truncated, so every kept matrix element is exact.
struct ModeOperators {
  Eigen::MatrixXd n, x1, x2, x3, x4, p1;

  explicit ModeOperators(std::size_t levels, std::size_t pad = 4) {
    const auto big = static_cast<Eigen::Index>(levels + pad);
    const auto l = static_cast<Eigen::Index>(levels);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(big, big);
    for (Eigen::Index k = 1; k < big; ++k) b(k - 1, k) = std::sqrt(static_cast<double>(k));
    const Eigen::MatrixXd x = b.transpose() + b;
    const Eigen::MatrixXd p = b.transpose() - b;
    const Eigen::MatrixXd xx = x * x;
    const Eigen::MatrixXd xxx = xx * x;
    n = (b.transpose() * b).topLeftCorner(l, l);
    x1 = x.topLeftCorner(l, l);
    x2 = xx.topLeftCorner(l, l);
    x3 = xxx.topLeftCorner(l, l);
    x4 = (xxx * x).topLeftCorner(l, l);
    p1 = p.topLeftCorner(l, l);
  }
};

inline Eigen::MatrixXd embed_mode(const Eigen::MatrixXd& op, int mode, std::size_t levels) {
  const auto l = static_cast<Eigen::Index>(levels);
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(1, 1);
  for (int k = 0; k < 3; ++k) {
    const Eigen::MatrixXd f = (k == mode) ? op : Eigen::MatrixXd::Identity(l, l);
    Eigen::MatrixXd next(out.rows() * f.rows(), out.cols() * f.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
    out = std::move(next);
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kMinCircuitLevels = 4;

/// Fourth-order expansion of the circuit Hamiltonian over modes (1, 2, C).
inline BosonicOperator full_circuit_hamiltonian(const CircuitParams& p, std::size_t levels) {
  if (levels < kMinCircuitLevels) throw ValidationError("circuit truncation needs at least 4 levels per mode");
  if (levels > 12) throw ValidationError("circuit truncation above 12 levels per mode is not supported");
  const DerivedModeParams d = derive_mode_params(p);
  const detail::ModeOperators ops(levels);
  auto op = [&](const Eigen::MatrixXd& m, int k) { return detail::embed_mode(m, k, levels); };

  const auto dim = static_cast<Eigen::Index>(levels * levels * levels);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < 3; ++i) {
    h += std::sqrt(8.0 * d.e_j_tilde[i] * d.e_c[i]) * op(ops.n, i);
    h -= d.e_c[i] / 12.0 * op(ops.x4, i);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) h -= d.cap_inv(i, j) / (4.0 * std::sqrt(d.zeta[i] * d.zeta[j])) * (op(ops.p1, i) * op(ops.p1, j));
  if (p.e_z != 0.0) {
    const double zc = d.zeta[2];
    for (int i = 0; i < 2; ++i) {
      const double zi = d.zeta[i], s = std::sqrt(zi * zc);
      h += p.e_z * ((zc * s * op(ops.x1, i) * op(ops.x3, 2) + zi * s * op(ops.x3, i) * op(ops.x1, 2)) / 24.0 -
                    s * op(ops.x1, i) * op(ops.x1, 2) / 2.0);
      h -= p.e_z * zi * zc * op(ops.x2, i) * op(ops.x2, 2) / 16.0;
    }
  }
  return {{"output1", "output2", "control"}, levels, h.cast<cplx>()};
}

struct NumericCouplings {
  std::size_t levels = 0;
  std::array<double, 2> jz{};
  /// Dressed 0-1 transitions averaged over the control state, relative to the input frequency.
  std::array<double, 2> delta{};
  /// Dressed transition energies E(100), E(010), E(001) above the ground state.
  std::array<double, 3> transitions{};
  double min_overlap = 1.0;
};

inline constexpr double kMinLabelOverlap = 0.7;

/// Labels dressed states by maximal overlap with bare |n1 n2 nC> and extracts
/// J^z_i = [E(1_i,1_C) - E(1_i,0_C) - E(0,1_C) + E(0,0_C)] / 4.
inline NumericCouplings extract_couplings_numeric(const BosonicOperator& h, const CircuitParams& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.m);
  if (es.info() != Eigen::Success) throw ConvergenceError("circuit eigensolver failed");
  const Eigen::VectorXd& w = es.eigenvalues();
  const Matrix& v = es.eigenvectors();
  NumericCouplings out;
  out.levels = h.levels;
  std::vector<Eigen::Index> used;
  auto energy = [&](std::array<int, 3> n) {
    const auto row = static_cast<Eigen::Index>(h.index(n));
    Eigen::Index best = 0;
    const double ov = v.row(row).cwiseAbs2().maxCoeff(&best);
    const std::string name = std::to_string(n[0]) + std::to_string(n[1]) + std::to_string(n[2]);
    if (ov < kMinLabelOverlap)
      throw LabelError("dressed state |" + name + "> has maximal overlap " + std::to_string(ov) + " < 0.7");
    if (std::find(used.begin(), used.end(), best) != used.end())
      throw LabelError("dressed state |" + name + "> shares an eigenvector with another label");
    used.push_back(best);
    out.min_overlap = std::min(out.min_overlap, ov);
    return w(best);
  };
  const double e000 = energy({0, 0, 0}), e100 = energy({1, 0, 0}), e010 = energy({0, 1, 0}),
               e001 = energy({0, 0, 1}), e101 = energy({1, 0, 1}), e011 = energy({0, 1, 1});
  out.jz = {(e101 - e100 - e001 + e000) / 4.0, (e011 - e010 - e001 + e000) / 4.0};
  out.transitions = {e100 - e000, e010 - e000, e001 - e000};
  const double w_in = input_frequency(p);
  out.delta = {0.5 * ((e100 - e000) + (e101 - e001)) - w_in, 0.5 * ((e010 - e000) + (e011 - e001)) - w_in};
  return out;
}

struct NumericCouplingReport {
  NumericCouplings result;
  NumericCouplings refined;
  /// Largest relative change of J^z or a dressed transition from `levels` to `levels + 1`.
  double max_relative_change = 0.0;
};

inline constexpr double kTruncationTolerance = 0.005;

/// Extraction at `levels` with a convergence check against `levels + 1`.
inline NumericCouplingReport numeric_couplings(const CircuitParams& p, std::size_t levels = 7) {
  NumericCouplingReport r;
  r.result = extract_couplings_numeric(full_circuit_hamiltonian(p, levels), p);
  r.refined = extract_couplings_numeric(full_circuit_hamiltonian(p, levels + 1), p);
  const double floor = 1e-9 * r.result.transitions[0];
  auto rel = [&](double a, double b) {
    const double diff = std::abs(a - b);
    if (diff <= floor) return 0.0;
    return diff / std::max(std::abs(a), std::abs(b));
  };
  for (int i = 0; i < 2; ++i) r.max_relative_change = std::max(r.max_relative_change, rel(r.result.jz[i], r.refined.jz[i]));
  for (int i = 0; i < 3; ++i)
    r.max_relative_change = std::max(r.max_relative_change, rel(r.result.transitions[i], r.refined.transitions[i]));
  if (r.max_relative_change >= kTruncationTolerance)
    throw ConvergenceError("circuit couplings change by " + std::to_string(100.0 * r.max_relative_change) +
                           "% from " + std::to_string(levels) + " to " + std::to_string(levels + 1) + " levels");
  return r;
}

}  // namespace qrouter
