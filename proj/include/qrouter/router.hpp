#pragma once
// Hamiltonians, schedules and target unitaries for the two-output,
// three-output and concatenated routers. All couplings in rad/us.

#include "qrouter/core.hpp"
#include "qrouter/dynamics.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace qrouter {

namespace roles {
inline const std::string kInput = "input";
inline const std::string kOutput1 = "output1";
inline const std::string kOutput2 = "output2";
inline const std::string kOutput3 = "output3";
inline const std::string kControl = "control";
inline const std::string kControl1 = "control1";
inline const std::string kControl2 = "control2";

inline std::string bus(int i) { return "bus" + std::to_string(i); }
inline std::string output(int i) { return "output" + std::to_string(i); }
inline std::string control(int i) { return "control" + std::to_string(i); }
}  // namespace roles

namespace detail {

inline void require_roles(const QubitRegister& reg, std::initializer_list<std::string> names) {
  for (const auto& n : names)
    if (!reg.contains(n)) throw LabelError("register lacks required role '" + n + "'");
}

/// (J/2)(sigma^x_a sigma^x_b + sigma^y_a sigma^y_b).
inline Operator exchange(const QubitRegister& reg, const std::string& a, const std::string& b, double j) {
  const Matrix2 sx = pauli_matrix(Axis::x), sy = pauli_matrix(Axis::y);
  return 0.5 * j * (embed(reg, {{a, sx}, {b, sx}}) + embed(reg, {{a, sy}, {b, sy}}));
}

inline Operator zz(const QubitRegister& reg, const std::string& a, const std::string& b) {
  const Matrix2 sz = pauli_matrix(Axis::z);
  return embed(reg, {{a, sz}, {b, sz}});
}

inline Operator z(const QubitRegister& reg, const std::string& a) { return pauli(reg, a, Axis::z); }

/// sigma^-_a sigma^+_b restricted to control bit c, plus h.c.
inline Operator conditional_hop(const QubitRegister& reg, const std::string& from, const std::string& to,
                                const std::string& ctrl, int bit) {
  Operator a = embed(reg, {{from, ladder_matrix(Ladder::lower)},
                           {to, ladder_matrix(Ladder::raise)},
                           {ctrl, projector_matrix(bit)}});
  return a + a.adjoint();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-output router.

/// Output detunings (Delta_O1, Delta_O2) that make the control select the open output.
inline std::pair<double, double> standard_detunings(double jz) { return {2.0 * jz, -2.0 * jz}; }

struct TwoOutputParams {
  double jz = 0.0;
  double jx = 0.0;
  double delta_o1 = 0.0;
  double delta_o2 = 0.0;

  static TwoOutputParams standard(double jz, double jx) {
    if (jx == 0.0 || !std::isfinite(jx)) throw ValidationError("J^x must be finite and non-zero");
    if (!std::isfinite(jz)) throw ValidationError("J^z must be finite");
    const auto [d1, d2] = standard_detunings(jz);
    return {jz, jx, d1, d2};
  }
  /// J^x = J^z / ratio with the standard detunings.
  static TwoOutputParams from_ratio(double jz, double ratio) { return standard(jz, jz / ratio); }

  double transfer_time() const { return std::numbers::pi / (2.0 * std::abs(jx)); }
  bool has_standard_detunings() const {
    const auto [d1, d2] = standard_detunings(jz);
    return delta_o1 == d1 && delta_o2 == d2;
  }
};

inline std::vector<std::string> validity_warnings(const TwoOutputParams& p) {
  std::vector<std::string> w;
  if (std::abs(4.0 * p.jz / p.jx) < 10.0)
    w.push_back("|4 J^z / J^x| < 10: transfer to the closed output is only weakly suppressed");
  return w;
}

inline QubitRegister two_output_register() {
  return QubitRegister{roles::kInput, roles::kOutput1, roles::kOutput2, roles::kControl};
}

inline Operator two_output_hamiltonian(const TwoOutputParams& p,
                                       const QubitRegister& reg = two_output_register()) {
  using namespace roles;
  detail::require_roles(reg, {kInput, kOutput1, kOutput2, kControl});
  if (p.jx == 0.0) throw ValidationError("J^x must be non-zero");
  Operator h = -0.5 * p.delta_o1 * detail::z(reg, kOutput1);
  h -= 0.5 * p.delta_o2 * detail::z(reg, kOutput2);
  h += p.jz * (detail::zz(reg, kOutput1, kControl) + detail::zz(reg, kOutput2, kControl));
  h += detail::exchange(reg, kInput, kOutput1, p.jx);
  h += detail::exchange(reg, kInput, kOutput2, p.jx);
  return h;
}

/// Generator sigma^-_I sigma^+_O1 |0_C><0_C| + sigma^-_I sigma^+_O2 |1_C><1_C| + h.c.
inline Operator routing_generator(const QubitRegister& reg = two_output_register()) {
  using namespace roles;
  detail::require_roles(reg, {kInput, kOutput1, kOutput2, kControl});
  return detail::conditional_hop(reg, kInput, kOutput1, kControl, 0) +
         detail::conditional_hop(reg, kInput, kOutput2, kControl, 1);
}

/// Rotating-frame Hamiltonian after the rotating-wave approximation.
inline Operator rwa_effective_hamiltonian(const TwoOutputParams& p,
                                          const QubitRegister& reg = two_output_register()) {
  if (!p.has_standard_detunings())
    throw ValidationError("the effective router Hamiltonian assumes the standard detunings");
  return p.jx * routing_generator(reg);
}

/// exp(-i (pi/2) G) with G the routing generator.
inline Operator ideal_transfer_unitary(const QubitRegister& reg = two_output_register()) {
  return propagator(routing_generator(reg), std::numbers::pi / 2.0);
}

// ---------------------------------------------------------------------------
// Three-output router.

enum class ThreeOutputMode { selective, entangle };

struct ThreeOutputParams {
  double jz = 0.0;
  double jx = 0.0;
  std::array<double, 3> delta{};
  ThreeOutputMode mode = ThreeOutputMode::selective;

  static ThreeOutputParams for_mode(double jz, double jx, ThreeOutputMode mode) {
    if (jx == 0.0 || !std::isfinite(jx)) throw ValidationError("J^x must be finite and non-zero");
    ThreeOutputParams p{jz, jx, {}, mode};
    if (mode == ThreeOutputMode::selective)
      p.delta = {-jz, 2.0 * jz, -jz};
    else
      p.delta = {jz, 0.0, jz};
    return p;
  }

  double transfer_time() const { return std::numbers::pi / (2.0 * std::abs(jx)); }
};

inline const char* to_string(ThreeOutputMode m) {
  return m == ThreeOutputMode::selective ? "selective" : "entangle";
}

inline QubitRegister three_output_register() {
  using namespace roles;
  return QubitRegister{kInput, kOutput1, kOutput2, kOutput3, kControl1, kControl2};
}

// The detuning term carries no factor 1/2 here, unlike the two-output router.
inline Operator three_output_hamiltonian(const ThreeOutputParams& p,
                                         const QubitRegister& reg = three_output_register()) {
  using namespace roles;
  detail::require_roles(reg, {kInput, kOutput1, kOutput2, kOutput3, kControl1, kControl2});
  Operator h = Operator::zero(reg);
  const std::array<const std::string*, 3> outs{&kOutput1, &kOutput2, &kOutput3};
  for (std::size_t i = 0; i < 3; ++i) h -= p.delta[i] * detail::z(reg, *outs[i]);
  h += p.jz * (detail::zz(reg, kOutput1, kControl1) + detail::zz(reg, kOutput2, kControl1));
  h += p.jz * (detail::zz(reg, kOutput2, kControl2) + detail::zz(reg, kOutput3, kControl2));
  for (const auto* o : outs) h += detail::exchange(reg, kInput, *o, p.jx);
  return h;
}

// ---------------------------------------------------------------------------
// Concatenated router.

struct ConcatParams {
  int n = 1;
  double jz = 0.0;
  double jx = 0.0;
  double delta = 0.0;
  double step_time = 0.0;
  std::vector<std::string> warnings;

  /// Validates the detuning hierarchy: ratios below 4 are rejected, below 10 warned.
  static ConcatParams make(int n, double jz, double jx, double delta) {
    if (n < 1) throw ValidationError("concatenation needs N >= 1");
    if (3 * n + 1 > static_cast<int>(kMaxQubits))
      throw ValidationError("concatenation of " + std::to_string(n) + " routers exceeds the register cap");
    if (jx == 0.0 || !std::isfinite(jx)) throw ValidationError("J^x must be finite and non-zero");
    ConcatParams p{n, jz, jx, delta, std::numbers::pi / (2.0 * std::abs(jx)), {}};
    const double ax = std::abs(jx);
    const std::array<std::pair<const char*, double>, 3> checks{{
        {"|Delta|", std::abs(delta)},
        {"|2J^z + Delta|", std::abs(2.0 * jz + delta)},
        {"|2J^z - Delta|", std::abs(2.0 * jz - delta)},
    }};
    for (const auto& [name, v] : checks) {
      const double ratio = v / ax;
      if (ratio < 4.0)
        throw ValidationError(std::string(name) + " / |J^x| = " + std::to_string(ratio) + " < 4");
      if (ratio < 10.0)
        p.warnings.push_back(std::string(name) + " / |J^x| = " + std::to_string(ratio) + " < 10");
    }
    return p;
  }

  double total_time() const { return n * step_time; }
};

inline QubitRegister concat_register(int n) {
  if (n < 1) throw ValidationError("concatenation needs N >= 1");
  std::vector<std::string> labels;
  for (int i = 0; i <= n; ++i) labels.push_back(roles::bus(i));
  for (int i = 1; i <= n; ++i) labels.push_back(roles::output(i));
  for (int i = 1; i <= n; ++i) labels.push_back(roles::control(i));
  return QubitRegister(std::move(labels));
}

inline void require_concat_register(const QubitRegister& reg, int n) {
  if (reg.size() != static_cast<std::size_t>(3 * n + 1))
    throw ShapeError("concatenated register must hold 3N+1 qubits");
  for (int i = 0; i <= n; ++i)
    if (!reg.contains(roles::bus(i))) throw ShapeError("register lacks " + roles::bus(i));
  for (int i = 1; i <= n; ++i)
    if (!reg.contains(roles::output(i)) || !reg.contains(roles::control(i)))
      throw ShapeError("register lacks output/control " + std::to_string(i));
}

/// Static part, constant offsets kept as written.
inline Operator concat_static_hamiltonian(const ConcatParams& p) {
  const QubitRegister reg = concat_register(p.n);
  require_concat_register(reg, p.n);
  Operator h = Operator::zero(reg);
  for (int i = 1; i <= p.n; ++i) {
    const auto o = roles::output(i), b = roles::bus(i), c = roles::control(i), prev = roles::bus(i - 1);
    h += p.jz * (detail::zz(reg, o, c) + detail::z(reg, o));
    h += p.jz * (detail::zz(reg, b, c) - detail::z(reg, b));
    h += detail::exchange(reg, prev, o, p.jx);
    h += detail::exchange(reg, prev, b, p.jx);
  }
  return h;
}

/// Step i in [(i-1)T, iT) adds Delta (sigma^z_B(i-1) + sigma^z_Bi + sum_{j<=i} sigma^z_Oj).
inline DetuningSchedule concat_schedule(const ConcatParams& p) {
  if (p.n < 1) throw ValidationError("concatenation needs N >= 1");
  const QubitRegister reg = concat_register(p.n);
  std::vector<ScheduleWindow> windows;
  for (int i = 1; i <= p.n; ++i) {
    Operator term = detail::z(reg, roles::bus(i - 1)) + detail::z(reg, roles::bus(i));
    for (int j = 1; j <= i; ++j) term += detail::z(reg, roles::output(j));
    windows.push_back({(i - 1) * p.step_time, i * p.step_time, p.delta * term});
  }
  return {reg, std::move(windows)};
}

/// Label where the excitation ends: the first control in |1> diverts it to its
/// output, otherwise it runs to the last bus qubit.
inline std::string concat_destination(std::string_view controls) {
  for (std::size_t i = 0; i < controls.size(); ++i)
    if (controls[i] == '1') return roles::output(static_cast<int>(i) + 1);
  return roles::bus(static_cast<int>(controls.size()));
}

/// Basis state with the input (bus0) excited and the given control bits.
inline StateVector concat_initial_state(int n, std::string_view controls) {
  if (controls.size() != static_cast<std::size_t>(n)) throw ShapeError("need one control bit per router");
  std::string bits(static_cast<std::size_t>(3 * n + 1), '0');
  bits[0] = '1';
  for (int i = 0; i < n; ++i) bits[static_cast<std::size_t>(2 * n + 1 + i)] = controls[static_cast<std::size_t>(i)];
  return basis_state(concat_register(n), bits);
}

}  // namespace qrouter
