#pragma once
// Unitary propagation, Lindblad integration and piecewise-constant schedules.

#include "qrouter/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace qrouter {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Noise.

enum class DephasingConvention {
  /// T2 is the total coherence time: gamma_phi = 1/T2 - 1/(2 T1).
  total_coherence,
  /// T2 is the pure-dephasing time: gamma_phi = 1/T2.
  pure_dephasing,
};

inline const char* to_string(DephasingConvention c) {
  return c == DephasingConvention::total_coherence ? "total_coherence" : "pure_dephasing";
}

struct QubitNoise {
  double t1 = kInfinity;
  double t2 = kInfinity;
};

class NoiseModel {
 public:
  NoiseModel() = default;

  static NoiseModel none() { return {}; }
  static NoiseModel uniform(double t1, double t2,
                            DephasingConvention c = DephasingConvention::total_coherence) {
    NoiseModel m;
    m.default_ = {t1, t2};
    m.convention_ = c;
    m.validate_one("default", m.default_);
    return m;
  }

  NoiseModel& set(const std::string& label, QubitNoise q) {
    validate_one(label, q);
    overrides_[label] = q;
    return *this;
  }

  DephasingConvention convention() const { return convention_; }
  const QubitNoise& uniform_noise() const { return default_; }
  const std::map<std::string, QubitNoise, std::less<>>& overrides() const { return overrides_; }

  QubitNoise for_label(std::string_view label) const {
    auto it = overrides_.find(label);
    return it == overrides_.end() ? default_ : it->second;
  }

  /// 1/T1.
  double relaxation_rate(std::string_view label) const { return 1.0 / for_label(label).t1; }

  /// gamma_phi; the sigma^z collapse operator is sqrt(gamma_phi / 2) sigma^z.
  double dephasing_rate(std::string_view label) const {
    const QubitNoise q = for_label(label);
    if (convention_ == DephasingConvention::pure_dephasing) return 1.0 / q.t2;
    const double g = 1.0 / q.t2 - 0.5 / q.t1;
    return std::max(g, 0.0);
  }

  bool noiseless(const QubitRegister& reg) const {
    for (const auto& l : reg.labels())
      if (relaxation_rate(l) != 0.0 || dephasing_rate(l) != 0.0) return false;
    return true;
  }

  void validate(const QubitRegister& reg) const {
    for (const auto& [label, q] : overrides_)
      if (!reg.contains(label)) throw LabelError("noise override for unknown qubit '" + label + "'");
  }

 private:
  void validate_one(const std::string& what, const QubitNoise& q) const {
    if (!(q.t1 > 0.0) || !(q.t2 > 0.0)) throw ValidationError("T1 and T2 must be positive (" + what + ")");
    if (convention_ == DephasingConvention::total_coherence && q.t2 > 2.0 * q.t1)
      throw ValidationError("T2 > 2 T1 is unphysical (" + what + ")");
  }

  QubitNoise default_{};
  std::map<std::string, QubitNoise, std::less<>> overrides_;
  DephasingConvention convention_ = DephasingConvention::total_coherence;
};

// ---------------------------------------------------------------------------
// Time grids.

/// Maximum absolute row sum; bounds the spectral radius.
inline double infinity_norm(const Matrix& h) {
  return h.size() == 0 ? 0.0 : h.cwiseAbs().rowwise().sum().maxCoeff();
}

class TimeGrid {
 public:
  static constexpr double kStepsPerInverseNorm = 50.0;
  static constexpr std::size_t kMinSteps = 2000;

  TimeGrid(double t_final, std::size_t steps, std::vector<std::size_t> sample_steps)
      : t_final_(t_final), steps_(steps), sample_steps_(std::move(sample_steps)) {
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ValidationError("t_final must be finite and >= 0");
    if (steps == 0) throw ValidationError("time grid needs at least one step");
    if (sample_steps_.empty()) throw ValidationError("time grid needs at least one sample");
    for (std::size_t i = 0; i < sample_steps_.size(); ++i) {
      if (sample_steps_[i] > steps_) throw ValidationError("sample beyond t_final");
      if (i > 0 && sample_steps_[i] <= sample_steps_[i - 1])
        throw ValidationError("sample steps must increase strictly");
    }
  }

  /// n_samples evenly spaced samples including 0 and t_final (n_samples = 1: t_final only).
  static TimeGrid uniform(double t_final, std::size_t steps, std::size_t n_samples = 2) {
    if (n_samples == 0) throw ValidationError("need at least one sample");
    if (n_samples > steps + 1) throw ValidationError("more samples than grid points");
    std::vector<std::size_t> s;
    if (n_samples == 1) {
      s.push_back(steps);
    } else {
      for (std::size_t k = 0; k < n_samples; ++k)
        s.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(steps) /
                                                          static_cast<double>(n_samples - 1))));
    }
    return {t_final, steps, std::move(s)};
  }

  /// Default integrator grid: max(2000, ceil(50 t ||H||)) steps.
  static std::size_t default_steps(const Operator& h, double t_final) {
    const double need = std::ceil(kStepsPerInverseNorm * t_final * infinity_norm(h.m));
    return std::max<std::size_t>(kMinSteps, static_cast<std::size_t>(need));
  }

  static TimeGrid for_hamiltonian(const Operator& h, double t_final, std::size_t n_samples = 2) {
    return uniform(t_final, default_steps(h, t_final), n_samples);
  }

  double t_final() const { return t_final_; }
  std::size_t steps() const { return steps_; }
  double dt() const { return t_final_ / static_cast<double>(steps_); }
  const std::vector<std::size_t>& sample_steps() const { return sample_steps_; }
  std::vector<double> sample_times() const {
    std::vector<double> t;
    for (auto k : sample_steps_) t.push_back(static_cast<double>(k) * dt());
    return t;
  }

  /// dt <= 1 / (50 ||H||).
  void validate(const Operator& h) const {
    const double norm = infinity_norm(h.m);
    if (norm > 0.0 && dt() > 1.0 / (kStepsPerInverseNorm * norm))
      throw ValidationError("dt = " + std::to_string(dt()) + " exceeds 1/(50 ||H||) = " +
                            std::to_string(1.0 / (kStepsPerInverseNorm * norm)));
  }

 private:
  double t_final_;
  std::size_t steps_;
  std::vector<std::size_t> sample_steps_;
};

// ---------------------------------------------------------------------------
// Results.

struct PropagationResult {
  QubitRegister reg;
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<DensityMatrix> rhos;
  /// rows: sample times, columns: qubits in register order.
  Eigen::MatrixXd populations;

  bool is_density() const { return !rhos.empty(); }
};

namespace detail {

inline Eigen::VectorXd excited_populations(const QubitRegister& reg, const Eigen::VectorXd& diag) {
  const std::size_t n = reg.size();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < diag.size(); ++i)
    for (std::size_t q = 0; q < n; ++q)
      if ((static_cast<std::size_t>(i) >> (n - 1 - q)) & 1U) p(static_cast<Eigen::Index>(q)) += diag(i);
  return p;
}

inline void fill_populations(PropagationResult& r) {
  const auto ns = static_cast<Eigen::Index>(r.times.size());
  r.populations.resize(ns, static_cast<Eigen::Index>(r.reg.size()));
  for (Eigen::Index k = 0; k < ns; ++k) {
    const Eigen::VectorXd diag = r.is_density() ? Eigen::VectorXd(r.rhos[k].m.diagonal().real())
                                                : Eigen::VectorXd(r.states[k].amp.cwiseAbs2());
    r.populations.row(k) = excited_populations(r.reg, diag).transpose();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Unitary propagation.

/// Eigendecomposition of a Hermitian operator, split into the connected
/// blocks of its sparsity pattern.
class Spectral {
 public:
  explicit Spectral(const Operator& h) : reg_(h.reg) {
    if (!h.is_hermitian()) throw ValidationError("propagator requires a Hermitian operator");
    const auto d = static_cast<Eigen::Index>(h.dim());
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(d));
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
    auto find = [&](Eigen::Index x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < j; ++i)
        if (h.m(i, j) != cplx{0.0, 0.0}) parent[find(i)] = find(j);

    std::map<Eigen::Index, std::size_t> root_to_block;
    for (Eigen::Index i = 0; i < d; ++i) {
      auto [it, inserted] = root_to_block.try_emplace(find(i), blocks_.size());
      if (inserted) blocks_.emplace_back();
      blocks_[it->second].idx.push_back(i);
    }
    for (auto& b : blocks_) {
      const auto n = static_cast<Eigen::Index>(b.idx.size());
      Matrix sub(n, n);
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index c = 0; c < n; ++c) sub(a, c) = h.m(b.idx[a], b.idx[c]);
      if (n == 1) {
        b.evals = Eigen::VectorXd::Constant(1, sub(0, 0).real());
        b.evecs = Matrix::Identity(1, 1);
      } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sub);
        if (es.info() != Eigen::Success) throw ConvergenceError("Hermitian eigensolver failed");
        b.evals = es.eigenvalues();
        b.evecs = es.eigenvectors();
      }
    }
  }

  const QubitRegister& reg() const { return reg_; }
  std::size_t block_count() const { return blocks_.size(); }

  Matrix propagator(double t) const {
    const auto d = static_cast<Eigen::Index>(reg_.dim());
    Matrix u = Matrix::Zero(d, d);
    for (const auto& b : blocks_) {
      const Matrix ub = block_propagator(b, t);
      const auto n = static_cast<Eigen::Index>(b.idx.size());
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index c = 0; c < n; ++c) u(b.idx[a], b.idx[c]) = ub(a, c);
    }
    return u;
  }

  Vector apply(double t, const Vector& v) const {
    Vector out(v.size());
    for (const auto& b : blocks_) {
      const auto n = static_cast<Eigen::Index>(b.idx.size());
      Vector sub(n);
      for (Eigen::Index a = 0; a < n; ++a) sub(a) = v(b.idx[a]);
      const Vector rotated = block_propagator(b, t) * sub;
      for (Eigen::Index a = 0; a < n; ++a) out(b.idx[a]) = rotated(a);
    }
    return out;
  }

 private:
  struct Block {
    std::vector<Eigen::Index> idx;
    Eigen::VectorXd evals;
    Matrix evecs;
  };

  static Matrix block_propagator(const Block& b, double t) {
    Vector phases(b.evals.size());
    for (Eigen::Index k = 0; k < b.evals.size(); ++k) phases(k) = std::exp(cplx{0.0, -b.evals(k) * t});
    return b.evecs * phases.asDiagonal() * b.evecs.adjoint();
  }

  QubitRegister reg_;
  std::vector<Block> blocks_;
};

/// exp(-i H t).
inline Operator propagator(const Operator& h, double t) { return {h.reg, Spectral(h).propagator(t)}; }

inline PropagationResult evolve_unitary(const Operator& h, const StateVector& psi0,
                                        const std::vector<double>& times) {
  require_same_register(h.reg, psi0.reg);
  const Spectral sp(h);
  PropagationResult r{h.reg, times, {}, {}, {}};
  for (double t : times) r.states.push_back({h.reg, sp.apply(t, psi0.amp)});
  detail::fill_populations(r);
  return r;
}

inline PropagationResult evolve_unitary(const Operator& h, const StateVector& psi0, const TimeGrid& grid) {
  return evolve_unitary(h, psi0, grid.sample_times());
}

// ---------------------------------------------------------------------------
// Lindblad master equation.

namespace detail {

struct QubitRates {
  std::size_t mask;
  double relax;    // 1/T1
  double dephase;  // gamma_phi
};

inline std::vector<QubitRates> qubit_rates(const QubitRegister& reg, const NoiseModel& noise) {
  noise.validate(reg);
  std::vector<QubitRates> out;
  for (const auto& l : reg.labels()) {
    const double r = noise.relaxation_rate(l), g = noise.dephasing_rate(l);
    if (r != 0.0 || g != 0.0) out.push_back({std::size_t{1} << reg.shift_of(l), r, g});
  }
  return out;
}

/// Sum over qubits of (1/T1) D[sigma^-] rho + (gamma_phi/2) D[sigma^z] rho, added to out.
inline void add_dissipator(const std::vector<QubitRates>& rates, const Matrix& rho, Matrix& out) {
  const auto d = rho.rows();
  for (const auto& q : rates) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const bool bj = (static_cast<std::size_t>(j) & q.mask) != 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const bool bi = (static_cast<std::size_t>(i) & q.mask) != 0;
        cplx v = -0.5 * q.relax * (static_cast<double>(bi) + static_cast<double>(bj)) * rho(i, j);
        if (!bi && !bj) {
          const auto m = static_cast<Eigen::Index>(q.mask);
          v += q.relax * rho(i + m, j + m);
        }
        if (bi != bj) v -= q.dephase * rho(i, j);
        out(i, j) += v;
      }
    }
  }
}

}  // namespace detail

/// Fixed-step RK4 propagator for a time-independent Liouvillian over [0, t].
/// Registers up to 4 qubits use the exact RK4 step map on the superoperator;
/// larger ones step rho directly.
class LindbladPropagator {
 public:
  static constexpr std::size_t kSuperoperatorMaxDim = 16;

  enum class Method { automatic, superoperator, direct };

  LindbladPropagator(const Operator& h, const NoiseModel& noise, double t, std::size_t steps,
                     Method method = Method::automatic)
      : reg_(h.reg), h_(h.m), rates_(detail::qubit_rates(h.reg, noise)), t_(t), steps_(steps) {
    if (!h.is_hermitian()) throw ValidationError("Lindblad evolution requires a Hermitian Hamiltonian");
    if (steps == 0) throw ValidationError("need at least one integration step");
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("evolution time must be finite and >= 0");
    dt_ = t / static_cast<double>(steps);
    if (method == Method::automatic)
      method = h.dim() <= kSuperoperatorMaxDim ? Method::superoperator : Method::direct;
    if (method == Method::superoperator) {
      step_map_ = rk4_step_map();
      total_map_ = matrix_power(step_map_, steps);
    } else {
      h_sparse_ = h.m.sparseView();
    }
  }

  const QubitRegister& reg() const { return reg_; }
  double time() const { return t_; }
  std::size_t steps() const { return steps_; }
  bool uses_superoperator() const { return total_map_.size() != 0; }

  /// d rho / dt.
  Matrix rhs(const Matrix& rho) const {
    Matrix out = commutator_term(rho);
    detail::add_dissipator(rates_, rho, out);
    return out;
  }

  /// rho(t) for any (possibly non-Hermitian) rho(0).
  Matrix apply(const Matrix& rho0) const { return advance(rho0, steps_); }

  /// Advances by k steps of length dt.
  Matrix advance(const Matrix& rho0, std::size_t k) const {
    const auto d = static_cast<Eigen::Index>(reg_.dim());
    if (rho0.rows() != d || rho0.cols() != d) throw ShapeError("density matrix shape mismatch");
    Matrix out;
    if (uses_superoperator()) {
      const Matrix& map = (k == steps_) ? total_map_ : cached_power(k);
      Vector v = map * Eigen::Map<const Vector>(rho0.data(), d * d);
      out = Eigen::Map<const Matrix>(v.data(), d, d);
    } else {
      out = rho0;
      for (std::size_t s = 0; s < k; ++s) out = rk4_step(out);
    }
    check(rho0, out);
    return out;
  }

 private:
  Matrix commutator_term(const Matrix& rho) const {
    if (h_sparse_.rows() > 0) {
      // H is Hermitian, so rho H = (H rho^dag)^dag.
      const Matrix hr = h_sparse_ * rho;
      const Matrix rh = (h_sparse_ * rho.adjoint()).adjoint();
      return cplx{0.0, -1.0} * (hr - rh);
    }
    return cplx{0.0, -1.0} * (h_ * rho - rho * h_);
  }

  Matrix rk4_step(const Matrix& rho) const {
    const Matrix k1 = rhs(rho);
    const Matrix k2 = rhs(rho + 0.5 * dt_ * k1);
    const Matrix k3 = rhs(rho + 0.5 * dt_ * k2);
    const Matrix k4 = rhs(rho + dt_ * k3);
    return rho + (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  // Columns are the images of the basis matrices under the exact RK4 step.
  Matrix rk4_step_map() const {
    const auto d = static_cast<Eigen::Index>(reg_.dim());
    Matrix map(d * d, d * d);
    Matrix e = Matrix::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) {
        e(i, j) = 1.0;
        const Matrix img = rk4_step(e);
        map.col(j * d + i) = Eigen::Map<const Vector>(img.data(), d * d);
        e(i, j) = 0.0;
      }
    }
    return map;
  }

  static Matrix matrix_power(const Matrix& base, std::size_t k) {
    Matrix result = Matrix::Identity(base.rows(), base.cols());
    Matrix b = base;
    while (k > 0) {
      if (k & 1U) result = result * b;
      k >>= 1U;
      if (k > 0) b = b * b;
    }
    return result;
  }

  const Matrix& cached_power(std::size_t k) const {
    std::lock_guard lock(*cache_mutex_);
    auto it = power_cache_.find(k);
    if (it == power_cache_.end()) it = power_cache_.emplace(k, matrix_power(step_map_, k)).first;
    return it->second;
  }

  void check(const Matrix& rho0, const Matrix& rho) const {
    if (!rho.allFinite()) throw IntegratorError("non-finite density matrix entries; step size unstable");
    const cplx tr0 = rho0.trace(), tr = rho.trace();
    if (std::abs(tr - tr0) > 1e-6 * std::max(1.0, std::abs(tr0)))
      throw IntegratorError("trace drift " + std::to_string(std::abs(tr - tr0)) + " exceeds 1e-6");
    const double bound = std::sqrt(static_cast<double>(rho.rows())) * rho0.norm() * (1.0 + 1e-6);
    if (rho.norm() > bound) throw IntegratorError("density matrix norm grew; step size unstable");
  }

  QubitRegister reg_;
  Matrix h_;
  Eigen::SparseMatrix<cplx> h_sparse_;
  std::vector<detail::QubitRates> rates_;
  double t_;
  std::size_t steps_;
  double dt_ = 0.0;
  Matrix step_map_;
  Matrix total_map_;
  mutable std::map<std::size_t, Matrix> power_cache_;
  std::shared_ptr<std::mutex> cache_mutex_ = std::make_shared<std::mutex>();
};

inline PropagationResult evolve_lindblad(const Operator& h, const DensityMatrix& rho0, const NoiseModel& noise,
                                         const TimeGrid& grid) {
  require_same_register(h.reg, rho0.reg);
  grid.validate(h);
  const LindbladPropagator prop(h, noise, grid.t_final(), grid.steps());
  PropagationResult r{h.reg, grid.sample_times(), {}, {}, {}};
  Matrix rho = rho0.m;
  std::size_t at = 0;
  for (std::size_t k : grid.sample_steps()) {
    if (k > at) rho = prop.advance(rho, k - at);
    at = k;
    // Trace and norm are checked by the integrator; skip the eigenvalue scan per sample.
    DensityMatrix out(h.reg, rho, false);
    out.physical = rho0.physical;
    r.rhos.push_back(std::move(out));
  }
  detail::fill_populations(r);
  return r;
}

// ---------------------------------------------------------------------------
// Channels on the full register, used by tomography.

using Evolver = std::function<Matrix(const Matrix&)>;

inline Evolver unitary_channel(const Operator& u) {
  return [m = u.m](const Matrix& rho) -> Matrix { return m * rho * m.adjoint(); };
}

inline Evolver lindblad_channel(std::shared_ptr<const LindbladPropagator> prop) {
  return [p = std::move(prop)](const Matrix& rho) { return p->apply(rho); };
}

/// U(t) rho U(t)^dag when noiseless, otherwise RK4 on the default grid.
inline Evolver make_channel(const Operator& h, double t, const NoiseModel& noise) {
  if (noise.noiseless(h.reg)) return unitary_channel(propagator(h, t));
  return lindblad_channel(
      std::make_shared<const LindbladPropagator>(h, noise, t, TimeGrid::default_steps(h, t)));
}

// ---------------------------------------------------------------------------
// Piecewise-constant schedules.

struct ScheduleWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  Operator term;
};

/// Piecewise-constant diagonal terms; window k is active on [t_start, t_end).
class DetuningSchedule {
 public:
  DetuningSchedule() = default;
  DetuningSchedule(QubitRegister reg, std::vector<ScheduleWindow> windows)
      : reg_(std::move(reg)), windows_(std::move(windows)) {
    double t = 0.0;
    for (const auto& w : windows_) {
      require_same_register(reg_, w.term.reg);
      if (std::abs(w.t_start - t) > 1e-12 * std::max(1.0, std::abs(t)))
        throw ValidationError("schedule windows must be contiguous and start at t = 0");
      if (!(w.t_end > w.t_start)) throw ValidationError("schedule window has non-positive length");
      if (!w.term.is_diagonal()) throw ValidationError("schedule terms must be diagonal");
      t = w.t_end;
    }
    total_time_ = t;
  }

  const QubitRegister& reg() const { return reg_; }
  const std::vector<ScheduleWindow>& windows() const { return windows_; }
  double total_time() const { return total_time_; }
  bool empty() const { return windows_.empty(); }

 private:
  QubitRegister reg_;
  std::vector<ScheduleWindow> windows_;
  double total_time_ = 0.0;
};

namespace detail {

struct Segment {
  double t0, t1;
  std::size_t window;
};

/// Splits [0, total] at window boundaries and at the requested times.
inline std::vector<Segment> schedule_segments(const DetuningSchedule& s, const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || times[i] > s.total_time() * (1.0 + 1e-12))
      throw ValidationError("sample time outside the schedule");
    if (i > 0 && times[i] < times[i - 1]) throw ValidationError("sample times must be sorted");
  }
  std::vector<Segment> segs;
  std::size_t ti = 0;
  for (std::size_t w = 0; w < s.windows().size(); ++w) {
    const auto& win = s.windows()[w];
    double t = win.t_start;
    while (ti < times.size() && times[ti] < win.t_end) {
      if (times[ti] > t) segs.push_back({t, times[ti], w});
      t = std::max(t, times[ti]);
      ++ti;
    }
    segs.push_back({t, win.t_end, w});
  }
  return segs;
}

}  // namespace detail

/// Noiseless evolution; exact exponentials inside each window.
inline PropagationResult evolve_schedule(const Operator& h_static, const DetuningSchedule& schedule,
                                         const StateVector& psi0, const std::vector<double>& times) {
  require_same_register(h_static.reg, psi0.reg);
  if (schedule.empty()) return evolve_unitary(h_static, psi0, times);
  require_same_register(h_static.reg, schedule.reg());
  std::vector<Spectral> spectra;
  for (const auto& w : schedule.windows()) spectra.emplace_back(h_static + w.term);

  PropagationResult r{h_static.reg, times, {}, {}, {}};
  Vector psi = psi0.amp;
  std::size_t ti = 0;
  auto record = [&](double t) {
    while (ti < times.size() && times[ti] <= t * (1.0 + 1e-12)) {
      r.states.push_back({h_static.reg, psi});
      ++ti;
    }
  };
  record(0.0);
  for (const auto& seg : detail::schedule_segments(schedule, times)) {
    if (seg.t1 > seg.t0) psi = spectra[seg.window].apply(seg.t1 - seg.t0, psi);
    record(seg.t1);
  }
  detail::fill_populations(r);
  return r;
}

/// Lindblad evolution under static + schedule; RK4 steps per segment follow the default grid rule.
inline PropagationResult evolve_lindblad(const Operator& h_static, const DetuningSchedule& schedule,
                                         const DensityMatrix& rho0, const NoiseModel& noise,
                                         const std::vector<double>& times) {
  require_same_register(h_static.reg, rho0.reg);
  if (!schedule.empty()) require_same_register(h_static.reg, schedule.reg());
  const DetuningSchedule sched =
      schedule.empty()
          ? DetuningSchedule(h_static.reg, {{0.0, times.empty() ? 0.0 : times.back(), Operator::zero(h_static.reg)}})
          : schedule;
  PropagationResult r{h_static.reg, times, {}, {}, {}};
  Matrix rho = rho0.m;
  std::size_t ti = 0;
  auto record = [&](double t) {
    while (ti < times.size() && times[ti] <= t * (1.0 + 1e-12)) {
      DensityMatrix out(h_static.reg, rho, false);
      out.physical = rho0.physical;
      r.rhos.push_back(std::move(out));
      ++ti;
    }
  };
  record(0.0);
  for (const auto& seg : detail::schedule_segments(sched, times)) {
    const double len = seg.t1 - seg.t0;
    if (len > 0.0) {
      const auto& win = sched.windows()[seg.window];
      const Operator h = h_static + win.term;
      const double frac = len / (win.t_end - win.t_start);
      const auto steps = std::max<std::size_t>(
          static_cast<std::size_t>(std::ceil(frac * static_cast<double>(TimeGrid::kMinSteps))),
          static_cast<std::size_t>(std::ceil(TimeGrid::kStepsPerInverseNorm * len * infinity_norm(h.m))));
      rho = LindbladPropagator(h, noise, len, std::max<std::size_t>(steps, 1)).apply(rho);
    }
    record(seg.t1);
  }
  detail::fill_populations(r);
  return r;
}

inline PropagationResult evolve_schedule(const Operator& h_static, const DetuningSchedule& schedule,
                                         const DensityMatrix& rho0, const NoiseModel& noise,
                                         const std::vector<double>& times) {
  return evolve_lindblad(h_static, schedule, rho0, noise, times);
}

}  // namespace qrouter
