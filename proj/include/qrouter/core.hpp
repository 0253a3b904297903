#pragma once
// Labeled qubit registers, dense operators and states over them.
//
// Basis convention: the first register label is the most significant bit of
// the basis index, |0> is the sigma^z = +1 eigenstate and sigma^+ = |1><0|
// creates an excitation.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qrouter {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Matrix2 = Eigen::Matrix2cd;

inline constexpr cplx kI{0.0, 1.0};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Unknown or mismatched register label / role.
class LabelError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
/// Parameters or states violating a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};
/// Time integration became unreliable (trace drift, blow-up).
class IntegratorError : public Error {
 public:
  using Error::Error;
};
/// A truncation or iterative result did not converge to tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

namespace units {
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Internal units: angular frequency in rad/us, time in us.
constexpr double mhz(double f) { return kTwoPi * f; }
constexpr double ghz(double f) { return kTwoPi * 1e3 * f; }
constexpr double to_mhz(double omega) { return omega / kTwoPi; }
constexpr double to_ghz(double omega) { return omega / (kTwoPi * 1e3); }
}  // namespace units

inline constexpr std::size_t kMaxQubits = 12;

class QubitRegister {
 public:
  QubitRegister() : labels_(std::make_shared<const std::vector<std::string>>()) {}

  explicit QubitRegister(std::vector<std::string> labels) {
    if (labels.empty()) throw ValidationError("register needs at least one qubit");
    if (labels.size() > kMaxQubits)
      throw ValidationError("register exceeds " + std::to_string(kMaxQubits) + " qubits");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].empty()) throw LabelError("empty qubit label");
      for (std::size_t j = 0; j < i; ++j)
        if (labels[i] == labels[j]) throw LabelError("duplicate qubit label '" + labels[i] + "'");
    }
    labels_ = std::make_shared<const std::vector<std::string>>(std::move(labels));
  }

  QubitRegister(std::initializer_list<std::string> labels)
      : QubitRegister(std::vector<std::string>(labels)) {}

  std::size_t size() const { return labels_->size(); }
  std::size_t dim() const { return std::size_t{1} << size(); }
  const std::vector<std::string>& labels() const { return *labels_; }

  bool contains(std::string_view label) const {
    return std::find(labels_->begin(), labels_->end(), label) != labels_->end();
  }

  std::size_t index_of(std::string_view label) const {
    auto it = std::find(labels_->begin(), labels_->end(), label);
    if (it == labels_->end()) throw LabelError("unknown qubit label '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - labels_->begin());
  }

  /// Bit shift of a label inside a basis index.
  std::size_t shift_of(std::string_view label) const { return size() - 1 - index_of(label); }

  friend bool operator==(const QubitRegister& a, const QubitRegister& b) {
    return a.labels_ == b.labels_ || *a.labels_ == *b.labels_;
  }

 private:
  std::shared_ptr<const std::vector<std::string>> labels_;
};

inline void require_same_register(const QubitRegister& a, const QubitRegister& b) {
  if (!(a == b)) throw LabelError("operands live on different registers");
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

struct Operator {
  QubitRegister reg;
  Matrix m;

  Operator() = default;
  Operator(QubitRegister r, Matrix mat) : reg(std::move(r)), m(std::move(mat)) {
    const auto d = static_cast<Eigen::Index>(reg.dim());
    if (m.rows() != d || m.cols() != d)
      throw ShapeError("operator matrix is " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", register dim is " + std::to_string(d));
  }

  static Operator zero(const QubitRegister& r) {
    const auto d = static_cast<Eigen::Index>(r.dim());
    return {r, Matrix::Zero(d, d)};
  }
  static Operator identity(const QubitRegister& r) {
    const auto d = static_cast<Eigen::Index>(r.dim());
    return {r, Matrix::Identity(d, d)};
  }

  std::size_t dim() const { return reg.dim(); }
  Operator adjoint() const { return {reg, m.adjoint()}; }

  /// Elementwise max|M - M^dag| <= tol * max(1, max|M|).
  bool is_hermitian(double tol = 1e-12) const {
    return max_abs(m - m.adjoint()) <= tol * std::max(1.0, max_abs(m));
  }
  bool is_diagonal(double tol = 0.0) const {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (i != j && std::abs(m(i, j)) > tol) return false;
    return true;
  }
  bool is_unitary(double tol = 1e-10) const {
    const auto d = static_cast<Eigen::Index>(dim());
    return max_abs(m.adjoint() * m - Matrix::Identity(d, d)) <= tol;
  }

  Operator& operator+=(const Operator& o) {
    require_same_register(reg, o.reg);
    m += o.m;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    require_same_register(reg, o.reg);
    m -= o.m;
    return *this;
  }
  Operator& operator*=(cplx s) {
    m *= s;
    return *this;
  }
};

inline Operator operator+(Operator a, const Operator& b) { return a += b; }
inline Operator operator-(Operator a, const Operator& b) { return a -= b; }
inline Operator operator*(cplx s, Operator a) { return a *= s; }
inline Operator operator*(double s, Operator a) { return a *= cplx{s, 0.0}; }
inline Operator operator*(const Operator& a, const Operator& b) {
  require_same_register(a.reg, b.reg);
  return {a.reg, a.m * b.m};
}
inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

/// Keeps only the diagonal of an operator.
inline Operator diagonal_part(const Operator& a) {
  return {a.reg, Matrix(a.m.diagonal().asDiagonal())};
}

struct StateVector {
  QubitRegister reg;
  Vector amp;

  StateVector() = default;
  StateVector(QubitRegister r, Vector a) : reg(std::move(r)), amp(std::move(a)) {
    if (amp.size() != static_cast<Eigen::Index>(reg.dim()))
      throw ShapeError("state length does not match register dimension");
  }

  double norm() const { return amp.norm(); }
  bool is_normalized(double tol = 1e-10) const { return std::abs(norm() - 1.0) <= tol; }
  StateVector normalized() const { return {reg, amp / amp.norm()}; }
};

inline StateVector operator*(const Operator& op, const StateVector& s) {
  require_same_register(op.reg, s.reg);
  return {op.reg, op.m * s.amp};
}

struct DensityMatrix {
  QubitRegister reg;
  Matrix m;
  /// False for tomography carriers such as |i><j|.
  bool physical = true;

  DensityMatrix() = default;
  DensityMatrix(QubitRegister r, Matrix mat, bool is_physical = true)
      : reg(std::move(r)), m(std::move(mat)), physical(is_physical) {
    const auto d = static_cast<Eigen::Index>(reg.dim());
    if (m.rows() != d || m.cols() != d) throw ShapeError("density matrix shape mismatch");
    if (physical) validate_physical();
  }

  static DensityMatrix pure(const StateVector& s) {
    return {s.reg, s.amp * s.amp.adjoint(), true};
  }

  cplx trace() const { return m.trace(); }

  void validate_physical(double tol = 1e-10) const {
    if (std::abs(m.trace() - cplx{1.0, 0.0}) > tol) throw ValidationError("density matrix trace != 1");
    if (max_abs(m - m.adjoint()) > tol) throw ValidationError("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9) throw ValidationError("density matrix is not positive");
  }
};

// ---------------------------------------------------------------------------
// Single-qubit matrices and embedding.

enum class Axis { x, y, z };
enum class Ladder { raise, lower };

inline Matrix2 pauli_matrix(Axis axis) {
  Matrix2 s;
  switch (axis) {
    case Axis::x:
      s << 0.0, 1.0, 1.0, 0.0;
      break;
    case Axis::y:
      s << 0.0, -kI, kI, 0.0;
      break;
    case Axis::z:
      s << 1.0, 0.0, 0.0, -1.0;
      break;
  }
  return s;
}

inline Matrix2 ladder_matrix(Ladder sign) {
  Matrix2 s = Matrix2::Zero();
  if (sign == Ladder::raise)
    s(1, 0) = 1.0;  // |1><0|
  else
    s(0, 1) = 1.0;  // |0><1|
  return s;
}

inline Matrix2 projector_matrix(int bit) {
  Matrix2 s = Matrix2::Zero();
  s(bit, bit) = 1.0;
  return s;
}

/// One factor of a tensor-product term.
struct Factor {
  std::string label;
  Matrix2 op;
};

/// Embeds a product of single-qubit operators on distinct labels, identity elsewhere.
inline Operator embed(const QubitRegister& reg, std::span<const Factor> factors) {
  struct Slot {
    std::size_t shift;
    const Matrix2* op;
  };
  std::vector<Slot> slots;
  std::size_t mask = 0;
  for (const auto& f : factors) {
    const std::size_t s = reg.shift_of(f.label);
    if (mask & (std::size_t{1} << s)) throw LabelError("label '" + f.label + "' repeated in product");
    mask |= std::size_t{1} << s;
    slots.push_back({s, &f.op});
  }
  const std::size_t d = reg.dim();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  const std::size_t k = slots.size();
  for (std::size_t col = 0; col < d; ++col) {
    // Enumerate all rows that differ from col only on the factor bits.
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
      std::size_t row = col & ~mask;
      cplx v{1.0, 0.0};
      for (std::size_t q = 0; q < k && v != cplx{}; ++q) {
        const int rb = static_cast<int>((pattern >> q) & 1U);
        const int cb = static_cast<int>((col >> slots[q].shift) & 1U);
        row |= static_cast<std::size_t>(rb) << slots[q].shift;
        v *= (*slots[q].op)(rb, cb);
      }
      if (v != cplx{}) out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = v;
    }
  }
  return {reg, std::move(out)};
}

inline Operator embed(const QubitRegister& reg, std::initializer_list<Factor> factors) {
  return embed(reg, std::span<const Factor>(factors.begin(), factors.size()));
}

inline Operator embed(const QubitRegister& reg, std::string_view label, const Matrix2& op) {
  const Factor f{std::string(label), op};
  return embed(reg, std::span<const Factor>(&f, 1));
}

inline Operator pauli(const QubitRegister& reg, std::string_view label, Axis axis) {
  return embed(reg, label, pauli_matrix(axis));
}

inline Operator ladder(const QubitRegister& reg, std::string_view label, Ladder sign) {
  return embed(reg, label, ladder_matrix(sign));
}

inline Operator projector(const QubitRegister& reg, std::string_view label, int bit) {
  return embed(reg, label, projector_matrix(bit));
}

/// Diagonal operator sum_q sigma^z_q over all register qubits.
inline Operator total_z(const QubitRegister& reg) {
  const std::size_t d = reg.dim();
  Vector diag(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    const int ones = std::popcount(i);
    diag(static_cast<Eigen::Index>(i)) = static_cast<double>(static_cast<int>(reg.size()) - 2 * ones);
  }
  return {reg, Matrix(diag.asDiagonal())};
}

// ---------------------------------------------------------------------------
// States.

inline std::size_t basis_index(const QubitRegister& reg, std::string_view bits) {
  if (bits.size() != reg.size())
    throw ShapeError("bitstring '" + std::string(bits) + "' does not match register of " +
                     std::to_string(reg.size()) + " qubits");
  std::size_t idx = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') throw ValidationError("bitstring must contain only 0 and 1");
    idx = (idx << 1) | static_cast<std::size_t>(c - '0');
  }
  return idx;
}

inline StateVector basis_state(const QubitRegister& reg, std::string_view bits) {
  Vector a = Vector::Zero(static_cast<Eigen::Index>(reg.dim()));
  a(static_cast<Eigen::Index>(basis_index(reg, bits))) = 1.0;
  return {reg, std::move(a)};
}

inline std::string bitstring(const QubitRegister& reg, std::size_t index) {
  std::string s(reg.size(), '0');
  for (std::size_t q = 0; q < reg.size(); ++q)
    if ((index >> (reg.size() - 1 - q)) & 1U) s[q] = '1';
  return s;
}

inline cplx expectation(const Operator& op, const StateVector& s) {
  require_same_register(op.reg, s.reg);
  return s.amp.dot(op.m * s.amp);
}

inline cplx expectation(const Operator& op, const DensityMatrix& rho) {
  require_same_register(op.reg, rho.reg);
  return (op.m * rho.m).trace();
}

/// |<a|b>|^2.
inline double state_fidelity(const StateVector& a, const StateVector& b) {
  require_same_register(a.reg, b.reg);
  return std::norm(a.amp.dot(b.amp));
}

/// Probability of finding the labeled qubit in |1>.
inline double excited_population(const StateVector& s, std::string_view label) {
  const std::size_t shift = s.reg.shift_of(label);
  double p = 0.0;
  for (Eigen::Index i = 0; i < s.amp.size(); ++i)
    if ((static_cast<std::size_t>(i) >> shift) & 1U) p += std::norm(s.amp(i));
  return p;
}

inline double excited_population(const DensityMatrix& rho, std::string_view label) {
  const std::size_t shift = rho.reg.shift_of(label);
  double p = 0.0;
  for (Eigen::Index i = 0; i < rho.m.rows(); ++i)
    if ((static_cast<std::size_t>(i) >> shift) & 1U) p += rho.m(i, i).real();
  return p;
}

/// Reduced state on the kept labels, which keep their register order.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::string> keep) {
  if (keep.empty()) throw ValidationError("partial_trace needs a non-empty keep set");
  const QubitRegister& reg = rho.reg;
  std::vector<std::string> kept_labels;
  for (const auto& l : reg.labels())
    if (std::find(keep.begin(), keep.end(), l) != keep.end()) kept_labels.push_back(l);
  for (const auto& k : keep)
    if (!reg.contains(k)) throw LabelError("unknown qubit label '" + k + "'");
  if (kept_labels.size() != keep.size()) throw LabelError("duplicate label in keep set");

  std::vector<std::size_t> kept_shifts, traced_shifts;
  for (const auto& l : reg.labels()) {
    if (std::find(kept_labels.begin(), kept_labels.end(), l) != kept_labels.end())
      kept_shifts.push_back(reg.shift_of(l));
    else
      traced_shifts.push_back(reg.shift_of(l));
  }
  auto compose = [](std::size_t value, const std::vector<std::size_t>& shifts) {
    // value bit (n-1-k) goes to shifts[k]; shifts are in register order (msb first).
    std::size_t out = 0;
    const std::size_t n = shifts.size();
    for (std::size_t k = 0; k < n; ++k)
      if ((value >> (n - 1 - k)) & 1U) out |= std::size_t{1} << shifts[k];
    return out;
  };

  QubitRegister out_reg(kept_labels);
  const std::size_t dk = out_reg.dim();
  const std::size_t dt = std::size_t{1} << traced_shifts.size();
  Matrix red = Matrix::Zero(static_cast<Eigen::Index>(dk), static_cast<Eigen::Index>(dk));
  for (std::size_t a = 0; a < dk; ++a) {
    const std::size_t ia = compose(a, kept_shifts);
    for (std::size_t b = 0; b < dk; ++b) {
      const std::size_t ib = compose(b, kept_shifts);
      cplx acc{};
      for (std::size_t e = 0; e < dt; ++e) {
        const std::size_t ie = compose(e, traced_shifts);
        acc += rho.m(static_cast<Eigen::Index>(ia | ie), static_cast<Eigen::Index>(ib | ie));
      }
      red(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc;
    }
  }
  return {std::move(out_reg), std::move(red), rho.physical};
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<std::string> keep) {
  return partial_trace(rho, std::span<const std::string>(keep.begin(), keep.size()));
}

}  // namespace qrouter
