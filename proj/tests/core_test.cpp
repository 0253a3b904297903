#include "qrouter/core.hpp"
#include "test_support.hpp"

#include <unsupported/Eigen/KroneckerProduct>

using namespace qrouter;
using qrouter::testing::Gen;
using qrouter::testing::max_diff;

namespace {

// Kronecker-product oracle: ops[k] acts on register position k.
Matrix kron_all(const std::vector<Matrix2>& ops) {
  Matrix m = Matrix::Identity(1, 1);
  for (const auto& o : ops) m = Eigen::kroneckerProduct(m, Matrix(o)).eval();
  return m;
}

}  // namespace

TEST(Register, RejectsBadLabels) {
  EXPECT_THROW(QubitRegister({"a", "a"}), LabelError);
  EXPECT_THROW(QubitRegister({"a", ""}), LabelError);
  EXPECT_THROW(QubitRegister(std::vector<std::string>{}), ValidationError);
  std::vector<std::string> many;
  for (int i = 0; i < 13; ++i) many.push_back("q" + std::to_string(i));
  EXPECT_THROW(QubitRegister{many}, ValidationError);
  many.pop_back();
  EXPECT_EQ(QubitRegister{many}.dim(), 4096u);
}

TEST(Register, FirstLabelIsMostSignificant) {
  const QubitRegister reg{"a", "b", "c"};
  EXPECT_EQ(reg.shift_of("a"), 2u);
  EXPECT_EQ(reg.shift_of("c"), 0u);
  EXPECT_THROW(reg.index_of("d"), LabelError);
  EXPECT_EQ(basis_index(reg, "100"), 4u);
  EXPECT_EQ(bitstring(reg, 3), "011");
}

TEST(Pauli, ZIsPlusOneOnGround) {
  const QubitRegister reg{"a", "b"};
  EXPECT_NEAR(expectation(pauli(reg, "a", Axis::z), basis_state(reg, "00")).real(), 1.0, 1e-15);
  EXPECT_NEAR(expectation(pauli(reg, "a", Axis::z), basis_state(reg, "10")).real(), -1.0, 1e-15);
}

TEST(Pauli, XOnSecondQubitFlipsIt) {
  const QubitRegister reg{"a", "b"};
  const StateVector out = pauli(reg, "b", Axis::x) * basis_state(reg, "00");
  EXPECT_NEAR(state_fidelity(out, basis_state(reg, "01")), 1.0, 1e-15);
}

TEST(Pauli, CommutationRelation) {
  const QubitRegister reg{"a"};
  const Operator x = pauli(reg, "a", Axis::x), y = pauli(reg, "a", Axis::y), z = pauli(reg, "a", Axis::z);
  EXPECT_LT(max_diff(commutator(x, y).m, (cplx{0.0, 2.0} * z).m), 1e-15);
}

TEST(Ladder, RaiseMapsGroundToExcited) {
  const QubitRegister reg{"a"};
  const Operator up = ladder(reg, "a", Ladder::raise), down = ladder(reg, "a", Ladder::lower);
  EXPECT_NEAR(state_fidelity(up * basis_state(reg, "0"), basis_state(reg, "1")), 1.0, 1e-15);
  EXPECT_LT(max_diff((up + down).m, pauli(reg, "a", Axis::x).m), 1e-15);
  EXPECT_LT(max_diff((kI * (up - down)).m, pauli(reg, "a", Axis::y).m), 1e-15);
}

TEST(Embed, RejectsRepeatedAndUnknownLabels) {
  const QubitRegister reg{"a", "b"};
  EXPECT_THROW(embed(reg, {{"a", pauli_matrix(Axis::x)}, {"a", pauli_matrix(Axis::z)}}), LabelError);
  EXPECT_THROW(pauli(reg, "c", Axis::x), LabelError);
}

TEST(Embed, MatchesKroneckerOracle) {
  Gen g;
  for (int c = 0; c < qrouter::testing::kCases; ++c) {
    const int n = g.integer(1, 5);
    const QubitRegister reg = g.reg(n);
    std::vector<Matrix2> ops(static_cast<std::size_t>(n), Matrix2::Identity());
    std::vector<Factor> factors;
    for (int k = 0; k < n; ++k)
      if (g.uniform() < 0.6) {
        ops[static_cast<std::size_t>(k)] = g.complex_matrix(2, 2);
        factors.push_back({reg.labels()[static_cast<std::size_t>(k)], ops[static_cast<std::size_t>(k)]});
      }
    EXPECT_LT(max_diff(embed(reg, factors).m, kron_all(ops)), 1e-12);
  }
}

TEST(Embed, PaulisOnDistinctQubitsCommute) {
  Gen g;
  for (int c = 0; c < qrouter::testing::kCases; ++c) {
    const int n = g.integer(2, 5);
    const QubitRegister reg = g.reg(n);
    const int a = g.integer(0, n - 1);
    int b = g.integer(0, n - 2);
    if (b >= a) ++b;
    const auto pa = pauli(reg, reg.labels()[static_cast<std::size_t>(a)], static_cast<Axis>(g.integer(0, 2)));
    const auto pb = pauli(reg, reg.labels()[static_cast<std::size_t>(b)], static_cast<Axis>(g.integer(0, 2)));
    EXPECT_LT(max_abs(commutator(pa, pb).m), 1e-15);
  }
}

TEST(Embed, IsHomomorphismOnOneQubit) {
  Gen g;
  for (int c = 0; c < qrouter::testing::kCases; ++c) {
    const QubitRegister reg = g.reg(g.integer(1, 4));
    const std::string& l = reg.labels()[static_cast<std::size_t>(g.integer(0, static_cast<int>(reg.size()) - 1))];
    const Matrix2 a = g.complex_matrix(2, 2), b = g.complex_matrix(2, 2);
    EXPECT_LT(max_diff((embed(reg, l, a) * embed(reg, l, b)).m, embed(reg, l, a * b).m), 1e-12);
  }
}

TEST(TotalZ, CountsExcitations) {
  const QubitRegister reg{"a", "b", "c"};
  EXPECT_NEAR(expectation(total_z(reg), basis_state(reg, "101")).real(), -1.0, 1e-15);
  Operator sum = Operator::zero(reg);
  for (const auto& l : reg.labels()) sum += pauli(reg, l, Axis::z);
  EXPECT_LT(max_diff(sum.m, total_z(reg).m), 1e-15);
}

TEST(Operator, ShapeAndRegisterChecks) {
  const QubitRegister a{"a"}, b{"b"};
  EXPECT_THROW(Operator(a, Matrix::Identity(4, 4)), ShapeError);
  EXPECT_THROW(pauli(a, "a", Axis::x) * pauli(b, "b", Axis::x), LabelError);
  EXPECT_THROW(StateVector(a, Vector::Zero(3)), ShapeError);
}

TEST(BasisState, Validation) {
  const QubitRegister reg{"a", "b"};
  EXPECT_THROW(basis_state(reg, "0"), ShapeError);
  EXPECT_THROW(basis_state(reg, "0x"), ValidationError);
}

TEST(DensityMatrix, PhysicalValidation) {
  const QubitRegister reg{"a"};
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 1.0;
  EXPECT_THROW(DensityMatrix(reg, m), ValidationError);
  EXPECT_NO_THROW(DensityMatrix(reg, m, false));
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  EXPECT_THROW(DensityMatrix(reg, neg), ValidationError);
}

TEST(PartialTrace, ProductStateFactorizes) {
  Gen g;
  const QubitRegister ra{"a"}, rb{"b", "c"}, reg{"a", "b", "c"};
  const DensityMatrix rho_a = g.density(ra, 2), rho_b = g.density(rb, 2);
  const DensityMatrix rho{reg, Eigen::kroneckerProduct(rho_a.m, rho_b.m).eval()};
  EXPECT_LT(max_diff(partial_trace(rho, {"a"}).m, rho_a.m), 1e-12);
  EXPECT_LT(max_diff(partial_trace(rho, {"b", "c"}).m, rho_b.m), 1e-12);
}

TEST(PartialTrace, BellHalfIsMaximallyMixed) {
  const QubitRegister reg{"a", "b"};
  const StateVector bell{reg, (basis_state(reg, "00").amp + basis_state(reg, "11").amp) / std::sqrt(2.0)};
  const DensityMatrix red = partial_trace(DensityMatrix::pure(bell), {"b"});
  EXPECT_LT(max_diff(red.m, 0.5 * Matrix::Identity(2, 2)), 1e-15);
}

TEST(PartialTrace, KeepsRegisterOrder) {
  const QubitRegister reg{"a", "b", "c"};
  const DensityMatrix rho = DensityMatrix::pure(basis_state(reg, "110"));
  const DensityMatrix red = partial_trace(rho, {"c", "a"});
  EXPECT_EQ(red.reg.labels(), (std::vector<std::string>{"a", "c"}));
  EXPECT_NEAR(red.m(basis_index(red.reg, "10"), basis_index(red.reg, "10")).real(), 1.0, 1e-15);
}

TEST(PartialTrace, Errors) {
  const QubitRegister reg{"a", "b"};
  const DensityMatrix rho = DensityMatrix::pure(basis_state(reg, "00"));
  EXPECT_THROW(partial_trace(rho, std::span<const std::string>{}), ValidationError);
  EXPECT_THROW(partial_trace(rho, {"z"}), LabelError);
  EXPECT_THROW(partial_trace(rho, {"a", "a"}), LabelError);
}

TEST(PartialTrace, CompositionAndTraceProperty) {
  Gen g;
  for (int c = 0; c < qrouter::testing::kCases; ++c) {
    const int n = g.integer(2, 5);
    const QubitRegister reg = g.reg(n);
    const DensityMatrix rho = g.density(reg);
    std::vector<std::string> keep, rest;
    for (const auto& l : reg.labels()) (g.uniform() < 0.5 ? keep : rest).push_back(l);
    if (keep.empty()) keep.push_back(rest.back()), rest.pop_back();
    if (rest.empty()) rest.push_back(keep.back()), keep.pop_back();
    const DensityMatrix a = partial_trace(rho, keep), b = partial_trace(rho, rest);
    EXPECT_NEAR(a.trace().real(), 1.0, 1e-12);
    EXPECT_NEAR(b.trace().real(), 1.0, 1e-12);
    EXPECT_LT(max_diff(a.m, a.m.adjoint()), 1e-12);
    // Tracing in two stages equals tracing at once.
    const std::vector<std::string> one{keep.front()};
    EXPECT_LT(max_diff(partial_trace(a, one).m, partial_trace(rho, one).m), 1e-12);
    // Local observables see the same expectation value before and after the trace.
    const Operator z_full = pauli(reg, keep.front(), Axis::z);
    const Operator z_red = pauli(a.reg, keep.front(), Axis::z);
    EXPECT_NEAR(expectation(z_full, rho).real(), expectation(z_red, a).real(), 1e-12);
  }
}

TEST(Populations, StateAndDensityAgree) {
  Gen g;
  const QubitRegister reg = g.reg(3);
  const StateVector s = g.state(reg);
  const DensityMatrix rho = DensityMatrix::pure(s);
  for (const auto& l : reg.labels()) EXPECT_NEAR(excited_population(s, l), excited_population(rho, l), 1e-14);
}

TEST(Units, Conversions) {
  EXPECT_DOUBLE_EQ(units::mhz(1.0), 2.0 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(units::ghz(1.0), units::mhz(1000.0));
  EXPECT_DOUBLE_EQ(units::to_mhz(units::mhz(12.5)), 12.5);
}
