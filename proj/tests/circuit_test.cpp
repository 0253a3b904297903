#include "qrouter/circuit.hpp"
#include "test_support.hpp"

using namespace qrouter;

namespace {

constexpr double kRel = 1e-9;

void expect_rel(double actual, double expected, double rel, const char* what) {
  EXPECT_NEAR(actual, expected, rel * std::abs(expected)) << what;
}

// Diagonal spin model on (output1, output2, control) with sigma^z = 1 - 2n,
// plus an optional output-output exchange.
BosonicOperator spin_model(double d1, double d2, double dc, double jz1, double jz2, double jx12) {
  Matrix m = Matrix::Zero(8, 8);
  for (int n1 = 0; n1 < 2; ++n1)
    for (int n2 = 0; n2 < 2; ++n2)
      for (int nc = 0; nc < 2; ++nc) {
        const double z1 = 1 - 2 * n1, z2 = 1 - 2 * n2, zc = 1 - 2 * nc;
        m(4 * n1 + 2 * n2 + nc, 4 * n1 + 2 * n2 + nc) =
            -0.5 * d1 * z1 - 0.5 * d2 * z2 - 0.5 * dc * zc + jz1 * z1 * zc + jz2 * z2 * zc;
      }
  for (int nc = 0; nc < 2; ++nc) {
    m(4 + nc, 2 + nc) = jx12;
    m(2 + nc, 4 + nc) = jx12;
  }
  return {{"output1", "output2", "control"}, 2, m};
}

}  // namespace

TEST(Circuit, ChargingConstant) {
  // (2e)^2 / hbar in rad/us per fF^-1.
  EXPECT_NEAR(constants::kCharging, 973653.92, 0.01);
}

TEST(Circuit, Validation) {
  CircuitParams p = CircuitParams::table_one();
  p.c_q = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = CircuitParams::table_one();
  p.e_z = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = CircuitParams::table_one();
  p.e_1 = std::nan("");
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_NO_THROW(CircuitParams::zero_coupler().validate());
  EXPECT_TRUE(CircuitParams::table_one().warnings().empty());
  p = CircuitParams::table_one();
  p.c_z = 30.0;
  EXPECT_FALSE(p.warnings().empty());
}

TEST(Circuit, CapacitanceMatrices) {
  const auto p = CircuitParams::table_one();
  const Eigen::Matrix3d c = capacitance_matrix(p);
  EXPECT_TRUE(c.isApprox(c.transpose()));
  EXPECT_DOUBLE_EQ(c(0, 0), 93.7);
  EXPECT_DOUBLE_EQ(c(2, 2), 107.4);
  EXPECT_DOUBLE_EQ(c(0, 2), -13.7);
  const Eigen::Matrix3d z = capacitance_matrix(CircuitParams::zero_coupler());
  EXPECT_TRUE(z.isDiagonal());
  const Eigen::Matrix4d f = full_capacitance_matrix(p);
  EXPECT_NEAR(f(0, 0), 80.164, 1e-12);
  EXPECT_DOUBLE_EQ(f(0, 1), -0.082);
}

TEST(Circuit, DerivedModeGoldens) {
  // [DERIVED] independent numpy evaluation, rad/us.
  const DerivedModeParams d = derive_mode_params(CircuitParams::table_one());
  expect_rel(d.cap_inv(0, 0), 10592.4969066, kRel, "Cinv11");
  expect_rel(d.cap_inv(0, 1), 201.313097557, kRel, "Cinv12");
  expect_rel(d.cap_inv(0, 2), 1376.86403219, kRel, "Cinv13");
  expect_rel(d.cap_inv(2, 2), 9416.94597201, kRel, "Cinv33");
  expect_rel(d.zeta[0], 0.272638832681, kRel, "zeta1");
  expect_rel(d.zeta[1], 0.270853359429, kRel, "zeta2");
  expect_rel(d.zeta[2], 0.181174533447, kRel, "zetaC");
  expect_rel(d.e_c[0], 1324.06211333, kRel, "EC1");
  expect_rel(d.e_c[2], 1177.1182465, kRel, "ECC");
  expect_rel(d.omega[0], 37393.4616766, kRel, "omega1");
  expect_rel(d.omega[1], 37650.45263, kRel, "omega2");
  expect_rel(d.omega[2], 50532.5056199, kRel, "omegaC");
  expect_rel(d.omega_bar, 37521.9571533, kRel, "omega_bar");
  expect_rel(d.small_delta, -128.495476736, kRel, "delta");
  expect_rel(d.big_delta, 13010.5484666, kRel, "Delta");
  for (int i = 0; i < 3; ++i) EXPECT_EQ(d.alpha[i], -d.e_c[i]);
}

TEST(Circuit, CouplingGoldens) {
  const auto p = CircuitParams::table_one();
  const DerivedModeParams d = derive_mode_params(p);
  const CouplingStrengths g = coupling_strengths(p, d);
  expect_rel(g.g_z[0], -268.460775917, kRel, "gz1");
  expect_rel(g.g_x12, 370.408603507, kRel, "gx12");
  expect_rel(g.g_x[0], 818.753469393, kRel, "gx1");
  expect_rel(g.g_x[1], 835.882889359, kRel, "gx2");
  expect_rel(g.g_xz[0], 301.980164334, kRel, "gxz1");
}

TEST(Circuit, EffectiveSpinGoldens) {
  const EffectiveSpinParams e = effective_spin_params(CircuitParams::table_one());
  expect_rel(e.delta_1, -5.80412854316, 1e-8, "Delta1");
  expect_rel(e.delta_2, -261.917363404, kRel, "Delta2");
  expect_rel(e.delta_c, -267.44194814, kRel, "DeltaC");
  expect_rel(e.jz[0], -67.1130710555, kRel, "Jz1");
  expect_rel(e.jz[1], -66.6735913871, kRel, "Jz2");
  expect_rel(e.jx12, 281.903254077, kRel, "Jx12");
  expect_rel(e.jxz12, 17.1036579784, kRel, "Jxz12");
  expect_rel(e.jx_in[0], 18.1322168134, kRel, "JxI1");
  expect_rel(e.jx_in[1], 18.1918826964, kRel, "JxI2");
  EXPECT_FALSE(e.warnings.empty());
}

TEST(Circuit, ClosedFormNearReportedCouplings) {
  // [PAPER] J^z = -9.95 and J^x = 2.78 (2 pi MHz); the closed forms are approximate.
  const EffectiveSpinParams e = effective_spin_params(CircuitParams::table_one());
  EXPECT_NEAR(units::to_mhz(e.jz[0]), -9.95, 0.15 * 9.95);
  EXPECT_NEAR(units::to_mhz(e.jx_in[0]), 2.78, 0.05 * 2.78);
}

TEST(Circuit, SymmetricJunctionsGiveSymmetricCouplings) {
  CircuitParams p = CircuitParams::table_one();
  p.e_1 = p.e_2;
  const DerivedModeParams d = derive_mode_params(p);
  const CouplingStrengths g = coupling_strengths(p, d);
  EXPECT_NEAR(d.small_delta, 0.0, 1e-9);
  EXPECT_NEAR(g.g_z[0], g.g_z[1], 1e-12 * std::abs(g.g_z[0]));
  const EffectiveSpinParams e = effective_spin_params(p, d, g);
  EXPECT_NEAR(e.jz[0], e.jz[1], 1e-12 * std::abs(e.jz[0]));
}

TEST(Circuit, ZeroCouplerHasNoCouplings) {
  const EffectiveSpinParams e = effective_spin_params(CircuitParams::zero_coupler());
  EXPECT_EQ(e.jz[0], 0.0);
  EXPECT_EQ(e.jz[1], 0.0);
  EXPECT_EQ(e.jx12, 0.0);
  EXPECT_EQ(e.jx_in[0], 0.0);
}

TEST(Circuit, SingularDetuningRejected) {
  const auto p = CircuitParams::table_one();
  DerivedModeParams d = derive_mode_params(p);
  d.big_delta = 0.0;
  EXPECT_THROW(effective_spin_params(p, d, coupling_strengths(p, d)), ValidationError);
}

TEST(CircuitNumeric, HamiltonianShapeAndSymmetry) {
  EXPECT_THROW(full_circuit_hamiltonian(CircuitParams::table_one(), 3), ValidationError);
  const BosonicOperator h = full_circuit_hamiltonian(CircuitParams::table_one(), 5);
  EXPECT_EQ(h.dim(), 125u);
  EXPECT_LT((h.m - h.m.adjoint()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(h.index({1, 0, 1}), 26u);
}

TEST(CircuitNumeric, UncoupledTransitionsNearTransmonFormula) {
  const auto p = CircuitParams::zero_coupler();
  const DerivedModeParams d = derive_mode_params(p);
  const NumericCouplings n = extract_couplings_numeric(full_circuit_hamiltonian(p, 7), p);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(n.transitions[i], d.omega[i], 0.1 * d.e_c[i]) << i;
  EXPECT_LT(std::abs(n.jz[0]), 1e-9 * d.omega_bar);
  EXPECT_LT(std::abs(n.jz[1]), 1e-9 * d.omega_bar);
}

TEST(CircuitNumeric, ExtractorRecoversSpinModel) {
  const auto p = CircuitParams::table_one();
  const double jz1 = -60.0, jz2 = -55.0;
  const NumericCouplings exact = extract_couplings_numeric(spin_model(300.0, -250.0, 4000.0, jz1, jz2, 0.0), p);
  EXPECT_NEAR(exact.jz[0], jz1, 1e-10);
  EXPECT_NEAR(exact.jz[1], jz2, 1e-10);
  EXPECT_NEAR(exact.min_overlap, 1.0, 1e-12);
  // A weak exchange dresses the states without breaking the labeling.
  const NumericCouplings dressed = extract_couplings_numeric(spin_model(300.0, -250.0, 4000.0, jz1, jz2, 20.0), p);
  EXPECT_NEAR(dressed.jz[0], jz1, 2.0);
  EXPECT_GT(dressed.min_overlap, 0.9);
}

TEST(CircuitNumeric, LabelingFailsOnDegenerateMixing) {
  // Outputs degenerate in every control sector: the exchange mixes them 50/50.
  const auto p = CircuitParams::table_one();
  EXPECT_THROW(extract_couplings_numeric(spin_model(300.0, 300.0, 4000.0, -60.0, -60.0, 20.0), p), LabelError);
}

TEST(CircuitNumeric, TableOneGoldens) {
  // [DERIVED] numpy diagonalization of the same truncated Hamiltonian, 2 pi MHz.
  const auto p = CircuitParams::table_one();
  const NumericCouplings six = extract_couplings_numeric(full_circuit_hamiltonian(p, 6), p);
  EXPECT_NEAR(units::to_mhz(six.jz[0]), -10.46750072858496, 1e-7);
  EXPECT_NEAR(units::to_mhz(six.jz[1]), -10.444072203282056, 1e-7);
  const NumericCouplingReport r = numeric_couplings(p, 7);
  EXPECT_NEAR(units::to_mhz(r.result.jz[0]), -10.510071451907226, 1e-7);
  EXPECT_NEAR(units::to_mhz(r.result.jz[1]), -10.487993897762383, 1e-7);
  EXPECT_NEAR(units::to_mhz(r.refined.jz[0]), -10.520368798595758, 1e-7);
  EXPECT_LT(r.max_relative_change, kTruncationTolerance);
  EXPECT_GT(r.result.min_overlap, kMinLabelOverlap);
}

TEST(CircuitNumeric, ClosedFormTracksNumeric) {
  const auto p = CircuitParams::table_one();
  const EffectiveSpinParams e = effective_spin_params(p);
  const NumericCouplingReport r = numeric_couplings(p, 6);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(e.jz[i] / r.result.jz[i], 1.0, 0.05);
}

TEST(CircuitNumeric, CoarseTruncationDoesNotConverge) {
  EXPECT_THROW(numeric_couplings(CircuitParams::table_one(), 4), ConvergenceError);
}
