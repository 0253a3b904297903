#include "qrouter/fidelity.hpp"
#include "test_support.hpp"

using namespace qrouter;
using qrouter::testing::Gen;
using qrouter::testing::max_diff;

namespace {

const double kJz = units::mhz(10.0);

// [DERIVED] F-bar from a dense Liouvillian exponential (Jz = 2 pi 10 MHz, T1 = T2 = 30 us).
struct FbarGolden {
  double ratio;
  double noiseless;
  double noisy;
};
const FbarGolden kFbarGoldens[] = {
    {2.0, 0.9868092740161294, 0.9846107678479967},   {4.0, 0.9966217573330927, 0.9921764436559072},
    {4.192, 0.9971033679882798, 0.9924422927338011}, {8.0, 0.9991503794717667, 0.9902606164401982},
    {16.0, 0.9997872783518063, 0.9821103137137822},  {20.0, 0.9998638338324904, 0.9778380331073031},
    {32.0, 0.9999467998018681, 0.9650467929502821},
};

Operator random_unitary(Gen& g, const QubitRegister& reg) {
  return propagator({reg, g.hermitian(static_cast<Eigen::Index>(reg.dim()))}, 1.0);
}

}  // namespace

TEST(Basis, Validation) {
  EXPECT_THROW(SubspaceBasis(two_output_register(), {}), ValidationError);
  EXPECT_THROW(SubspaceBasis(two_output_register(), {"1000", "1000"}), ValidationError);
  EXPECT_THROW(SubspaceBasis(two_output_register(), {"100"}), ShapeError);
  const SubspaceBasis b = two_output_basis();
  EXPECT_EQ(b.n(), 4u);
  EXPECT_EQ(b.indices, (std::vector<std::size_t>{0, 8, 1, 9}));
}

TEST(Fidelity, IdealChannelScoresOne) {
  const Operator u = ideal_transfer_unitary();
  const auto ch = channel_tomography(unitary_channel(u), two_output_basis());
  EXPECT_NEAR(average_process_fidelity(ch, u), 1.0, 1e-12);
  const auto id = channel_tomography(unitary_channel(Operator::identity(u.reg)), two_output_basis());
  EXPECT_LT(max_diff(id.action(Operator::identity(u.reg)), Matrix::Identity(16, 16)), 1e-15);
}

TEST(Fidelity, RejectsNonUnitaryTarget) {
  const auto ch = channel_tomography(unitary_channel(Operator::identity(two_output_register())), two_output_basis());
  EXPECT_THROW(average_process_fidelity(ch, routing_generator()), ValidationError);
}

TEST(Fidelity, GlobalPhaseInvariance) {
  Gen g;
  for (int c = 0; c < 10; ++c) {
    const Operator u = random_unitary(g, two_output_register());
    const Operator v = random_unitary(g, two_output_register());
    const auto ch = channel_tomography(unitary_channel(u), two_output_basis());
    const cplx phase = std::exp(cplx{0.0, g.uniform(0.0, 6.28)});
    EXPECT_NEAR(average_process_fidelity(ch, v), average_process_fidelity(ch, phase * v), 1e-12);
  }
}

TEST(Fidelity, UnitaryChannelClosedForm) {
  // For unitary V and target U on an n-dim subspace left invariant by both,
  // F-bar = (n + |tr(U^dag V)|^2) / (n (n + 1)).
  const SubspaceBasis b{QubitRegister{"a", "b"}, {"00", "01", "10", "11"}};
  Gen g;
  for (int c = 0; c < 10; ++c) {
    const Operator u = random_unitary(g, b.reg), v = random_unitary(g, b.reg);
    const double tr = std::norm((u.m.adjoint() * v.m).trace());
    EXPECT_NEAR(average_process_fidelity(channel_tomography(unitary_channel(v), b), u), (4.0 + tr) / 20.0, 1e-12);
  }
}

TEST(Fidelity, NoiselessGoldens) {
  for (const auto& k : kFbarGoldens)
    EXPECT_NEAR(two_output_fidelity(TwoOutputParams::from_ratio(kJz, k.ratio), NoiseModel::none()), k.noiseless, 1e-10)
        << k.ratio;
}

TEST(Fidelity, NoisyGoldens) {
  const NoiseModel noise = NoiseModel::uniform(30.0, 30.0);
  for (const auto& k : kFbarGoldens)
    EXPECT_NEAR(two_output_fidelity(TwoOutputParams::from_ratio(kJz, k.ratio), noise), k.noisy, 1e-7) << k.ratio;
}

TEST(Fidelity, NoiselessMonotoneInRatio) {
  double prev = 0.0;
  for (double r : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0}) {
    const double f = two_output_fidelity(TwoOutputParams::from_ratio(kJz, r), NoiseModel::none());
    EXPECT_GE(f, prev - 1e-12) << r;
    prev = f;
  }
}

TEST(Fidelity, NoisyHasInteriorMaximum) {
  const NoiseModel noise = NoiseModel::uniform(30.0, 30.0);
  std::vector<double> f;
  const std::vector<double> ratios{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0};
  for (double r : ratios) f.push_back(two_output_fidelity(TwoOutputParams::from_ratio(kJz, r), noise));
  const auto k = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
  EXPECT_GE(ratios[k], 4.0);
  EXPECT_LE(ratios[k], 5.0);
  for (std::size_t i = 1; i <= k; ++i) EXPECT_GT(f[i], f[i - 1]);
  for (std::size_t i = k + 1; i < f.size(); ++i) EXPECT_LT(f[i], f[i - 1]);
}

TEST(Fidelity, NoisyChannelImagesAreHermitianCovariant) {
  const auto p = TwoOutputParams::from_ratio(kJz, 4.192);
  const auto ch = channel_tomography(two_output_channel(p, NoiseModel::uniform(30.0, 30.0), p.transfer_time()),
                                     two_output_basis());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_LT(max_diff(ch.image(i, j).adjoint(), ch.image(j, i)), 1e-12);
      EXPECT_NEAR(std::abs(ch.image(i, j).trace()), i == j ? 1.0 : 0.0, 1e-9);
    }
}

TEST(MonteCarlo, AgreesWithClosedForm) {
  const NoiseModel noise = NoiseModel::uniform(30.0, 30.0);
  const SubspaceBasis b = two_output_basis();
  const Operator target = ideal_transfer_unitary();
  std::uint64_t seed = 11;
  for (double r : {2.0, 4.192, 8.0}) {
    for (const NoiseModel& n : {NoiseModel::none(), noise}) {
      const auto p = TwoOutputParams::from_ratio(kJz, r);
      const Evolver ch = two_output_channel(p, n, p.transfer_time());
      const double closed = average_process_fidelity(channel_tomography(ch, b), target);
      const MonteCarloEstimate mc = haar_monte_carlo_fidelity(ch, target, b, 2000, seed++);
      EXPECT_LT(std::abs(mc.mean - closed), 3.0 * mc.stderr_) << r;
    }
  }
}

TEST(MonteCarlo, SeededAndValidated) {
  const Operator u = ideal_transfer_unitary();
  const Evolver ch = unitary_channel(u);
  const auto a = haar_monte_carlo_fidelity(ch, u, two_output_basis(), 200, 5);
  const auto b = haar_monte_carlo_fidelity(ch, u, two_output_basis(), 200, 5);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_NEAR(a.mean, 1.0, 1e-12);
  EXPECT_THROW(haar_monte_carlo_fidelity(ch, u, two_output_basis(), 99, 5), ValidationError);
}

TEST(Rwa, FidelityGoldenAndLargeRatio) {
  EXPECT_NEAR(rwa_fidelity(TwoOutputParams::from_ratio(kJz, 5.0), 0), 0.9969025534904673, 1e-10);
  for (double r : {20.0, 40.0})
    for (int c : {0, 1}) EXPECT_GE(rwa_fidelity(TwoOutputParams::from_ratio(kJz, r), c), 0.995);
  EXPECT_THROW(rwa_fidelity(TwoOutputParams::from_ratio(kJz, 5.0), 2), ValidationError);
}

TEST(Routing, Classification) {
  RoutingRow r{"0", 0.0, RouteKind::ambiguous, {}, {{"input", 0.01}, {"output1", 0.97}, {"output2", 0.02}}};
  classify_route(r);
  EXPECT_EQ(r.kind, RouteKind::selected);
  EXPECT_EQ(r.destinations, (std::vector<std::string>{"output1"}));
  r.populations = {{"input", 0.0}, {"output1", 0.49}, {"output2", 0.0}, {"output3", 0.49}};
  classify_route(r);
  EXPECT_EQ(r.kind, RouteKind::entangled);
  r.populations = {{"input", 0.9}, {"output1", 0.05}, {"output2", 0.05}};
  classify_route(r);
  EXPECT_EQ(r.kind, RouteKind::remained);
  r.populations = {{"input", 0.4}, {"output1", 0.3}, {"output2", 0.3}};
  classify_route(r);
  EXPECT_EQ(r.kind, RouteKind::ambiguous);
  EXPECT_THROW(r.population("output9"), LabelError);
}

TEST(Routing, TwoOutputTable) {
  const RoutingTable t = routing_table(TwoOutputParams::from_ratio(kJz, 5.0));
  EXPECT_EQ(t.row("0").destinations, (std::vector<std::string>{"output1"}));
  EXPECT_EQ(t.row("1").destinations, (std::vector<std::string>{"output2"}));
  EXPECT_NEAR(t.row("0").population("output1"), 0.9969025534904642, 1e-12);
  EXPECT_THROW(t.row("2"), LabelError);
}

TEST(Routing, ThreeOutputSelectiveGoldens) {
  // [DERIVED] dense-exponential populations at ratio 10; controls written (control1, control2).
  const auto p = ThreeOutputParams::for_mode(kJz, kJz / 10.0, ThreeOutputMode::selective);
  const RoutingTable raw = routing_table(p, p.transfer_time());
  EXPECT_NEAR(raw.row("00").population("output2"), 0.9981355814845966, 1e-10);
  EXPECT_NEAR(raw.row("01").population("output3"), 0.9987507125525978, 1e-10);
  EXPECT_NEAR(raw.row("10").population("output1"), 0.9987507125525972, 1e-10);
  EXPECT_NEAR(raw.row("11").population("input"), 0.36643456766207827, 1e-10);
  EXPECT_NEAR(raw.row("11").population("output1"), 0.3165813999333228, 1e-10);
  EXPECT_EQ(raw.row("11").kind, RouteKind::ambiguous);

  const RoutingTable t = routing_table(p);
  EXPECT_EQ(t.row("00").destinations, (std::vector<std::string>{"output2"}));
  EXPECT_EQ(t.row("01").destinations, (std::vector<std::string>{"output3"}));
  EXPECT_EQ(t.row("10").destinations, (std::vector<std::string>{"output1"}));
  // Two open outputs swap at T / sqrt(2).
  EXPECT_EQ(t.row("11").kind, RouteKind::entangled);
  EXPECT_EQ(t.row("11").destinations, (std::vector<std::string>{"output1", "output3"}));
  EXPECT_NEAR(t.row("11").time, p.transfer_time() / std::sqrt(2.0), 1e-15);
}

TEST(Routing, ThreeOutputEntangleGoldens) {
  const auto p = ThreeOutputParams::for_mode(kJz, kJz / 10.0, ThreeOutputMode::entangle);
  const RoutingTable t = routing_table(p);
  EXPECT_NEAR(t.row("00").time, 0.17677669529663687, 1e-15);
  EXPECT_NEAR(t.row("00").population("output1"), 0.49965807629063197, 1e-10);
  EXPECT_NEAR(t.row("00").population("output3"), 0.49965807629063197, 1e-10);
  EXPECT_EQ(t.row("00").destinations, (std::vector<std::string>{"output1", "output3"}));
  EXPECT_EQ(t.row("01").destinations, (std::vector<std::string>{"output1", "output2"}));
  EXPECT_EQ(t.row("10").destinations, (std::vector<std::string>{"output2", "output3"}));
  EXPECT_EQ(t.row("11").kind, RouteKind::remained);
  EXPECT_NEAR(t.row("11").population("input"), 0.9993226700889862, 1e-10);
}

TEST(TransferTime, SingleExchangePeak) {
  const QubitRegister reg{"a", "b"};
  const double j = 2.0;
  const Operator h = 0.5 * j * (embed(reg, {{"a", pauli_matrix(Axis::x)}, {"b", pauli_matrix(Axis::x)}}) +
                                embed(reg, {{"a", pauli_matrix(Axis::y)}, {"b", pauli_matrix(Axis::y)}}));
  const TransferPeak peak = locate_transfer_time(h, basis_state(reg, "10"), {"b"}, 1.2);
  EXPECT_NEAR(peak.time, std::numbers::pi / (2.0 * j), 1e-8);
  EXPECT_NEAR(peak.population, 1.0, 1e-12);
  EXPECT_THROW(locate_transfer_time(h, basis_state(reg, "10"), {"b"}, 0.0), ValidationError);
}

TEST(TransferTime, EntangleModePeakGolden) {
  const auto p = ThreeOutputParams::for_mode(kJz, kJz / 10.0, ThreeOutputMode::entangle);
  const Operator h = three_output_hamiltonian(p);
  const TransferPeak peak =
      locate_transfer_time(h, basis_state(h.reg, "100000"), {"output1", "output3"}, 1.5 * p.transfer_time());
  EXPECT_NEAR(peak.time / p.transfer_time(), 0.7075453693756921, 1e-7);
  EXPECT_NEAR(peak.population, 0.9993171088079498, 1e-9);
}

TEST(Concurrence, ProductAndBell) {
  const QubitRegister reg{"a", "b"};
  EXPECT_NEAR(concurrence(DensityMatrix::pure(basis_state(reg, "01"))), 0.0, 1e-12);
  const StateVector bell{reg, (basis_state(reg, "01").amp + basis_state(reg, "10").amp) / std::sqrt(2.0)};
  EXPECT_NEAR(concurrence(DensityMatrix::pure(bell)), 1.0, 1e-12);
  EXPECT_NEAR(concurrence({reg, 0.25 * Matrix::Identity(4, 4)}), 0.0, 1e-12);
  EXPECT_THROW(concurrence(DensityMatrix::pure(basis_state(QubitRegister{"a"}, "0"))), ShapeError);
}

TEST(Concurrence, RandomProductStatesAreSeparable) {
  Gen g;
  for (int c = 0; c < qrouter::testing::kCases; ++c) {
    const Vector a = g.state(QubitRegister{"a"}).amp, b = g.state(QubitRegister{"b"}).amp;
    Vector ab(4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) ab(2 * i + j) = a(i) * b(j);
    EXPECT_NEAR(concurrence(DensityMatrix::pure({QubitRegister{"a", "b"}, ab})), 0.0, 1e-7);
  }
}

TEST(Concurrence, RouterOnSuperposedControlIsMaximal) {
  const Operator u = ideal_transfer_unitary();
  const QubitRegister& reg = u.reg;
  const StateVector psi{reg, (basis_state(reg, "1000").amp + basis_state(reg, "1001").amp) / std::sqrt(2.0)};
  EXPECT_NEAR(concurrence(path_control_state(u * psi)), 1.0, 1e-12);
  // Control in a basis state leaves the path unentangled.
  EXPECT_NEAR(concurrence(path_control_state(u * basis_state(reg, "1001"))), 0.0, 1e-9);
}
