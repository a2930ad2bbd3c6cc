#include <cmath>
#include <limits>
#include <ostream>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "qpf/averaging.hpp"
#include "qpf/errors.hpp"
#include "qpf/particle_filter.hpp"
#include "test_support.hpp"

namespace qpf {

void PrintTo(FiducialStrategy s, std::ostream* os) { *os << ToString(s); }

namespace {

using testing::RandomQuaternion;

constexpr double kPi = std::numbers::pi;

FilterConfig SmallConfig(FiducialStrategy strategy, int n = 200) {
  FilterConfig c;
  c.n_particles = n;
  c.fiducial = strategy;
  c.gyro = GyroParams{1e-4, 1e-7, 1.0};
  c.seed = 99;
  return c;
}

Mat6 DiagonalCov(double att, double bias) {
  Vec6 d;
  d << att * att, att * att, att * att, bias * bias, bias * bias, bias * bias;
  return d.asDiagonal();
}

ParticleSet CloudAbout(UnitQuaternion const& center, double spread, int n,
                       Rng& rng) {
  FilterConfig c = SmallConfig(FiducialStrategy::kMmseAverage, n);
  return Initialize(c, center, Vec3::Zero(), DiagonalCov(spread, 1e-5), rng);
}

std::vector<VectorObservation> NoiselessObs(UnitQuaternion const& q,
                                            double sigma) {
  Rng rng = MakeRng(0);
  std::vector<Vec3> const refs{Vec3::UnitX(), Vec3::UnitZ()};
  std::vector<VectorObservation> obs = SampleObservations(q, refs, 0.0, rng);
  for (VectorObservation& o : obs) {
    o.sigma = sigma;
  }
  return obs;
}

double MaxNormDeviation(ParticleSet const& ps) {
  double worst = 0.0;
  for (Particle const& p : ps.particles) {
    worst = std::max(worst, std::abs(p.q.coeffs().norm() - 1.0));
  }
  return worst;
}

TEST(FilterConfigTest, Validation) {
  FilterConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.n_particles = 9;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = FilterConfig{};
  c.resample_threshold = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c.resample_threshold = 1.0;
  EXPECT_NO_THROW(c.Validate());
  c.jitter_bandwidth = -0.1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = FilterConfig{};
  c.max_tempering_stages = -1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = FilterConfig{};
  c.grp.f = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(FilterConfigTest, StrategyNames) {
  EXPECT_EQ(ParseFiducialStrategy("baseline"), FiducialStrategy::kBaseline);
  EXPECT_EQ(ParseFiducialStrategy("mmse"), FiducialStrategy::kMmseAverage);
  EXPECT_THROW(ParseFiducialStrategy("MMSE"), ConfigError);
  EXPECT_STREQ(ToString(FiducialStrategy::kBaseline), "baseline");
  EXPECT_STREQ(ToString(FiducialStrategy::kMmseAverage), "mmse");
}

TEST(SilvermanTest, SixDimensionalRule) {
  EXPECT_NEAR(SilvermanBandwidth(1000), std::pow(4.0 / 8000.0, 0.1), 1e-15);
  FilterConfig c;
  EXPECT_EQ(c.Bandwidth(), SilvermanBandwidth(1000));
  c.jitter_bandwidth = 0.3;
  EXPECT_EQ(c.Bandwidth(), 0.3);
}

TEST(InitializeTest, ZeroCovarianceCopiesMean) {
  Rng rng = MakeRng(61);
  UnitQuaternion const q0 = RandomQuaternion(rng);
  Vec3 const beta0(1e-5, 0.0, -1e-5);
  ParticleSet const ps = Initialize(SmallConfig(FiducialStrategy::kBaseline),
                                    q0, beta0, Mat6::Zero(), rng);
  ASSERT_EQ(ps.size(), 200u);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(ps.particles[i].q, q0);
    EXPECT_EQ(ps.particles[i].beta, beta0);
    EXPECT_EQ(ps.weights[i], 1.0 / 200.0);
  }
}

TEST(InitializeTest, SampleMeanWithinClt) {
  Rng rng = MakeRng(62);
  UnitQuaternion const q0 = RandomQuaternion(rng);
  double const sigma = 0.05;
  int const n = 5000;
  FilterConfig const c = SmallConfig(FiducialStrategy::kBaseline, n);
  ParticleSet const ps =
      Initialize(c, q0, Vec3::Zero(), DiagonalCov(sigma, 1e-4), rng);
  Vec3 mean = Vec3::Zero();
  for (LocalParticle const& l : ToLocalErrors(ps, q0, c.grp)) {
    mean += l.error.p / n;
  }
  for (int i = 0; i < 3; ++i) {
    EXPECT_LE(std::abs(mean[i]), 4.0 * sigma / std::sqrt(n));
  }
  EXPECT_LE(MaxNormDeviation(ps), 1e-12);
}

TEST(InitializeTest, RejectsNonPsdCovariance) {
  Rng rng = MakeRng(63);
  FilterConfig const c = SmallConfig(FiducialStrategy::kBaseline);
  Mat6 bad = Mat6::Identity();
  bad(0, 0) = -1.0;
  EXPECT_THROW(Initialize(c, UnitQuaternion(), Vec3::Zero(), bad, rng),
               DecompositionError);
  Mat6 asym = Mat6::Identity();
  asym(0, 1) = 0.5;
  EXPECT_THROW(Initialize(c, UnitQuaternion(), Vec3::Zero(), asym, rng),
               DecompositionError);
  Mat6 singular = Mat6::Zero();
  singular(0, 0) = 1e-4;
  EXPECT_NO_THROW(Initialize(c, UnitQuaternion(), Vec3::Zero(), singular, rng));
}

TEST(PredictTest, NoiselessStillSetIsUnchanged) {
  Rng rng = MakeRng(64);
  FilterConfig c = SmallConfig(FiducialStrategy::kBaseline);
  c.gyro = GyroParams{0.0, 0.0, 1.0};
  ParticleSet const ps = Initialize(c, RandomQuaternion(rng), Vec3::Zero(),
                                    DiagonalCov(0.1, 0.0), rng);
  ParticleSet const out = Predict(ps, GyroMeasurement{}, c, rng);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(out.particles[i].q, ps.particles[i].q);
    EXPECT_EQ(out.particles[i].beta, ps.particles[i].beta);
  }
  EXPECT_EQ(out.weights, ps.weights);
}

TEST(PredictTest, NoiselessMatchesTransitionChain) {
  Rng rng = MakeRng(65);
  FilterConfig c = SmallConfig(FiducialStrategy::kBaseline, 20);
  c.gyro = GyroParams{0.0, 0.0, 0.5};
  UnitQuaternion const q0 = RandomQuaternion(rng);
  ParticleSet ps = Initialize(c, q0, Vec3::Zero(), Mat6::Zero(), rng);
  GyroMeasurement g;
  g.omega_meas = Vec3(0.02, -0.01, 0.03);
  Vec4 chain = q0.coeffs();
  for (int k = 0; k < 100; ++k) {
    ps = Predict(std::move(ps), g, c, rng);
    chain = OmegaTransition(g.omega_meas, c.gyro.dt) * chain;
  }
  for (Particle const& p : ps.particles) {
    EXPECT_LE((p.q.coeffs() - chain).norm(), 1e-13);
  }
}

TEST(PredictTest, NormsStayUnitOverManySteps) {
  Rng rng = MakeRng(66);
  FilterConfig c = SmallConfig(FiducialStrategy::kBaseline, 10);
  c.gyro = GyroParams{1e-3, 1e-5, 1.0};
  ParticleSet ps = CloudAbout(RandomQuaternion(rng), 0.1, 10, rng);
  GyroMeasurement g;
  g.omega_meas = Vec3(0.1, 0.2, -0.3);
  ResetLargeNormCorrectionCount();
  for (int k = 0; k < 10000; ++k) {
    ps = Predict(std::move(ps), g, c, rng);
  }
  EXPECT_LE(MaxNormDeviation(ps), 1e-12);
  EXPECT_EQ(LargeNormCorrectionCount(), 0u);
}

TEST(ComputeFiducialTest, IdenticalParticlesAnyStrategy) {
  Rng rng = MakeRng(67);
  UnitQuaternion const q = RandomQuaternion(rng);
  ParticleSet ps;
  ps.particles.assign(10, Particle{q, Vec3::Zero()});
  ps.weights.assign(10, 0.1);
  StateEstimate prev;
  prev.q_hat = q;
  GyroMeasurement const g;
  for (FiducialStrategy s :
       {FiducialStrategy::kBaseline, FiducialStrategy::kMmseAverage}) {
    UnitQuaternion const f = ComputeFiducial(ps, prev, g, SmallConfig(s));
    EXPECT_LE(testing::SignlessDistance(f.coeffs(), q.coeffs()), 1e-15);
  }
}

TEST(ComputeFiducialTest, MmseSurvivesAntipodalPair) {
  Rng rng = MakeRng(68);
  UnitQuaternion const q = RandomQuaternion(rng);
  ParticleSet ps;
  ps.particles = {Particle{q, Vec3::Zero()}, Particle{-q, Vec3::Zero()}};
  ps.weights = {0.5, 0.5};
  UnitQuaternion const f =
      ComputeFiducial(ps, StateEstimate{}, GyroMeasurement{},
                      SmallConfig(FiducialStrategy::kMmseAverage));
  EXPECT_LE(testing::SignlessDistance(f.coeffs(), q.coeffs()), 1e-15);
}

TEST(ComputeFiducialTest, BaselinePropagatesPreviousEstimate) {
  Rng rng = MakeRng(69);
  StateEstimate prev;
  prev.q_hat = RandomQuaternion(rng);
  ParticleSet const ps = CloudAbout(RandomQuaternion(rng), 0.1, 50, rng);
  FilterConfig const c = SmallConfig(FiducialStrategy::kBaseline);
  EXPECT_EQ(ComputeFiducial(ps, prev, GyroMeasurement{}, c), prev.q_hat);

  prev.beta_hat = Vec3(0.01, 0.0, 0.0);
  GyroMeasurement g;
  g.omega_meas = Vec3(0.11, 0.2, 0.0);
  EXPECT_EQ(ComputeFiducial(ps, prev, g, c),
            Propagate(prev.q_hat, Vec3(0.1, 0.2, 0.0), 1.0));
}

TEST(ComputeFiducialTest, MmseEqualsWeightedAverage) {
  Rng rng = MakeRng(70);
  ParticleSet ps = CloudAbout(RandomQuaternion(rng), 0.2, 100, rng);
  ps.weights = testing::RandomWeights(100, rng);
  std::vector<UnitQuaternion> q;
  for (Particle const& p : ps.particles) {
    q.push_back(p.q);
  }
  EXPECT_EQ(ComputeFiducial(ps, StateEstimate{}, GyroMeasurement{},
                            SmallConfig(FiducialStrategy::kMmseAverage)),
            MmseAverage(WeightedQuaternions(q, ps.weights)));
}

TEST(LocalErrorsTest, ParticleAtFiducialIsZero) {
  Rng rng = MakeRng(71);
  ParticleSet const ps = CloudAbout(RandomQuaternion(rng), 0.1, 20, rng);
  auto const locals = ToLocalErrors(ps, ps.particles[3].q, GrpParams{});
  EXPECT_LE(locals[3].error.p.norm(), 1e-16);
  EXPECT_EQ(locals[3].beta, ps.particles[3].beta);
}

TEST(LocalErrorsTest, SixtyDegreesAboutX) {
  Rng rng = MakeRng(72);
  UnitQuaternion const f = RandomQuaternion(rng);
  ParticleSet ps;
  ps.particles = {Particle{
      Multiply(UnitQuaternion::FromAxisAngle(Vec3::UnitX(), kPi / 3.0), f),
      Vec3::Zero()}};
  ps.weights = {1.0};
  Vec3 const p = ToLocalErrors(ps, f, GrpParams{})[0].error.p;
  EXPECT_NEAR(p[0], 0.2679491924311227, 1e-12);
  EXPECT_NEAR(p[1], 0.0, 1e-12);
  EXPECT_NEAR(p[2], 0.0, 1e-12);
}

TEST(LocalErrorsTest, RoundTrip) {
  Rng rng = MakeRng(73);
  for (GrpParams const grp : {GrpParams{1.0, 1.0}, GrpParams{1.0, 4.0}}) {
    ParticleSet const ps = CloudAbout(RandomQuaternion(rng), 0.5, 500, rng);
    UnitQuaternion const f = RandomQuaternion(rng);
    auto const locals = ToLocalErrors(ps, f, grp);
    auto const back = FromLocalErrors(locals, f, grp);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ASSERT_LE(testing::SignlessDistance(back[i].q.coeffs(),
                                          ps.particles[i].q.coeffs()),
                1e-12);
      ASSERT_LE(std::abs(back[i].q.coeffs().norm() - 1.0), 1e-12);
      ASSERT_EQ(back[i].beta, ps.particles[i].beta);
    }
  }
}

TEST(LocalErrorsTest, SingularGrpThrows) {
  ParticleSet ps;
  ps.particles = {Particle{UnitQuaternion(Vec4(1.0, 0.0, 0.0, 0.0))}};
  ps.weights = {1.0};
  EXPECT_THROW(ToLocalErrors(ps, UnitQuaternion(), GrpParams{0.0, 1.0}),
               SingularError);
}

TEST(UpdateWeightsTest, IdenticalParticlesStayUniform) {
  Rng rng = MakeRng(74);
  UnitQuaternion const q = RandomQuaternion(rng);
  ParticleSet ps;
  ps.particles.assign(10, Particle{q, Vec3::Zero()});
  ps.weights.assign(10, 0.1);
  auto const obs = SampleObservations(
      RandomQuaternion(rng), std::vector<Vec3>{Vec3::UnitX(), Vec3::UnitY()},
      0.01, rng);
  ParticleSet const out = UpdateWeights(ps, obs);
  for (double w : out.weights) {
    EXPECT_NEAR(w, 0.1, 1e-16);
  }
}

TEST(UpdateWeightsTest, MatchingParticleDominates) {
  Rng rng = MakeRng(75);
  UnitQuaternion const truth = RandomQuaternion(rng);
  UnitQuaternion const off = Multiply(
      UnitQuaternion::FromAxisAngle(Vec3::UnitY(), kPi / 2.0), truth);
  for (double sigma : {0.01, 1e-3, 1e-6}) {
    ParticleSet ps;
    ps.particles = {Particle{truth}, Particle{off}};
    ps.weights = {0.5, 0.5};
    ParticleSet const out = UpdateWeights(ps, NoiselessObs(truth, sigma));
    EXPECT_GT(out.weights[0], 0.999);
    EXPECT_NEAR(out.weights[0] + out.weights[1], 1.0, 1e-12);
  }
}

TEST(UpdateWeightsTest, NormalizedAfterEveryUpdate) {
  Rng rng = MakeRng(76);
  UnitQuaternion const truth = RandomQuaternion(rng);
  ParticleSet ps = CloudAbout(truth, 0.05, 300, rng);
  std::vector<Vec3> const refs{Vec3::UnitX(), Vec3::UnitZ()};
  for (int k = 0; k < 20; ++k) {
    ps = UpdateWeights(std::move(ps),
                       SampleObservations(truth, refs, 0.05, rng));
    double sum = 0.0;
    for (double w : ps.weights) {
      sum += w;
      ASSERT_GE(w, 0.0);
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(UpdateWeightsTest, ExtremeLikelihoodDoesNotUnderflow) {
  Rng rng = MakeRng(77);
  UnitQuaternion const truth = RandomQuaternion(rng);
  ParticleSet ps = CloudAbout(truth, 0.5, 100, rng);
  ParticleSet const out = UpdateWeights(ps, NoiselessObs(truth, 1e-9));
  EXPECT_NEAR(EffectiveSampleSize(out.weights), 1.0, 1e-9);
}

TEST(UpdateWeightsTest, CollapseAndEmptyObservations) {
  ParticleSet ps;
  ps.particles.assign(3, Particle{});
  ps.weights = {0.0, 0.0, 1.0};
  VectorObservation o;
  o.measured = Vec3(NAN, 0.0, 0.0);
  std::vector<VectorObservation> const bad{o};
  EXPECT_THROW(UpdateWeights(ps, bad), WeightCollapseError);
  EXPECT_THROW(UpdateWeights(ps, {}), InvalidArgument);
}

TEST(TemperingTest, ExponentKeepsTargetEss) {
  Rng rng = MakeRng(78);
  UnitQuaternion const truth = RandomQuaternion(rng);
  ParticleSet const ps = CloudAbout(truth, 0.3, 1000, rng);
  auto const ll = LogLikelihoods(ps, NoiselessObs(truth, 1e-3));
  double const e = TemperingExponent(ps.weights, ll, 1.0, 500.0);
  EXPECT_LT(e, 1.0);
  EXPECT_GT(e, 0.0);
  EXPECT_NEAR(EffectiveSampleSize(ReweightedLog(ps.weights, ll, e)), 500.0, 1.0);

  std::vector<double> const flat(ps.size(), -3.0);
  EXPECT_EQ(TemperingExponent(ps.weights, flat, 0.7, 500.0), 0.7);
}

TEST(TemperingTest, SharpLikelihoodOnDiffuseCloud) {
  Rng rng = MakeRng(178);
  std::vector<double> const w(1000, 1e-3);
  std::vector<double> ll(w.size());
  for (double& l : ll) {
    double const x = testing::Uniform(rng, -1.0, 1.0);
    l = -0.5 * x * x / 1e-8;
  }
  double const e = TemperingExponent(w, ll, 1.0, 500.0);
  EXPECT_LT(e, 1e-6);
  EXPECT_NEAR(EffectiveSampleSize(ReweightedLog(w, ll, e)), 500.0, 2.0);

  std::vector<double> spike(w.size(), -std::numeric_limits<double>::max());
  spike[3] = 0.0;
  EXPECT_EQ(TemperingExponent(w, spike, 0.5, 500.0),
            kMinTemperingFraction * 0.5);
}

TEST(EssTest, Cases) {
  EXPECT_EQ(EffectiveSampleSize(std::vector<double>(8, 0.125)), 8.0);
  EXPECT_EQ(EffectiveSampleSize(std::vector<double>{0.0, 1.0, 0.0}), 1.0);
  EXPECT_EQ(EffectiveSampleSize(std::vector<double>{0.5, 0.5}), 2.0);
}

TEST(ResampleTest, UniformWeightsKeepEveryParticle) {
  Rng rng = MakeRng(79);
  std::vector<double> const w(50, 0.02);
  for (int t = 0; t < 100; ++t) {
    auto const idx = SystematicResampleIndices(w, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ASSERT_EQ(idx[i], i);
    }
  }
}

TEST(ResampleTest, OneHotGivesCopies) {
  Rng rng = MakeRng(80);
  ParticleSet ps = CloudAbout(RandomQuaternion(rng), 0.1, 20, rng);
  ps.weights.assign(20, 0.0);
  ps.weights[7] = 1.0;
  ParticleSet const out = Resample(ps, rng);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out.particles[i].q, ps.particles[7].q);
    EXPECT_EQ(out.weights[i], 1.0 / 20.0);
  }
}

TEST(ResampleTest, HalfHalfCopyCountsUnbiased) {
  Rng rng = MakeRng(81);
  std::size_t const n = 10;
  std::vector<double> w(n, 0.0);
  w[0] = 0.5;
  w[1] = 0.5;
  std::vector<double> counts(n, 0.0);
  int const trials = 10000;
  for (int t = 0; t < trials; ++t) {
    for (std::size_t i : SystematicResampleIndices(w, rng)) {
      counts[i] += 1.0 / trials;
    }
  }
  EXPECT_NEAR(counts[0], n / 2.0, 0.02 * n / 2.0);
  EXPECT_NEAR(counts[1], n / 2.0, 0.02 * n / 2.0);
  for (std::size_t i = 2; i < n; ++i) {
    EXPECT_EQ(counts[i], 0.0);
  }
}

TEST(ResampleTest, CopyCountsAreFloorOrCeil) {
  Rng rng = MakeRng(82);
  for (int t = 0; t < 500; ++t) {
    std::size_t const n = 10 + rng() % 100;
    std::vector<double> const w = testing::RandomWeights(n, rng);
    std::vector<int> counts(n, 0);
    for (std::size_t i : SystematicResampleIndices(w, rng)) {
      ++counts[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double const expected = n * w[i];
      ASSERT_GE(counts[i], std::floor(expected - 1e-9));
      ASSERT_LE(counts[i], std::ceil(expected + 1e-9));
    }
  }
}

TEST(RegularizeTest, ZeroCovarianceOrBandwidthIsIdentity) {
  Rng rng = MakeRng(83);
  std::vector<LocalParticle> locals(10);
  for (LocalParticle& l : locals) {
    l = LocalParticle::FromVector(StandardNormal6(rng));
  }
  auto const a = Regularize(locals, Mat6::Zero(), 0.5, rng);
  auto const b = Regularize(locals, Mat6::Identity(), 0.0, rng);
  for (std::size_t i = 0; i < locals.size(); ++i) {
    EXPECT_EQ(a[i].AsVector(), locals[i].AsVector());
    EXPECT_EQ(b[i].AsVector(), locals[i].AsVector());
  }
}

TEST(RegularizeTest, PerturbationCovarianceCalibrated) {
  Rng rng = MakeRng(84);
  int const n = 100000;
  auto const out =
      Regularize(std::vector<LocalParticle>(n), Mat6::Identity(), 1.0, rng);
  Vec6 mean = Vec6::Zero();
  for (LocalParticle const& l : out) {
    mean += l.AsVector() / n;
  }
  Mat6 cov = Mat6::Zero();
  for (LocalParticle const& l : out) {
    Vec6 const d = l.AsVector() - mean;
    cov += d * d.transpose() / n;
  }
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(cov(i, j), i == j ? 1.0 : 0.0, 0.05);
    }
  }
}

TEST(RegularizeTest, RepairsSlightlyIndefiniteCovariance) {
  Rng rng = MakeRng(85);
  Mat6 cov = Mat6::Identity() * 1e-6;
  cov(5, 5) = -1e-20;
  cov(0, 1) = 1e-22;
  Mat6 const repaired = RepairCovariance(cov);
  EXPECT_EQ(repaired, repaired.transpose());
  Eigen::SelfAdjointEigenSolver<Mat6> eig(repaired);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-30);
  EXPECT_NO_THROW(Regularize(std::vector<LocalParticle>(4), cov, 0.5, rng));
  cov(2, 2) = NAN;
  EXPECT_THROW(Regularize(std::vector<LocalParticle>(4), cov, 0.5, rng),
               DecompositionError);
}

TEST(EstimateStateTest, ZeroLocalsGiveFiducial) {
  Rng rng = MakeRng(86);
  UnitQuaternion const f = RandomQuaternion(rng);
  std::vector<LocalParticle> const locals(10);
  std::vector<double> const w(10, 0.1);
  StateEstimate const e = EstimateState(locals, w, f, GrpParams{});
  EXPECT_EQ(e.q_hat, f);
  EXPECT_EQ(e.cov, Mat6::Zero());
  EXPECT_DOUBLE_EQ(e.ess, 10.0);
}

TEST(EstimateStateTest, SingleParticle) {
  Rng rng = MakeRng(87);
  UnitQuaternion const f = RandomQuaternion(rng);
  UnitQuaternion const q = testing::Perturb(f, 0.3, rng);
  ParticleSet ps;
  ps.particles = {Particle{q, Vec3(1e-5, 0.0, 0.0)}};
  ps.weights = {1.0};
  auto const locals = ToLocalErrors(ps, f, GrpParams{});
  StateEstimate const e = EstimateState(locals, ps.weights, f, GrpParams{});
  EXPECT_LE(testing::SignlessDistance(e.q_hat.coeffs(), q.coeffs()), 1e-15);
  EXPECT_EQ(e.beta_hat, Vec3(1e-5, 0.0, 0.0));
  EXPECT_EQ(e.cov, Mat6::Zero());
}

TEST(EstimateStateTest, TwoPointMoments) {
  Rng rng = MakeRng(88);
  UnitQuaternion const f = RandomQuaternion(rng);
  Vec3 const p(0.03, -0.02, 0.01);
  std::vector<LocalParticle> const locals{LocalParticle{Mrp{p}},
                                          LocalParticle{Mrp{-p}}};
  std::vector<double> const w{0.5, 0.5};
  StateEstimate const e = EstimateState(locals, w, f, GrpParams{});
  EXPECT_EQ(e.q_hat, f);
  Mat3 const expected = p * p.transpose();
  EXPECT_LE((e.cov.topLeftCorner<3, 3>() - expected).cwiseAbs().maxCoeff(),
            1e-18);
  EXPECT_EQ((e.cov.bottomRightCorner<3, 3>()), Mat3::Zero());
  EXPECT_EQ(e.ess, 2.0);
}

TEST(EstimateStateTest, MeanUsesExactInverseMap) {
  UnitQuaternion const f;
  Vec3 const p(0.2, 0.0, 0.0);
  std::vector<LocalParticle> const locals{LocalParticle{Mrp{p}}};
  StateEstimate const e =
      EstimateState(locals, std::vector<double>{1.0}, f, GrpParams{});
  EXPECT_NEAR(RotationAngle(e.q_hat), 4.0 * std::atan(0.2), 1e-15);
}

TEST(FilterPropertiesTest, SignFlipsBeforeFiducialChangeNothing) {
  Rng rng = MakeRng(89);
  FilterConfig const c = SmallConfig(FiducialStrategy::kMmseAverage);
  UnitQuaternion const truth = RandomQuaternion(rng);
  for (int t = 0; t < 50; ++t) {
    ParticleSet ps = CloudAbout(truth, 0.2, 200, rng);
    ps.weights = testing::RandomWeights(200, rng);
    ParticleSet flipped = ps;
    for (Particle& p : flipped.particles) {
      if (rng() & 1u) {
        p.q = -p.q;
      }
    }
    UnitQuaternion const fa =
        ComputeFiducial(ps, StateEstimate{}, GyroMeasurement{}, c);
    UnitQuaternion const fb =
        ComputeFiducial(flipped, StateEstimate{}, GyroMeasurement{}, c);
    ASSERT_EQ(fa, fb);
    auto const la = ToLocalErrors(ps, fa, c.grp);
    auto const lb = ToLocalErrors(flipped, fb, c.grp);
    for (std::size_t i = 0; i < la.size(); ++i) {
      ASSERT_EQ(la[i].AsVector(), lb[i].AsVector());
    }
    StateEstimate const ea = EstimateState(la, ps.weights, fa, c.grp);
    StateEstimate const eb = EstimateState(lb, flipped.weights, fb, c.grp);
    ASSERT_EQ(ea.q_hat, eb.q_hat);
    ASSERT_EQ(ea.cov, eb.cov);
  }
}

TEST(FilterPropertiesTest, MmseFiducialCentersTheCloud) {
  Rng rng = MakeRng(90);
  GrpParams const grp;
  double const one_degree = kPi / 180.0;
  for (int t = 0; t < 50; ++t) {
    // First-order property: clouds of about a degree, where the MRP mean
    // and the eigenvector average agree well below the tolerance.
    ParticleSet ps = CloudAbout(RandomQuaternion(rng), 0.005, 500, rng);
    ps.weights = testing::RandomWeights(500, rng);
    UnitQuaternion const f = ComputeFiducial(
        ps, StateEstimate{}, GyroMeasurement{},
        SmallConfig(FiducialStrategy::kMmseAverage, 500));
    auto mean_norm = [&](UnitQuaternion const& fid) {
      Vec3 mean = Vec3::Zero();
      auto const locals = ToLocalErrors(ps, fid, grp);
      for (std::size_t i = 0; i < locals.size(); ++i) {
        mean += ps.weights[i] * locals[i].error.p;
      }
      return mean.norm();
    };
    double const at_mmse = mean_norm(f);
    for (int k = 0; k < 20; ++k) {
      UnitQuaternion const alt =
          testing::Perturb(f, testing::Uniform(rng, 0.0, one_degree), rng);
      ASSERT_LE(at_mmse, mean_norm(alt) + 1e-6);
    }
  }
}

class FilterStepTest : public ::testing::TestWithParam<FiducialStrategy> {};

TEST_P(FilterStepTest, NoiselessPerfectInitStaysOnTruth) {
  FilterConfig c = SmallConfig(GetParam(), 50);
  c.gyro = GyroParams{0.0, 0.0, 1.0};
  Rng rng = MakeRng(91);
  UnitQuaternion q = RandomQuaternion(rng);
  QuaternionParticleFilter filter(c, q, Vec3::Zero(), Mat6::Zero());
  RateProfile const profile = RateProfile::Constant(Vec3(0.01, -0.02, 0.005));
  std::vector<Vec3> const refs{Vec3::UnitX(), Vec3::UnitZ()};
  for (int k = 0; k < 100; ++k) {
    GyroMeasurement g;
    g.omega_meas = profile.At(k);
    q = Propagate(q, g.omega_meas, 1.0);
    auto obs = SampleObservations(q, refs, 0.0, rng);
    for (auto& o : obs) {
      o.sigma = 1e-3;
    }
    StepReport const r = filter.Step(g, obs);
    ASSERT_TRUE(r.issues.empty());
    ASSERT_LT(AngleBetween(r.estimate.q_hat, q), 1e-9);
  }
}

TEST_P(FilterStepTest, PropagationOnlyKeepsWeights) {
  FilterConfig c = SmallConfig(GetParam(), 100);
  Rng rng = MakeRng(92);
  UnitQuaternion const q = RandomQuaternion(rng);
  QuaternionParticleFilter filter(c, q, Vec3::Zero(), DiagonalCov(0.05, 1e-5));
  filter.Step(GyroMeasurement{}, NoiselessObs(q, 0.2));
  std::vector<double> const before = filter.particles().weights;
  StepReport const r = filter.Step(GyroMeasurement{}, {});
  EXPECT_EQ(filter.particles().weights, before);
  EXPECT_FALSE(r.resampled);
}

TEST_P(FilterStepTest, DeterministicAndWellFormed) {
  FilterConfig c = SmallConfig(GetParam(), 300);
  c.max_tempering_stages = 10;
  Rng truth_rng = MakeRng(93);
  UnitQuaternion q = RandomQuaternion(truth_rng);
  Mat6 const cov0 = DiagonalCov(0.2, 1e-5);
  QuaternionParticleFilter a(c, q, Vec3::Zero(), cov0);
  QuaternionParticleFilter b(c, q, Vec3::Zero(), cov0);
  std::vector<Vec3> const refs{Vec3::UnitX(), Vec3::UnitZ()};
  GyroMeasurement g;
  g.omega_meas = Vec3(0.001, 0.002, -0.001);
  ResetLargeNormCorrectionCount();
  for (int k = 0; k < 200; ++k) {
    q = Propagate(q, g.omega_meas, 1.0);
    auto const obs = SampleObservations(q, refs, 1e-2, truth_rng);
    StepReport const ra = a.Step(g, obs);
    StepReport const rb = b.Step(g, obs);
    ASSERT_EQ(ra.estimate.q_hat, rb.estimate.q_hat);
    ASSERT_EQ(ra.estimate.cov, rb.estimate.cov);
    ASSERT_GE(ra.estimate.ess, 1.0);
    ASSERT_LE(ra.estimate.ess, 300.0);
    Mat6 const& cov = ra.estimate.cov;
    ASSERT_EQ(cov, cov.transpose());
    ASSERT_GE(Eigen::SelfAdjointEigenSolver<Mat6>(cov).eigenvalues().minCoeff(),
              -1e-12 * std::max(1.0, cov.norm()));
    ASSERT_LE(std::abs(ra.estimate.q_hat.coeffs().norm() - 1.0), 1e-9);
    ASSERT_LE(MaxNormDeviation(a.particles()), 1e-9);
  }
  EXPECT_EQ(LargeNormCorrectionCount(), 0u);
  EXPECT_LT(AngleBetween(a.estimate().q_hat, q), 0.05);
}

INSTANTIATE_TEST_SUITE_P(Strategies, FilterStepTest,
                         ::testing::Values(FiducialStrategy::kBaseline,
                                           FiducialStrategy::kMmseAverage),
                         [](auto const& info) {
                           return std::string(ToString(info.param));
                         });

TEST(FilterStepTest, WeightCollapseIsReportedAndRecovered) {
  FilterConfig const c = SmallConfig(FiducialStrategy::kMmseAverage, 20);
  QuaternionParticleFilter filter(c, UnitQuaternion(), Vec3::Zero(),
                                  DiagonalCov(0.01, 1e-6));
  VectorObservation o;
  o.measured = Vec3(NAN, 0.0, 0.0);
  std::vector<VectorObservation> const bad{o};
  StepReport const r = filter.Step(GyroMeasurement{}, bad);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].first, StepIssue::kWeightCollapse);
  for (double w : filter.particles().weights) {
    EXPECT_EQ(w, 1.0 / 20.0);
  }
}

}  // namespace
}  // namespace qpf
