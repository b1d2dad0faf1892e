#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace recon;
using fixtures::centered_grid;

namespace {

Histogram random_histogram(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> lo(-2000.0, 2000.0);
    std::uniform_real_distribution<double> span(1e-3, 5000.0);
    std::uniform_int_distribution<int> occupied(2, 40);
    std::uniform_int_distribution<int> bin(0, kHistogramBins - 1);
    std::uniform_int_distribution<std::uint64_t> count(1, 50);
    const double a = lo(rng);
    std::vector<double> ends{a, a + span(rng)};
    Histogram h = histogram_of(ends);  // edges only; counts are replaced
    h.counts.fill(0);
    const int k = occupied(rng);
    for (int i = 0; i < k; ++i) h.counts[bin(rng)] += count(rng);
    return h;
}

int occupied_bins(const Histogram& h) {
    int n = 0;
    for (auto c : h.counts) n += c > 0;
    return n;
}

}  // namespace

TEST(Histogram, ConstantInputIsDegenerate) {
    std::vector<double> v(50, 7.0);
    const auto h = histogram_of(v);
    EXPECT_TRUE(h.degenerate);
    EXPECT_EQ(h.total(), 50u);
    EXPECT_EQ(occupied_bins(h), 1);
    EXPECT_THROW(otsu_threshold(h), Error);
}

TEST(Histogram, TwoValuesLandInEndBins) {
    std::vector<double> v(100, 0.0);
    v.insert(v.end(), 100, 255.0);
    const auto h = histogram_of(v);
    EXPECT_FALSE(h.degenerate);
    EXPECT_EQ(h.counts.front(), 100u);
    EXPECT_EQ(h.counts.back(), 100u);
    EXPECT_EQ(h.total(), 200u);
}

TEST(Histogram, BinsAreLeftOpen) {
    std::vector<double> v{0.0, 256.0};
    const auto h = histogram_of(v);
    EXPECT_EQ(h.bin_of(0.0), 0);
    EXPECT_EQ(h.bin_of(1.0), 0);  // on edge e_1: belongs to the lower bin
    EXPECT_EQ(h.bin_of(1.5), 1);
    EXPECT_EQ(h.bin_of(256.0), 255);
}

TEST(Histogram, CountsSumToVoxels) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 300.0);
    ScalarVolume vol(GridGeometry({17, 9, 5}, Vec3::Ones()), 0);
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = static_cast<std::int16_t>(n(rng));
    EXPECT_EQ(histogram(vol).total(), vol.size());
}

TEST(Otsu, SplitsTwoDeltas) {
    std::vector<double> v(500, 50.0);
    v.insert(v.end(), 300, 200.0);
    const double t = otsu_threshold(histogram_of(v));
    EXPECT_GE(t, 50.0);
    EXPECT_LT(t, 200.0);
    // lowest maximizing edge: every cut between the deltas is equivalent
    EXPECT_DOUBLE_EQ(t, histogram_of(v).bin_edges[1]);
}

TEST(Otsu, MatchesExactBruteForceOnRandomHistograms) {
    std::mt19937_64 rng(20240611);
    for (int trial = 0; trial < 300; ++trial) {
        const auto h = random_histogram(rng);
        if (occupied_bins(h) < 2) continue;
        const int cut = oracles::otsu_cut_bruteforce(h);
        ASSERT_GT(cut, 0);
        EXPECT_EQ(otsu_threshold(h), h.bin_edges[cut]) << "trial " << trial;
    }
}

TEST(Otsu, ExactTiesGoToLowestCut) {
    // symmetric three-spike histogram: cuts around either gap tie exactly
    Histogram h = histogram_of(std::vector<double>{0.0, 256.0});
    h.counts.fill(0);
    h.counts[10] = 5;
    h.counts[128] = 2;
    h.counts[246] = 5;
    const int cut = oracles::otsu_cut_bruteforce(h);
    EXPECT_EQ(otsu_threshold(h), h.bin_edges[cut]);
    EXPECT_LE(cut, 128);
}

TEST(Otsu, PartitionInvariantUnderPositiveAffineMaps) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> a(100.0, 20.0), b(600.0, 60.0);
    std::vector<double> v;
    for (int i = 0; i < 3000; ++i) v.push_back(i % 3 ? a(rng) : b(rng));
    const double t = otsu_threshold(histogram_of(v));
    for (auto [scale, shift] : {std::pair{2.0, 0.0}, std::pair{0.5, -300.0}, std::pair{7.25, 1234.0}}) {
        std::vector<double> w;
        for (double x : v) w.push_back(scale * x + shift);
        const double tw = otsu_threshold(histogram_of(w));
        for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(v[i] > t, w[i] > tw);
    }
}

TEST(Otsu, SegmentsNoiseFreePhantomExactly) {
    PhantomSpec s;
    s.radius_mm = 3.0;
    s.geometry = centered_grid(41, 0.2);
    const auto vol = make_phantom(s);
    const auto r = segment(vol, {});
    EXPECT_EQ(r.mask, phantom_truth_mask(s));
}

TEST(Gmm, RecoversWellSeparatedComponents) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> a(100.0, 5.0), b(1000.0, 5.0);
    std::vector<double> v;
    for (int i = 0; i < 100000; ++i) {
        v.push_back(a(rng));
        v.push_back(b(rng));
    }
    const auto m = fit_gmm(v, {});
    ASSERT_FALSE(m.degenerate);
    const double lo = std::min(m.means[0], m.means[1]);
    const double hi = std::max(m.means[0], m.means[1]);
    EXPECT_NEAR(lo, 100.0, 1.0);
    EXPECT_NEAR(hi, 1000.0, 1.0);
    EXPECT_NEAR(m.weights[0] + m.weights[1], 1.0, 1e-12);
    EXPECT_NEAR(gmm_threshold(m), 550.0, 1.0);
}

TEST(Gmm, LogLikelihoodIsNondecreasing) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> a(0.0, 30.0), b(150.0, 50.0);
    std::vector<double> v;
    for (int i = 0; i < 5000; ++i) v.push_back(i % 4 ? a(rng) : b(rng));
    GmmConfig cfg;
    cfg.tol = 0.0;
    cfg.max_iters = 80;
    const auto m = fit_gmm(v, cfg);
    ASSERT_GE(m.log_likelihood_trace.size(), 2u);
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i) {
        EXPECT_GE(m.log_likelihood_trace[i], m.log_likelihood_trace[i - 1] - 1e-7) << "iteration " << i;
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    EXPECT_NEAR(wsum, 1.0, 1e-12);
}

TEST(Gmm, IdenticalSamplesAreDegenerate) {
    std::vector<double> v(100, 42.0);
    const auto m = fit_gmm(v, {});
    EXPECT_TRUE(m.degenerate);
    ScalarVolume vol(GridGeometry({5, 5, 5}, Vec3::Ones()), 42);
    SegmentationConfig cfg;
    cfg.method = SegmentationMethod::gmm;
    EXPECT_THROW(segment(vol, cfg), Error);
}

TEST(Gmm, SmallClassFallsBackToExtremeSeeds) {
    std::vector<double> v(990, 0.0);
    v.insert(v.end(), 10, 1000.0);
    const auto m = fit_gmm(v, {});
    EXPECT_TRUE(m.extreme_init);
    const double lo = std::min(m.means[0], m.means[1]);
    const double hi = std::max(m.means[0], m.means[1]);
    EXPECT_NEAR(lo, 0.0, 1e-6);
    EXPECT_NEAR(hi, 1000.0, 1e-6);
    EXPECT_NEAR(std::min(m.weights[0], m.weights[1]), 0.01, 1e-6);
}

TEST(Gmm, RejectsTooFewSamples) {
    std::vector<double> v{1, 2, 3};
    EXPECT_THROW(fit_gmm(v, {}), Error);
}

TEST(Gmm, SubsamplingIsSeededAndBounded) {
    ScalarVolume vol(GridGeometry({20, 20, 20}, Vec3::Ones()), 0);
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = static_cast<std::int16_t>(i % 1000);
    GmmConfig cfg;
    cfg.max_samples = 1000;
    cfg.seed = 9;
    const auto a = gmm_samples(vol, cfg);
    EXPECT_EQ(a.size(), 1000u);
    EXPECT_EQ(a, gmm_samples(vol, cfg));
    cfg.seed = 10;
    EXPECT_NE(a, gmm_samples(vol, cfg));
}

TEST(GmmThreshold, SymmetricComponentsMeetHalfway) {
    GmmModel m;
    m.n_components = 2;
    m.weights = {0.5, 0.5};
    m.means = {1000.0, 100.0};
    m.variances = {25.0, 25.0};
    EXPECT_NEAR(gmm_threshold(m), 550.0, 1e-9);
}

TEST(GmmThreshold, HeavierComponentPushesBoundaryAway) {
    // equal variances: boundary = mid + var ln(w0/w1) / (mu1 - mu0) = 550 + 25 ln 9 / 900
    GmmModel m;
    m.n_components = 2;
    m.weights = {0.9, 0.1};
    m.means = {100.0, 1000.0};
    m.variances = {25.0, 25.0};
    EXPECT_NEAR(gmm_threshold(m), 550.0610340160371, 1e-9);
}

TEST(GmmThreshold, EqualMeansAreRejected) {
    GmmModel m;
    m.n_components = 2;
    m.weights = {0.5, 0.5};
    m.means = {10.0, 10.0};
    m.variances = {1.0, 4.0};
    EXPECT_THROW(gmm_threshold(m), Error);
}

TEST(GmmThreshold, UnequalWeightsAndVariancesMatchBisection) {
    GmmModel m;
    m.n_components = 2;
    m.weights = {0.9, 0.1};
    m.means = {0.0, 10.0};
    m.variances = {4.0, 9.0};
    auto f = [&](double x) {
        return std::log(m.weights[0]) + detail::log_normal_pdf(x, m.means[0], m.variances[0]) -
               std::log(m.weights[1]) - detail::log_normal_pdf(x, m.means[1], m.variances[1]);
    };
    double lo = 0.0, hi = 10.0;  // f(lo) > 0 > f(hi)
    ASSERT_GT(f(lo), 0.0);
    ASSERT_LT(f(hi), 0.0);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    EXPECT_NEAR(gmm_threshold(m), 0.5 * (lo + hi), 1e-9);
    EXPECT_GT(gmm_threshold(m), 5.0);  // heavier low component pushes the boundary up
}

TEST(ThresholdSegment, BoundsAreLowerOpenUpperClosed) {
    ScalarVolume vol(GridGeometry({4, 1, 1}, Vec3::Ones()), std::vector<std::int16_t>{1, 2, 3, 4});
    const auto m = threshold_segment(vol, 1.0, 3.0);
    EXPECT_EQ(std::vector<std::uint8_t>(m.values().begin(), m.values().end()), (std::vector<std::uint8_t>{0, 1, 1, 0}));
    EXPECT_THROW(threshold_segment(vol, 3.0, 1.0), Error);
    EXPECT_EQ(foreground_count(threshold_segment(vol, 0.0)), 4u);
}

TEST(RegionGrow, ConstantVolumeFillsEverything) {
    ScalarVolume vol(GridGeometry({6, 5, 4}, Vec3::Ones()), 3);
    RegionGrowConfig cfg;
    cfg.seeds = {{0, 0, 0}};
    EXPECT_EQ(foreground_count(region_grow(vol, cfg)), vol.size());
}

TEST(RegionGrow, NoiseFreeSphereFromCenterSeedIsTruth) {
    PhantomSpec s;
    s.radius_mm = 3.0;
    s.geometry = centered_grid(41, 0.2);
    const auto vol = make_phantom(s);
    SegmentationConfig cfg;
    cfg.method = SegmentationMethod::region_growing;
    cfg.rg.seeds = {{20, 20, 20}};
    cfg.rg.tolerance = 100.0;
    EXPECT_EQ(segment(vol, cfg).mask, phantom_truth_mask(s));
}

TEST(RegionGrow, ConnectivityDecidesDiagonalBridges) {
    // two blobs touching only along an edge diagonal
    ScalarVolume vol(GridGeometry({6, 6, 3}, Vec3::Ones()), 0);
    for (std::int64_t k = 0; k < 3; ++k) {
        vol.at({1, 1, k}) = 100;
        vol.at({2, 2, k}) = 100;
        vol.at({3, 2, k}) = 100;
    }
    RegionGrowConfig cfg;
    cfg.seeds = {{1, 1, 1}};
    cfg.tolerance = 10.0;
    EXPECT_EQ(foreground_count(region_grow(vol, cfg)), 3u);
    cfg.connectivity = Connectivity::twenty_six;
    EXPECT_EQ(foreground_count(region_grow(vol, cfg)), 9u);
}

TEST(RegionGrow, MatchesConnectedComponentsOracle) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> val(0, 9), dim(4, 16), nseeds(1, 4);
    for (int trial = 0; trial < 60; ++trial) {
        const GridGeometry g({dim(rng), dim(rng), dim(rng)}, Vec3::Ones());
        ScalarVolume vol(g, 0);
        for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = static_cast<std::int16_t>(val(rng));
        RegionGrowConfig cfg;
        cfg.tolerance = 2.5;
        cfg.connectivity = trial % 2 ? Connectivity::six : Connectivity::twenty_six;
        std::uniform_int_distribution<std::size_t> pick(0, vol.size() - 1);
        const int ns = nseeds(rng);
        for (int s = 0; s < ns; ++s) cfg.seeds.push_back(g.decode(pick(rng)));
        double mu = 0.0;
        for (const auto& s : cfg.seeds) mu += vol.at(s);
        mu /= static_cast<double>(cfg.seeds.size());
        std::vector<bool> admitted(vol.size());
        for (std::size_t i = 0; i < vol.size(); ++i) admitted[i] = std::abs(vol[i] - mu) <= cfg.tolerance;
        std::vector<std::string> warnings;
        const auto got = region_grow(vol, cfg, &warnings);
        EXPECT_EQ(got, oracles::components_touching(admitted, g, neighbor_offsets(cfg.connectivity), cfg.seeds))
            << "trial " << trial;
    }
}

TEST(RegionGrow, FailingSeedWarnsAndIsSkipped) {
    ScalarVolume vol(GridGeometry({5, 5, 5}, Vec3::Ones()), 0);
    vol.at({4, 4, 4}) = 1000;
    RegionGrowConfig cfg;
    cfg.seeds = {{0, 0, 0}, {1, 0, 0}, {4, 4, 4}};  // mean 333.3
    cfg.tolerance = 400.0;
    std::vector<std::string> warnings;
    const auto m = region_grow(vol, cfg, &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("(4,4,4)"), std::string::npos);
    EXPECT_EQ(m.at({4, 4, 4}), 0);
    EXPECT_EQ(foreground_count(m), vol.size() - 1);
}

TEST(RegionGrow, RejectsBadConfig) {
    ScalarVolume vol(GridGeometry({3, 3, 3}, Vec3::Ones()), 0);
    RegionGrowConfig cfg;
    EXPECT_THROW(region_grow(vol, cfg), Error);
    cfg.seeds = {{3, 0, 0}};
    EXPECT_THROW(region_grow(vol, cfg), Error);
    cfg.seeds = {{0, 0, 0}};
    cfg.tolerance = -1.0;
    EXPECT_THROW(region_grow(vol, cfg), Error);
}

TEST(Segment, AllMethodsRecoverNoiseFreeShell) {
    PhantomSpec s;
    s.kind = PhantomKind::shell;
    s.radius_mm = 3.0;
    s.wall_mm = 0.6;
    s.geometry = centered_grid(41, 0.2);
    const auto vol = make_phantom(s);
    const auto truth = phantom_truth_mask(s);
    // a wall voxel on the +x axis seeds region growing
    const Index3 seed{20 + 14, 20, 20};
    ASSERT_EQ(truth.at(seed), 1);
    for (auto method : {SegmentationMethod::otsu, SegmentationMethod::gmm, SegmentationMethod::region_growing}) {
        SegmentationConfig cfg;
        cfg.method = method;
        cfg.rg.seeds = {seed};
        cfg.rg.tolerance = 100.0;
        cfg.rg.connectivity = Connectivity::twenty_six;
        const auto r = segment(vol, cfg);
        EXPECT_EQ(*dice(confusion_counts(r.mask, truth)), 1.0) << to_string(method);
    }
}

TEST(Segment, MethodNamesRoundTrip) {
    for (auto m : {SegmentationMethod::otsu, SegmentationMethod::gmm, SegmentationMethod::region_growing}) {
        EXPECT_EQ(parse_segmentation_method(to_string(m)), m);
    }
    EXPECT_THROW(parse_segmentation_method("watershed"), Error);
}
