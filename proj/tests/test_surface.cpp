#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace recon;
using fixtures::centered_grid;

namespace {

BinaryMask sphere_mask(const GridGeometry& g, double radius) {
    BinaryMask m(g, 0);
    const Vec3 c = g.center();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (g.world(g.decode(i)) - c).norm() <= radius ? 1 : 0;
    return m;
}

std::vector<double> radii(const TriangleMesh& m, const Vec3& c) {
    std::vector<double> r;
    for (const auto& v : m.vertices) r.push_back((v - c).norm());
    return r;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double rms_deviation(const std::vector<double>& v) {
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST(MarchingCubes, AllBackgroundGivesEmptyMeshWithWarning) {
    BinaryMask m(GridGeometry({4, 4, 4}, Vec3::Ones()), 0);
    std::vector<std::string> warnings;
    EXPECT_TRUE(marching_cubes(m, &warnings).empty());
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(MarchingCubes, RejectsFlatGrid) {
    BinaryMask m(GridGeometry({4, 4, 1}, Vec3::Ones()), 0);
    EXPECT_THROW(marching_cubes(m), Error);
}

TEST(MarchingCubes, SingleVoxelIsOctahedron) {
    BinaryMask m(GridGeometry({3, 3, 3}, Vec3::Constant(2.0)), 0);
    m.at({1, 1, 1}) = 1;
    const auto mesh = marching_cubes(m);
    const auto s = mesh_stats(mesh);
    EXPECT_EQ(mesh.triangles.size(), 8u);
    EXPECT_EQ(mesh.vertices.size(), 6u);
    EXPECT_EQ(s.euler_characteristic, 2);
    EXPECT_EQ(s.boundary_edge_count, 0u);
    // vertices at edge midpoints: half-diagonal a = 1 mm
    EXPECT_NEAR(s.signed_volume, 4.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.area, 4.0 * std::sqrt(3.0), 1e-12);
}

TEST(MarchingCubes, SphereMatchesAnalyticAreaAndVolume) {
    const double r = 10.0, h = 0.09;
    const auto g = centered_grid(static_cast<std::int64_t>(2 * r / h) + 9, h);
    const auto s = mesh_stats(marching_cubes(sphere_mask(g, r)));
    EXPECT_EQ(s.boundary_edge_count, 0u);
    EXPECT_EQ(s.euler_characteristic, 2);
    EXPECT_NEAR(s.signed_volume / (4.0 / 3.0 * kPi * r * r * r), 1.0, 0.01);
    EXPECT_NEAR(s.area / (4.0 * kPi * r * r), 1.0, 0.02);
}

TEST(MarchingCubes, InteriorMasksAreWatertight) {
    std::mt19937_64 rng(6);
    const GridGeometry g({12, 11, 10}, Vec3(0.5, 0.7, 0.9));
    for (int trial = 0; trial < 30; ++trial) {
        auto m = fixtures::random_mask(g, rng, 0.4);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto c = g.decode(i);
            for (int a = 0; a < 3; ++a) {
                if (c[a] == 0 || c[a] == g.dims[a] - 1) m[i] = 0;
            }
        }
        if (foreground_count(m) == 0) continue;
        const auto s = mesh_stats(marching_cubes(m));
        EXPECT_EQ(s.boundary_edge_count, 0u) << "trial " << trial;
        EXPECT_GT(s.signed_volume, 0.0);
    }
}

TEST(MarchingCubes, LatticeTranslationShiftsVerticesExactly) {
    const GridGeometry g({24, 24, 24}, Vec3(0.5, 0.5, 0.5));
    const auto bumpy = fixtures::bumpy_sphere(g.center(), 2.5, 3);
    const auto a = voxelize_mesh(bumpy, g);
    BinaryMask b(g, 0);
    const Index3 d{2, -1, 3};
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i]) continue;
        const auto c = g.decode(i);
        b.at({c[0] + d[0], c[1] + d[1], c[2] + d[2]}) = 1;
    }
    const auto ma = marching_cubes(a);
    const auto mb = marching_cubes(b);
    ASSERT_EQ(ma.vertices.size(), mb.vertices.size());
    ASSERT_EQ(ma.triangles.size(), mb.triangles.size());
    const Vec3 shift(1.0, -0.5, 1.5);
    std::vector<std::array<double, 3>> va, vb;
    for (const auto& v : ma.vertices) va.push_back({v.x() + shift.x(), v.y() + shift.y(), v.z() + shift.z()});
    for (const auto& v : mb.vertices) vb.push_back({v.x(), v.y(), v.z()});
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    EXPECT_EQ(va, vb);
}

TEST(MarchingCubes, NestedMasksHaveNestedVolumes) {
    const auto g = centered_grid(41, 0.25);
    const auto outer = marching_cubes(sphere_mask(g, 4.0));
    const auto inner = marching_cubes(sphere_mask(g, 3.0));
    EXPECT_LT(mesh_stats(inner).signed_volume, mesh_stats(outer).signed_volume);
}

TEST(MarchingCubes, NormalsPointOutward) {
    const auto g = centered_grid(25, 0.5);
    const auto mesh = marching_cubes(sphere_mask(g, 4.0));
    for (const auto& t : mesh.triangles) {
        const Vec3 c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        ASSERT_GT(mesh.face_normal_area_weighted(t).dot(c - g.center()), 0.0);
    }
}

TEST(MarchingCubes, ScalarVolumeInterpolatesLinearly) {
    // values along x: 0, 100; iso 25 lands a quarter of the way
    ScalarVolume v(GridGeometry({3, 3, 3}, Vec3::Ones()), 0);
    v.at({1, 1, 1}) = 100;
    const auto mesh = marching_cubes(v, 25.0);
    ASSERT_EQ(mesh.vertices.size(), 6u);
    for (const auto& p : mesh.vertices) EXPECT_NEAR((p - Vec3(1, 1, 1)).norm(), 0.75, 1e-12);
}

TEST(Smoothing, ZeroIterationsIsIdentity) {
    const auto m = make_icosphere(Vec3::Zero(), 1.0, 2);
    EXPECT_EQ(laplacian_smooth(m, 0.5, 0).vertices, m.vertices);
}

TEST(Smoothing, TetrahedronContractsAboutFixedCentroid) {
    TriangleMesh t;
    t.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    for (auto& v : t.vertices) v += Vec3(3, -2, 5);
    t.triangles = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    const Vec3 c0 = Vec3(3, -2, 5);
    for (double lambda : {0.1, 0.5, 1.0}) {
        const auto s = laplacian_smooth(t, lambda, 1);
        Vec3 c = Vec3::Zero();
        for (const auto& v : s.vertices) c += v;
        c /= 4.0;
        EXPECT_LT((c - c0).norm(), 1e-12);
        const double r0 = (s.vertices[0] - c0).norm();
        for (const auto& v : s.vertices) EXPECT_NEAR((v - c0).norm(), r0, 1e-12);
        EXPECT_NEAR(r0, std::sqrt(3.0) * std::abs(1.0 - 4.0 / 3.0 * lambda), 1e-12);
    }
}

TEST(Smoothing, NoisySphereGetsSmootherAndShrinks) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 0.05);
    auto m = make_icosphere(Vec3::Zero(), 5.0, 4);
    for (auto& v : m.vertices) v *= 1.0 + n(rng);
    const auto before = radii(m, Vec3::Zero());
    const auto s = laplacian_smooth(m, 0.5, 20);
    const auto after = radii(s, Vec3::Zero());
    EXPECT_LT(rms_deviation(after), rms_deviation(before));
    EXPECT_LT(mean(after), mean(before));
    EXPECT_EQ(s.triangles, m.triangles);
}

TEST(Smoothing, TinyLambdaApproachesIdentity) {
    auto m = make_icosphere(Vec3::Zero(), 5.0, 3);
    const auto s = laplacian_smooth(m, 1e-6, 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) worst = std::max(worst, (s.vertices[i] - m.vertices[i]).norm());
    EXPECT_LT(worst, 1e-5);
}

TEST(Smoothing, RejectsBadParameters) {
    const auto m = make_icosphere(Vec3::Zero(), 1.0, 1);
    EXPECT_THROW(laplacian_smooth(m, 0.0, 1), Error);
    EXPECT_THROW(laplacian_smooth(m, 1.5, 1), Error);
    EXPECT_THROW(laplacian_smooth(m, 0.5, -1), Error);
    EXPECT_THROW(laplacian_smooth(TriangleMesh{}, 0.5, 1), Error);
}

TEST(MeshStats, UnitCube) {
    const auto s = mesh_stats(make_box_mesh(Vec3::Zero(), Vec3::Ones()));
    EXPECT_NEAR(s.area, 6.0, 1e-12);
    EXPECT_NEAR(s.signed_volume, 1.0, 1e-12);
    EXPECT_EQ(s.euler_characteristic, 2);
    EXPECT_EQ(s.boundary_edge_count, 0u);
}

TEST(MeshStats, SingleTriangleHasThreeBoundaryEdges) {
    TriangleMesh t;
    t.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    t.triangles = {{0, 1, 2}};
    const auto s = mesh_stats(t);
    EXPECT_EQ(s.boundary_edge_count, 3u);
    EXPECT_NEAR(s.area, 0.5, 1e-15);
    EXPECT_EQ(s.euler_characteristic, 1);
}

TEST(MeshStats, IcosphereIsSphereLike) {
    for (int sub = 0; sub <= 4; ++sub) {
        const auto m = make_icosphere(Vec3(1, 2, 3), 2.0, sub);
        const auto s = mesh_stats(m);
        EXPECT_EQ(s.euler_characteristic, 2);
        EXPECT_EQ(s.boundary_edge_count, 0u);
        EXPECT_EQ(m.triangles.size(), 20u << (2 * sub));
        for (const auto& v : m.vertices) EXPECT_NEAR((v - Vec3(1, 2, 3)).norm(), 2.0, 1e-12);
    }
}
