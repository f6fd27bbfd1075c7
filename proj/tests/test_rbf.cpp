#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "pcq/error.hpp"
#include "pcq/rbf.hpp"
#include "pcq/rng.hpp"
#include "pcq/threading.hpp"

using namespace pcq;

#define CHECK_PCQ_ERROR(expr, expected)                         \
    do {                                                        \
        try {                                                   \
            (void)(expr);                                       \
            FAIL("expected pcq::Error " #expected);             \
        } catch (const pcq::Error& e) {                         \
            CHECK(e.code() == pcq::ErrorCode::expected);        \
        }                                                       \
    } while (0)

namespace {

NormalizedCloud random_cloud(std::size_t n, std::uint64_t seed, double span = 1024.0) {
    Rng rng(seed);
    NormalizedCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.positions.push_back(
            {rng.uniform(0.0, span), rng.uniform(0.0, span), rng.uniform(0.0, span)});
        c.colors.push_back({static_cast<std::uint8_t>(rng.uniform_index(256)),
                            static_cast<std::uint8_t>(rng.uniform_index(256)),
                            static_cast<std::uint8_t>(rng.uniform_index(256))});
    }
    return c;
}

FeatureField synthetic_field(const NormalizedCloud& cloud, std::uint64_t seed) {
    Rng rng(seed);
    FeatureField f;
    f.cloud = &cloud;
    for (std::size_t i = 0; i < cloud.count(); ++i) {
        f.curvature.push_back(rng.uniform());
        f.luma.push_back(rng.uniform());
        f.chroma.push_back(rng.uniform());
    }
    return f;
}

NeighborPatch random_patch(std::uint64_t seed, double coord_span = 10.0,
                           double feat_span = 1.0) {
    Rng rng(seed);
    NeighborPatch p;
    p.ref = {coord_span / 2, coord_span / 2, coord_span / 2};
    for (std::size_t i = 0; i < kPatchSize; ++i) {
        p.positions.push_back({rng.uniform(0.0, coord_span), rng.uniform(0.0, coord_span),
                               rng.uniform(0.0, coord_span)});
        for (auto& channel : p.features) channel.push_back(rng.uniform(0.0, feat_span));
    }
    return p;
}

double scaled_constraint_bound(const RbfCoefficients& w, const NeighborPatch& p) {
    double max_w = 0.0, max_c = 0.0;
    for (double o : w.omega) max_w = std::max(max_w, std::abs(o));
    for (const Vec3& q : p.positions) {
        max_c = std::max({max_c, std::abs(q.x), std::abs(q.y), std::abs(q.z)});
    }
    return 1e-8 * std::max(1.0, max_w * max_c);
}

void check_constraints(const RbfCoefficients& w, const NeighborPatch& p) {
    double s0 = 0, sx = 0, sy = 0, sz = 0;
    for (std::size_t i = 0; i < w.omega.size(); ++i) {
        s0 += w.omega[i];
        sx += w.omega[i] * p.positions[i].x;
        sy += w.omega[i] * p.positions[i].y;
        sz += w.omega[i] * p.positions[i].z;
    }
    const double bound = scaled_constraint_bound(w, p);
    CHECK(std::abs(s0) <= bound);
    CHECK(std::abs(sx) <= bound);
    CHECK(std::abs(sy) <= bound);
    CHECK(std::abs(sz) <= bound);
}

}  // namespace

TEST_CASE("a single occupied reference voxel yields its centroid") {
    Rng rng(1);
    NormalizedCloud c;
    double sx = 0, sy = 0, sz = 0;
    for (int i = 0; i < 10; ++i) {
        const Vec3 p{32.0 + rng.uniform(0.0, 15.9), 0.1, 0.1};
        c.positions.push_back(p);
        c.colors.push_back({0, 0, 0});
        sx += p.x;
        sy += p.y;
        sz += p.z;
    }
    const ReferenceSet refs = select_reference_points(c, {16.0, 4096, 0});
    REQUIRE(refs.count() == 1);
    CHECK(refs.points[0].x == doctest::Approx(sx / 10).epsilon(1e-15));
    CHECK(refs.points[0].y == doctest::Approx(sy / 10).epsilon(1e-15));
    CHECK(refs.points[0].z == doctest::Approx(sz / 10).epsilon(1e-15));
}

TEST_CASE("reference capping is a seeded subset of the candidates") {
    NormalizedCloud c;
    for (int x = 0; x < 20; ++x) {
        for (int y = 0; y < 20; ++y) {
            for (int z = 0; z < 20; ++z) {
                c.positions.push_back({32.0 * x, 32.0 * y, 32.0 * z});
                c.colors.push_back({0, 0, 0});
            }
        }
    }
    const ReferenceSet a = select_reference_points(c, {16.0, 4096, 7});
    const ReferenceSet b = select_reference_points(c, {16.0, 4096, 7});
    REQUIRE(a.count() == 4096);
    REQUIRE(b.count() == 4096);
    std::set<std::tuple<double, double, double>> candidates;
    for (const Vec3& p : c.positions) candidates.insert({p.x, p.y, p.z});
    for (std::size_t i = 0; i < a.count(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
        CHECK(candidates.count({a.points[i].x, a.points[i].y, a.points[i].z}) == 1);
    }
    const ReferenceSet other = select_reference_points(c, {16.0, 4096, 8});
    bool differs = false;
    for (std::size_t i = 0; i < other.count() && !differs; ++i) {
        differs = other.points[i].x != a.points[i].x || other.points[i].y != a.points[i].y ||
                  other.points[i].z != a.points[i].z;
    }
    CHECK(differs);
}

TEST_CASE("uncapped reference count equals the voxel-bucket oracle") {
    const NormalizedCloud c = random_cloud(3000, 2);
    std::set<std::tuple<long long, long long, long long>> cells;
    for (const Vec3& p : c.positions) {
        cells.insert({static_cast<long long>(std::floor(p.z / 16.0)),
                      static_cast<long long>(std::floor(p.y / 16.0)),
                      static_cast<long long>(std::floor(p.x / 16.0))});
    }
    const ReferenceSet refs = select_reference_points(c, {16.0, 1u << 30, 0});
    CHECK(refs.count() == cells.size());
}

TEST_CASE("knn_patch puts a coincident point first at distance zero") {
    const NormalizedCloud c = random_cloud(100, 3, 50.0);
    const FeatureField f = synthetic_field(c, 4);
    const NeighborPatch p = knn_patch(c, f, c.positions[17]);
    REQUIRE(p.size() == kPatchSize);
    CHECK(p.positions[0].x == c.positions[17].x);
    CHECK(p.features[0][0] == f.curvature[17]);
    CHECK(p.features[1][0] == f.luma[17]);
    CHECK(p.features[2][0] == f.chroma[17]);
}

TEST_CASE("a 30-point cloud is returned whole, sorted by distance") {
    const NormalizedCloud c = random_cloud(30, 5, 50.0);
    const FeatureField f = synthetic_field(c, 6);
    const Vec3 ref{25.0, 25.0, 25.0};
    const NeighborPatch p = knn_patch(c, f, ref);
    REQUIRE(p.size() == 30);
    std::set<std::tuple<double, double, double>> seen;
    double prev = -1.0;
    for (std::size_t i = 0; i < 30; ++i) {
        const Vec3 d = p.positions[i] - ref;
        const double dist = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
        CHECK(dist >= prev);
        prev = dist;
        seen.insert({p.positions[i].x, p.positions[i].y, p.positions[i].z});
    }
    CHECK(seen.size() == 30);
}

TEST_CASE("knn_patch matches a linear-scan oracle on a large cloud") {
    const NormalizedCloud c = random_cloud(10000, 7);
    const FeatureField f = synthetic_field(c, 8);
    const PatchIndex index(c, f);
    Rng rng(9);
    for (int t = 0; t < 25; ++t) {
        const Vec3 ref{rng.uniform(0.0, 1024.0), rng.uniform(0.0, 1024.0),
                       rng.uniform(0.0, 1024.0)};
        std::vector<std::pair<double, std::size_t>> d2(c.count());
        for (std::size_t j = 0; j < c.count(); ++j) {
            const Vec3 d = c.positions[j] - ref;
            d2[j] = {d.x * d.x + d.y * d.y + d.z * d.z, j};
        }
        std::sort(d2.begin(), d2.end());
        const NeighborPatch p = knn_patch(index, ref);
        REQUIRE(p.size() == kPatchSize);
        for (std::size_t i = 0; i < kPatchSize; ++i) {
            const std::size_t j = d2[i].second;
            CHECK(p.positions[i].x == c.positions[j].x);
            CHECK(p.positions[i].y == c.positions[j].y);
            CHECK(p.positions[i].z == c.positions[j].z);
            CHECK(p.features[0][i] == f.curvature[j]);
            CHECK(p.features[1][i] == f.luma[j]);
            CHECK(p.features[2][i] == f.chroma[j]);
        }
    }
}

TEST_CASE("duplicate positions collapse to their first occurrence") {
    NormalizedCloud c = random_cloud(32, 10, 50.0);
    FeatureField f = synthetic_field(c, 11);
    f.cloud = &c;
    for (int copy = 0; copy < 5; ++copy) {
        c.positions.push_back(c.positions[3]);
        c.colors.push_back({0, 0, 0});
        f.curvature.push_back(900.0 + copy);  // must never appear in a patch
        f.luma.push_back(900.0 + copy);
        f.chroma.push_back(900.0 + copy);
    }
    const NeighborPatch p = knn_patch(c, f, c.positions[3]);
    REQUIRE(p.size() == 30);
    std::size_t occurrences = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p.features[0][i] < 900.0);
        if (p.positions[i].x == c.positions[3].x && p.positions[i].y == c.positions[3].y &&
            p.positions[i].z == c.positions[3].z) {
            ++occurrences;
            CHECK(p.features[0][i] == f.curvature[3]);
        }
    }
    CHECK(occurrences == 1);
}

TEST_CASE("too few distinct positions is InsufficientDensity") {
    NormalizedCloud c = random_cloud(20, 12, 50.0);
    FeatureField f = synthetic_field(c, 13);
    f.cloud = &c;
    for (int copy = 0; copy < 15; ++copy) {  // 35 points, 20 distinct
        c.positions.push_back(c.positions[copy % 20]);
        c.colors.push_back({0, 0, 0});
        f.curvature.push_back(0.0);
        f.luma.push_back(0.0);
        f.chroma.push_back(0.0);
    }
    CHECK_PCQ_ERROR(knn_patch(c, f, {0, 0, 0}), InsufficientDensity);
}

TEST_CASE("the kernel is the identity on distances") {
    CHECK(rbf_kernel(0.0) == 0.0);
    CHECK(rbf_kernel(1.0) == 1.0);
    CHECK(rbf_kernel(2.5) == 2.5);
}

TEST_CASE("assemble_system matches the double-loop oracle and is symmetric") {
    const NeighborPatch p = random_patch(14);
    const RbfSystem sys = assemble_system(p, FeatureKind::Luma);
    REQUIRE(sys.X.rows() == 34);
    REQUIRE(sys.X.cols() == 34);
    REQUIRE(sys.Y.size() == 34);

    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(34, 34);
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 30; ++j) {
            const Vec3 d = p.positions[i] - p.positions[j];
            want(static_cast<int>(i), static_cast<int>(j)) =
                rbf_kernel(std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z));
        }
        want(static_cast<int>(i), 30) = p.positions[i].x;
        want(static_cast<int>(i), 31) = p.positions[i].y;
        want(static_cast<int>(i), 32) = p.positions[i].z;
        want(static_cast<int>(i), 33) = 1.0;
        want(30, static_cast<int>(i)) = p.positions[i].x;
        want(31, static_cast<int>(i)) = p.positions[i].y;
        want(32, static_cast<int>(i)) = p.positions[i].z;
        want(33, static_cast<int>(i)) = 1.0;
    }
    CHECK((sys.X - want).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sys.X - sys.X.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 30; ++i) {
        CHECK(sys.X(i, i) == 0.0);
        CHECK(sys.Y(i) == p.features[1][static_cast<std::size_t>(i)]);
    }
    for (int i = 30; i < 34; ++i) CHECK(sys.Y(i) == 0.0);
}

TEST_CASE("constant features are reproduced by the polynomial term alone") {
    NeighborPatch p = random_patch(15);
    for (auto& channel : p.features) channel.assign(kPatchSize, 3.25);
    const RbfCoefficients w = solve_rbf(p, FeatureKind::Curvature);
    for (double o : w.omega) CHECK(std::abs(o) <= 1e-8);
    CHECK(std::abs(w.a) <= 1e-8);
    CHECK(std::abs(w.b) <= 1e-8);
    CHECK(std::abs(w.c) <= 1e-8);
    CHECK(w.d == doctest::Approx(3.25).epsilon(1e-10));

    Rng rng(16);
    for (int t = 0; t < 5; ++t) {
        const Vec3 q{rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0),
                     rng.uniform(-30.0, 30.0)};
        CHECK(std::abs(evaluate_rbf(w, p, q) - 3.25) <= 1e-7);
    }
}

TEST_CASE("linear features land entirely in the affine coefficients") {
    NeighborPatch p = random_patch(17);
    for (std::size_t i = 0; i < kPatchSize; ++i) {
        p.features[0][i] = p.positions[i].x;
        p.features[1][i] = 2.0 - 0.5 * p.positions[i].x + 0.25 * p.positions[i].y -
                           0.125 * p.positions[i].z;
    }
    const RbfCoefficients wx = solve_rbf(p, FeatureKind::Curvature);
    CHECK(wx.a == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(wx.b) <= 1e-8);
    CHECK(std::abs(wx.c) <= 1e-8);
    CHECK(std::abs(wx.d) <= 1e-8);
    for (double o : wx.omega) CHECK(std::abs(o) <= 1e-8);

    const RbfCoefficients wl = solve_rbf(p, FeatureKind::Luma);
    CHECK(wl.a == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(wl.b == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(wl.c == doctest::Approx(-0.125).epsilon(1e-9));
    CHECK(wl.d == doctest::Approx(2.0).epsilon(1e-9));
    for (double o : wl.omega) CHECK(std::abs(o) <= 1e-8);
}

TEST_CASE("random patches interpolate their nodes and satisfy the constraints") {
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        const NeighborPatch p = random_patch(seed);
        const RbfCoefficients w = solve_rbf(p, FeatureKind::Chroma);
        for (std::size_t i = 0; i < kPatchSize; ++i) {
            CHECK(std::abs(evaluate_rbf(w, p, p.positions[i]) - p.features[2][i]) <= 1e-6);
        }
        check_constraints(w, p);
    }
}

TEST_CASE("node error scales linearly with feature magnitude") {
    const NeighborPatch p = random_patch(141, 10.0, 255.0);
    const RbfCoefficients w = solve_rbf(p, FeatureKind::Curvature);
    for (std::size_t i = 0; i < kPatchSize; ++i) {
        CHECK(std::abs(evaluate_rbf(w, p, p.positions[i]) - p.features[0][i]) <= 256.0 * 1e-6);
    }
}

TEST_CASE("solve_rbf agrees with an independent dense solve") {
    for (std::uint64_t seed = 150; seed < 160; ++seed) {
        const NeighborPatch p = random_patch(seed);
        const RbfCoefficients w = solve_rbf(p, FeatureKind::Luma);

        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(34, 34);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(34);
        for (std::size_t i = 0; i < 30; ++i) {
            for (std::size_t j = 0; j < 30; ++j) {
                const Vec3 d = p.positions[i] - p.positions[j];
                x(static_cast<int>(i), static_cast<int>(j)) =
                    std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
            }
            x(static_cast<int>(i), 30) = x(30, static_cast<int>(i)) = p.positions[i].x;
            x(static_cast<int>(i), 31) = x(31, static_cast<int>(i)) = p.positions[i].y;
            x(static_cast<int>(i), 32) = x(32, static_cast<int>(i)) = p.positions[i].z;
            x(static_cast<int>(i), 33) = x(33, static_cast<int>(i)) = 1.0;
            y(static_cast<int>(i)) = p.features[1][i];
        }
        double mean_row_norm = 0.0;
        for (int i = 0; i < 30; ++i) mean_row_norm += x.row(i).head(30).norm();
        mean_row_norm /= 30.0;
        for (int i = 0; i < 30; ++i) x(i, i) += 1e-9 * mean_row_norm;

        const Eigen::VectorXd sol = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(x).solve(y);
        for (std::size_t i = 0; i < 30; ++i) {
            CHECK(w.omega[i] == doctest::Approx(sol(static_cast<int>(i))).epsilon(1e-6));
        }
        CHECK(w.a == doctest::Approx(sol(30)).epsilon(1e-6));
        CHECK(w.b == doctest::Approx(sol(31)).epsilon(1e-6));
        CHECK(w.c == doctest::Approx(sol(32)).epsilon(1e-6));
        CHECK(w.d == doctest::Approx(sol(33)).epsilon(1e-6));
    }
}

TEST_CASE("evaluate_rbf matches a direct summation oracle") {
    Rng rng(18);
    const NeighborPatch p = random_patch(19);
    RbfCoefficients w;
    for (std::size_t i = 0; i < kPatchSize; ++i) w.omega.push_back(rng.uniform(-1.0, 1.0));
    w.a = rng.uniform(-1.0, 1.0);
    w.b = rng.uniform(-1.0, 1.0);
    w.c = rng.uniform(-1.0, 1.0);
    w.d = rng.uniform(-1.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        const Vec3 q{rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                     rng.uniform(-100.0, 100.0)};
        double want = w.a * q.x + w.b * q.y + w.c * q.z + w.d;
        for (std::size_t i = 0; i < kPatchSize; ++i) {
            const Vec3 d = q - p.positions[i];
            want += w.omega[i] * std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
        }
        CHECK(evaluate_rbf(w, p, q) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("translating patch and query leaves the surface unchanged") {
    const NeighborPatch p = random_patch(20);
    const RbfCoefficients w = solve_rbf(p, FeatureKind::Curvature);
    const Vec3 shift{113.5, -77.25, 9.0};
    NeighborPatch moved = p;
    moved.ref += shift;
    for (Vec3& q : moved.positions) q += shift;
    const RbfCoefficients wm = solve_rbf(moved, FeatureKind::Curvature);
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        const Vec3 q{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
        CHECK(std::abs(evaluate_rbf(wm, moved, q + shift) - evaluate_rbf(w, p, q)) <= 1e-9);
    }
}

TEST_CASE("rigid rotation preserves the weight magnitudes") {
    const NeighborPatch p = random_patch(22);
    const RbfCoefficients w = solve_rbf(p, FeatureKind::Curvature);

    Eigen::Matrix3d m;
    Rng rng(23);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m(r, c) = rng.normal();
    }
    const Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(m).householderQ();
    NeighborPatch rotated = p;
    for (Vec3& v : rotated.positions) {
        const Eigen::Vector3d r = q * Eigen::Vector3d(v.x, v.y, v.z);
        v = {r.x(), r.y(), r.z()};
    }
    const RbfCoefficients wr = solve_rbf(rotated, FeatureKind::Curvature);

    std::vector<double> a, b;
    for (std::size_t i = 0; i < kPatchSize; ++i) {
        a.push_back(std::abs(w.omega[i]));
        b.push_back(std::abs(wr.omega[i]));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < kPatchSize; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-8);
}

TEST_CASE("a degenerate patch is singular") {
    NeighborPatch p;
    p.ref = {0, 0, 0};
    Rng rng(24);
    for (std::size_t i = 0; i < kPatchSize; ++i) {
        p.positions.push_back({1.0 * i, 1.0 * i, 1.0 * i});
        for (auto& channel : p.features) channel.push_back(rng.uniform());
    }
    CHECK_PCQ_ERROR(solve_rbf(p, FeatureKind::Curvature), SingularPatch);
}

TEST_CASE("one reference point yields nine dense records") {
    const NormalizedCloud c = random_cloud(60, 25, 50.0);
    const ScaleSet scales{{c, c, c}};
    const std::array<FeatureField, 3> fields{
        synthetic_field(scales.clouds[0], 26), synthetic_field(scales.clouds[1], 26),
        synthetic_field(scales.clouds[2], 26)};
    ReferenceSet refs;
    refs.points.push_back({25.0, 25.0, 25.0});
    const TensorFit fit = fit_coefficient_tensor(scales, fields, refs);
    CHECK(fit.tensor.count() == 1);
    CHECK(fit.tensor.records.size() == 9);
    CHECK(fit.kept == std::vector<std::size_t>{0});
    CHECK(fit.dropped.empty());
    for (const RbfCoefficients& rec : fit.tensor.records) {
        CHECK(rec.omega.size() == kPatchSize);
    }
    for (ScaleTag s : kScaleTags) {
        for (FeatureKind f : kFeatureKinds) {
            const NeighborPatch patch = knn_patch(scales[s], fields[static_cast<std::size_t>(s)],
                                                  refs.points[0]);
            const RbfCoefficients direct =
                solve_rbf(patch, f);
            const RbfCoefficients& rec = fit.tensor.at(0, s, f);
            CHECK(rec.d == direct.d);
            for (std::size_t i = 0; i < kPatchSize; ++i) CHECK(rec.omega[i] == direct.omega[i]);
        }
    }
}

TEST_CASE("fitting the same scale set twice is bit-identical across thread counts") {
    const NormalizedCloud c = random_cloud(400, 27, 200.0);
    const ScaleSet scales{{c, c, c}};
    const std::array<FeatureField, 3> fields{
        synthetic_field(scales.clouds[0], 28), synthetic_field(scales.clouds[1], 28),
        synthetic_field(scales.clouds[2], 28)};
    const ReferenceSet refs = select_reference_points(c, {16.0, 64, 5});

    set_worker_threads(1);
    const TensorFit a = fit_coefficient_tensor(scales, fields, refs);
    set_worker_threads(5);
    const TensorFit b = fit_coefficient_tensor(scales, fields, refs);
    set_worker_threads(0);

    REQUIRE(a.tensor.records.size() == b.tensor.records.size());
    for (std::size_t r = 0; r < a.tensor.records.size(); ++r) {
        CHECK(a.tensor.records[r].a == b.tensor.records[r].a);
        CHECK(a.tensor.records[r].d == b.tensor.records[r].d);
        for (std::size_t i = 0; i < kPatchSize; ++i) {
            CHECK(a.tensor.records[r].omega[i] == b.tensor.records[r].omega[i]);
        }
    }
}

TEST_CASE("an analytic linear luma field is recovered at every reference point") {
    NormalizedCloud c = random_cloud(500, 29, 100.0);
    const ScaleSet scales{{c, c, c}};
    std::array<FeatureField, 3> fields;
    for (std::size_t s = 0; s < 3; ++s) {
        fields[s].cloud = &scales.clouds[s];
        for (const Vec3& p : scales.clouds[s].positions) {
            fields[s].curvature.push_back(0.25);
            fields[s].luma.push_back(5.0 + 0.5 * p.x - 0.25 * p.y + 0.125 * p.z);
            fields[s].chroma.push_back(0.0);
        }
    }
    const ReferenceSet refs = select_reference_points(c, {16.0, 32, 11});
    const TensorFit fit = fit_coefficient_tensor(scales, fields, refs);
    REQUIRE(fit.dropped.empty());
    for (std::size_t t = 0; t < fit.tensor.count(); ++t) {
        for (ScaleTag s : kScaleTags) {
            const RbfCoefficients& rec = fit.tensor.at(t, s, FeatureKind::Luma);
            CHECK(rec.a == doctest::Approx(0.5).epsilon(1e-7));
            CHECK(rec.b == doctest::Approx(-0.25).epsilon(1e-7));
            CHECK(rec.c == doctest::Approx(0.125).epsilon(1e-7));
            CHECK(rec.d == doctest::Approx(5.0).epsilon(1e-6));
            for (double o : rec.omega) CHECK(std::abs(o) <= 1e-7);
        }
    }
}

TEST_CASE("singular reference points are dropped, not fatal") {
    NormalizedCloud c;
    Rng rng(30);
    for (int i = 0; i < 60; ++i) {  // general-position cluster
        c.positions.push_back({2000.0 + rng.uniform(0.0, 40.0),
                               2000.0 + rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0)});
        c.colors.push_back({0, 0, 0});
    }
    for (int i = 0; i < 40; ++i) {  // line cluster whose patches fail validity
        c.positions.push_back({1.0 * i, 1.0 * i, 1.0 * i});
        c.colors.push_back({0, 0, 0});
    }
    const ScaleSet scales{{c, c, c}};
    const std::array<FeatureField, 3> fields{
        synthetic_field(scales.clouds[0], 31), synthetic_field(scales.clouds[1], 31),
        synthetic_field(scales.clouds[2], 31)};
    ReferenceSet refs;
    refs.points.push_back({2020.0, 2020.0, 20.0});
    refs.points.push_back({20.0, 20.0, 20.0});
    const TensorFit fit = fit_coefficient_tensor(scales, fields, refs);
    CHECK(fit.kept == std::vector<std::size_t>{0});
    CHECK(fit.dropped == std::vector<std::size_t>{1});
    CHECK(fit.tensor.count() == 1);
    CHECK(fit.tensor.records.size() == 9);
}

TEST_CASE("a fully degenerate cloud fails with EmptyTensor") {
    NormalizedCloud c;
    for (int i = 0; i < 40; ++i) {
        c.positions.push_back({1.0 * i, 1.0 * i, 1.0 * i});
        c.colors.push_back({0, 0, 0});
    }
    const ScaleSet scales{{c, c, c}};
    const std::array<FeatureField, 3> fields{
        synthetic_field(scales.clouds[0], 33), synthetic_field(scales.clouds[1], 33),
        synthetic_field(scales.clouds[2], 33)};
    ReferenceSet refs;
    refs.points.push_back({20.0, 20.0, 20.0});
    CHECK_PCQ_ERROR(fit_coefficient_tensor(scales, fields, refs), EmptyTensor);
}

TEST_CASE("align_tensors keeps the intersection of surviving reference points") {
    auto record = [](double tag) {
        RbfCoefficients w;
        w.omega.assign(kPatchSize, 0.0);
        w.d = tag;
        return w;
    };
    ReferenceSet input;
    for (int i = 0; i < 4; ++i) input.points.push_back({1.0 * i, 0.0, 0.0});

    TensorFit a;
    a.kept = {0, 2, 3};
    a.dropped = {1};
    for (std::size_t t : a.kept) {
        a.tensor.refs.points.push_back(input.points[t]);
        for (int g = 0; g < 9; ++g) a.tensor.records.push_back(record(100.0 * t + g));
    }
    TensorFit b;
    b.kept = {0, 1, 3};
    b.dropped = {2};
    for (std::size_t t : b.kept) {
        b.tensor.refs.points.push_back(input.points[t]);
        for (int g = 0; g < 9; ++g) b.tensor.records.push_back(record(1000.0 * t + g));
    }

    const auto [ta, tb] = align_tensors(a, b);
    REQUIRE(ta.count() == 2);
    REQUIRE(tb.count() == 2);
    CHECK(ta.refs.points[0].x == 0.0);
    CHECK(ta.refs.points[1].x == 3.0);
    CHECK(tb.refs.points[0].x == 0.0);
    CHECK(tb.refs.points[1].x == 3.0);
    CHECK(ta.at(0, ScaleTag::High, FeatureKind::Curvature).d == 0.0);
    CHECK(ta.at(1, ScaleTag::High, FeatureKind::Curvature).d == 300.0);
    CHECK(ta.at(1, ScaleTag::Low, FeatureKind::Chroma).d == 308.0);
    CHECK(tb.at(1, ScaleTag::High, FeatureKind::Curvature).d == 3000.0);
    CHECK(tb.at(1, ScaleTag::Medium, FeatureKind::Luma).d == 3004.0);
}
