/*
Copyright 2026 the tdreg authors
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tdreg/diffeo.hpp"
#include "tdreg/interp.hpp"
#include "tdreg/tensor.hpp"

using namespace tdreg;

namespace {

SymTensor random_sym(Rng& rng, double scale = 1.0) {
    return SymTensor(scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1),
                     scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1),
                     scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1));
}

Rotation random_rotation(Rng& rng) {
    // rotation about a random axis by a random angle
    const double theta = rng.uniform(0, 2 * M_PI);
    double ax = rng.normal(), ay = rng.normal(), az = rng.normal();
    const double n = std::sqrt(ax * ax + ay * ay + az * az);
    ax /= n;
    ay /= n;
    az /= n;
    const double c = std::cos(theta), s = std::sin(theta), t = 1 - c;
    Rotation r;
    r.m[0] = t * ax * ax + c;
    r.m[1] = t * ax * ay - s * az;
    r.m[2] = t * ax * az + s * ay;
    r.m[3] = t * ax * ay + s * az;
    r.m[4] = t * ay * ay + c;
    r.m[5] = t * ay * az - s * ax;
    r.m[6] = t * ax * az - s * ay;
    r.m[7] = t * ay * az + s * ax;
    r.m[8] = t * az * az + c;
    return r;
}

double max_orthogonality_defect(const Rotation& r) {
    double defect = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r.m[3 * k + i] * r.m[3 * k + j];
            defect = std::max(defect, std::fabs(dot - (i == j ? 1.0 : 0.0)));
        }
    return defect;
}

} // namespace

TEST_CASE("eigenvalues of simple diagonal and degenerate tensors") {
    const auto e1 = eigenvalues_sym3(SymTensor(3, 1, 1, 0, 0, 0));
    CHECK(e1[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e1[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e1[2] == doctest::Approx(1.0).epsilon(1e-12));

    const auto e2 = eigenvalues_sym3(SymTensor(1, 1, 1, 0, 0, 0));
    for (const double v : e2) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));

    // off-diagonal swap block: characteristic polynomial lambda^3 - lambda
    const auto e3 = eigenvalues_sym3(SymTensor(0, 0, 0, 1, 0, 0));
    CHECK(e3[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(e3[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(e3[2] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("eigenvalues agree with the Jacobi oracle and matrix invariants") {
    Rng rng(41);
    for (int t = 0; t < 500; ++t) {
        const SymTensor d = random_sym(rng, 2.0);
        const auto eig = eigenvalues_sym3(d);
        CHECK(eig[0] >= eig[1]);
        CHECK(eig[1] >= eig[2]);

        const double m[9] = {d.xx, d.xy, d.xz, d.xy, d.yy, d.yz, d.xz, d.yz, d.zz};
        double oracle[3], vecs[9];
        testing::oracle_sym_eig(m, oracle, vecs);
        const double scale = std::max({std::fabs(oracle[0]), std::fabs(oracle[2]), 1e-12});
        for (int i = 0; i < 3; ++i)
            CHECK(std::fabs(eig[i] - oracle[i]) <= 1e-9 * scale);

        // trace and determinant invariants
        CHECK(eig[0] + eig[1] + eig[2] ==
              doctest::Approx(d.xx + d.yy + d.zz).epsilon(1e-9));
        CHECK(eig[0] * eig[1] * eig[2] == doctest::Approx(det3(m)).epsilon(5e-8));
    }
}

TEST_CASE("fa of canonical tensors") {
    CHECK(fa(SymTensor(2, 2, 2, 0, 0, 0)) == 0.0);
    CHECK(fa(SymTensor(0, 0, 0, 0, 0, 0)) == 0.0);
    CHECK(fa(SymTensor(1, 0, 0, 0, 0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fa(SymTensor(3, 1, 1, 0, 0, 0)) ==
          doctest::Approx(std::sqrt(4.0 / 11.0)).epsilon(1e-12));
    CHECK(fa(SymTensor(3, 1, 1, 0, 0, 0)) == doctest::Approx(0.60302).epsilon(1e-4));
}

TEST_CASE("fa is scale invariant and bounded") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        const SymTensor d = random_sym(rng);
        const double f = fa(d);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        const double c = rng.uniform(0.1, 10.0);
        const SymTensor scaled(c * d.xx, c * d.yy, c * d.zz, c * d.xy, c * d.xz,
                               c * d.yz);
        CHECK(fa(scaled) == doctest::Approx(f).epsilon(1e-12));
    }
}

TEST_CASE("fa_map equals the per-voxel scalar") {
    Rng rng(9);
    const GridSpec g(4, 4, 4);
    const TensorVolume tv = testing::random_tensors(g, rng);
    const ScalarVolume map = fa_map(tv);
    for (std::size_t v = 0; v < g.voxel_count(); ++v)
        CHECK(map.data[v] == fa(SymTensor(tv.data.data() + 6 * v)));

    TensorVolume iso(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v)
        iso.data[6 * v] = iso.data[6 * v + 1] = iso.data[6 * v + 2] = 0.7;
    for (const double f : fa_map(iso).data) CHECK(f == 0.0);

    TensorVolume rank1(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) rank1.data[6 * v] = 1.0;
    for (const double f : fa_map(rank1).data)
        CHECK(f == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("polar factor of a rotation is that rotation") {
    const double j[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1}; // 90 degrees about z
    const Rotation r = polar_rotation(j);
    for (int i = 0; i < 9; ++i) CHECK(r.m[i] == doctest::Approx(j[i]).epsilon(1e-12));
}

TEST_CASE("polar factor of an SPD matrix is the identity") {
    const double j[9] = {2, 0, 0, 0, 1, 0, 0, 0, 3};
    const Rotation r = polar_rotation(j);
    for (int i = 0; i < 9; ++i)
        CHECK(r.m[i] == doctest::Approx(i % 4 == 0 ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("polar factor of a rotation times a stretch") {
    // J = [[0,-2,0],[1,0,0],[0,0,3]]: P = diag(1,2,3), R rotates x to y
    const double j[9] = {0, -2, 0, 1, 0, 0, 0, 0, 3};
    const Rotation r = polar_rotation(j);
    const double expect[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i)
        CHECK(r.m[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("polar decomposition satisfies its contracts on random matrices") {
    Rng rng(1001);
    int tested = 0;
    while (tested < 300) {
        double j[9];
        for (auto& x : j) x = rng.uniform(-1.5, 1.5);
        const double det = det3(j);
        if (det < 0.2 || det > 5.0) continue;
        ++tested;

        const Rotation r = polar_rotation(j);
        CHECK(max_orthogonality_defect(r) <= 1e-6);
        CHECK(std::fabs(det3(r.m) - 1.0) <= 1e-6);

        // P = R^T J symmetric PSD; R (R^T J) reconstructs J
        double p[9], rec[9];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                p[3 * a + b] = r.m[a] * j[b] + r.m[3 + a] * j[3 + b] +
                               r.m[6 + a] * j[6 + b];
        CHECK(std::fabs(p[1] - p[3]) <= 1e-6);
        CHECK(std::fabs(p[2] - p[6]) <= 1e-6);
        CHECK(std::fabs(p[5] - p[7]) <= 1e-6);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                rec[3 * a + b] = r.m[3 * a] * p[b] + r.m[3 * a + 1] * p[3 + b] +
                                 r.m[3 * a + 2] * p[6 + b];
                CHECK(std::fabs(rec[3 * a + b] - j[3 * a + b]) <= 1e-6);
            }

        // independent (J^T J)^(1/2) oracle
        double oracle_r[9];
        testing::oracle_polar(j, oracle_r);
        for (int i = 0; i < 9; ++i) CHECK(std::fabs(r.m[i] - oracle_r[i]) <= 1e-6);
    }
}

TEST_CASE("polar decomposition rejects singular and folded Jacobians") {
    const double singular[9] = {1, 0, 0, 0, 1, 0, 0, 0, 0};
    CHECK_THROWS_AS(polar_rotation(singular), SingularJacobianError);
    const double folded[9] = {-1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK_THROWS_AS(polar_rotation(folded), FoldError);
}

TEST_CASE("reorientation by the identity and by a quarter turn") {
    Rng rng(2);
    const SymTensor d = random_sym(rng);
    const SymTensor same = reorient_tensor(d, Rotation{});
    CHECK(same.xx == d.xx);
    CHECK(same.yz == d.yz);

    Rotation quarter; // 90 degrees about z maps x to y
    quarter.m[0] = 0;
    quarter.m[1] = -1;
    quarter.m[3] = 1;
    quarter.m[4] = 0;
    const SymTensor spun = reorient_tensor(SymTensor(1, 0, 0, 0, 0, 0), quarter);
    CHECK(spun.xx == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    CHECK(spun.yy == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(spun.zz == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("reorientation preserves eigenvalues and fa") {
    Rng rng(77);
    for (int t = 0; t < 300; ++t) {
        const SymTensor d = random_sym(rng);
        const Rotation r = random_rotation(rng);
        const SymTensor out = reorient_tensor(d, r);
        const auto before = eigenvalues_sym3(d);
        const auto after = eigenvalues_sym3(out);
        const double scale = std::max(1.0, std::fabs(before[0]));
        for (int i = 0; i < 3; ++i)
            CHECK(std::fabs(after[i] - before[i]) <= 1e-9 * scale);
        CHECK(fa(out) == doctest::Approx(fa(d)).epsilon(1e-9));
    }
}

TEST_CASE("reorient_field with zero displacement is the identity") {
    Rng rng(10);
    const GridSpec g(5, 5, 5);
    const TensorVolume tv = testing::random_tensors(g, rng);
    const VectorField zero(g, FieldKind::Displacement);
    const TensorVolume out = reorient_field(tv, zero);
    CHECK(out.data == tv.data);
}

TEST_CASE("pure translation applies no rotation") {
    Rng rng(11);
    const GridSpec g(6, 6, 6);
    const TensorVolume tv = testing::random_tensors(g, rng);
    VectorField phi(g, FieldKind::Displacement);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        phi.data[3 * v] = 0.5;
        phi.data[3 * v + 1] = -0.25;
    }
    const TensorVolume moved = warp_tensor_components(tv, phi);
    const TensorVolume out = reorient_field(moved, phi);
    CHECK(testing::max_abs_diff(out.data, moved.data) <= 1e-12);
}

TEST_CASE("global rotation field rotates every tensor by the same rotation") {
    const GridSpec g(16, 16, 16);
    // uniform principal direction along x, constant eigenvalues
    TensorVolume tv(g);
    const SymTensor d(1.8, 0.3, 0.3, 0, 0, 0);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) d.store(tv.data.data() + 6 * v);

    const double theta = 15.0 * M_PI / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = (g.nx - 1) / 2.0, cy = (g.ny - 1) / 2.0;
    VectorField phi(g, FieldKind::Displacement);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double x = i - cx, y = j - cy;
                phi.vec(i, j, k)[0] = (c * x - s * y) - x;
                phi.vec(i, j, k)[1] = (s * x + c * y) - y;
            }

    const TensorVolume moved = warp_tensor_components(tv, phi);
    const TensorVolume out = reorient_field(moved, phi);

    Rotation rot;
    rot.m[0] = c;
    rot.m[1] = -s;
    rot.m[3] = s;
    rot.m[4] = c;
    rot.m[8] = 1.0;
    const SymTensor expect = reorient_tensor(d, rot);

    for (int k = 4; k < g.nz - 4; ++k)
        for (int j = 4; j < g.ny - 4; ++j)
            for (int i = 4; i < g.nx - 4; ++i) {
                const SymTensor got(out.tensor(i, j, k));
                CHECK(got.xx == doctest::Approx(expect.xx).epsilon(1e-9));
                CHECK(got.yy == doctest::Approx(expect.yy).epsilon(1e-9));
                CHECK(got.zz == doctest::Approx(expect.zz).epsilon(1e-9));
                CHECK(got.xy == doctest::Approx(expect.xy).epsilon(1e-9));
            }
}

TEST_CASE("strict mode reports fold location, lenient mode counts") {
    const GridSpec g(6, 6, 6);
    TensorVolume tv(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        tv.data[6 * v] = tv.data[6 * v + 1] = tv.data[6 * v + 2] = 1.0;
    }
    // u_x = -1.5 x collapses the x axis: det J = -0.5 < 0 everywhere
    VectorField phi(g, FieldKind::Displacement);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) phi.vec(i, j, k)[0] = -1.5 * i;

    CHECK_THROWS_AS(reorient_field(tv, phi, FoldPolicy::Strict), FoldError);
    try {
        reorient_field(tv, phi, FoldPolicy::Strict);
    } catch (const FoldError& e) {
        CHECK(std::string(e.what()).find("voxel (") != std::string::npos);
    }

    ReorientStats stats;
    const TensorVolume out = reorient_field(tv, phi, FoldPolicy::Lenient, &stats);
    CHECK(stats.folded == static_cast<long>(g.voxel_count()));
    CHECK(out.data == tv.data); // identity rotation on isotropic tensors
}
