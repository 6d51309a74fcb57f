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

#include "tdreg/diffeo.hpp"

#include <cmath>

#include "tdreg/interp.hpp"
#include "tdreg/parallel.hpp"

namespace tdreg {

void gaussian_taps(double sigma_vox, double taps[3]) {
    const double w = std::exp(-1.0 / (2.0 * sigma_vox * sigma_vox));
    const double norm = 1.0 + 2.0 * w;
    taps[0] = w / norm;
    taps[1] = 1.0 / norm;
    taps[2] = taps[0];
}

namespace {

// One clamped 3-tap pass along `axis` for 3 interleaved components.
void smooth_axis(const std::vector<double>& src, std::vector<double>& dst,
                 const GridSpec& g, int axis, const double taps[3]) {
    const std::size_t step = 3 * (axis == 0 ? 1
                              : axis == 1 ? static_cast<std::size_t>(g.nx)
                                          : static_cast<std::size_t>(g.nx) * g.ny);
    const int n_axis = axis == 0 ? g.nx : axis == 1 ? g.ny : g.nz;
    const double t0 = taps[0], t1 = taps[1];

    parallel_for(0, g.nz, [&](int k) {
        for (int j = 0; j < g.ny; ++j) {
            std::size_t idx = 3 * g.index(0, j, k);
            for (int i = 0; i < g.nx; ++i, idx += 3) {
                const int a = axis == 0 ? i : axis == 1 ? j : k;
                const std::size_t prev = a > 0 ? idx - step : idx;
                const std::size_t next = a < n_axis - 1 ? idx + step : idx;
                for (int c = 0; c < 3; ++c)
                    dst[idx + c] =
                        t1 * src[idx + c] + t0 * (src[prev + c] + src[next + c]);
            }
        }
    });
}

} // namespace

VectorField gaussian_smooth(const VectorField& v, double sigma_mm) {
    expect_kind(v, FieldKind::Velocity, "gaussian_smooth");
    if (!(sigma_mm > 0.0))
        throw std::invalid_argument("gaussian_smooth: sigma must be positive");

    double taps[3];
    gaussian_taps(sigma_mm / v.grid.spacing_mm, taps);

    VectorField out(v.grid, FieldKind::Velocity);
    std::vector<double> tmp(v.data.size());
    smooth_axis(v.data, tmp, v.grid, 0, taps);
    smooth_axis(tmp, out.data, v.grid, 1, taps);
    smooth_axis(out.data, tmp, v.grid, 2, taps);
    out.data.swap(tmp);
    return out;
}

VectorField compose(const VectorField& u_outer, const VectorField& u_inner) {
    expect_kind(u_outer, FieldKind::Displacement, "compose");
    expect_kind(u_inner, FieldKind::Displacement, "compose");
    assert_same_grid(u_outer.grid, u_inner.grid);

    const GridSpec& g = u_outer.grid;
    VectorField out(g, FieldKind::Displacement);
    parallel_for(0, g.nz, [&](int k) {
        std::size_t idx = g.index(0, 0, k);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i, ++idx) {
                const double* ui = u_inner.data.data() + 3 * idx;
                double s[3];
                detail::sample_channels<3>(u_outer.data.data(), g, i + ui[0], j + ui[1],
                                           k + ui[2], s);
                double* o = out.data.data() + 3 * idx;
                o[0] = ui[0] + s[0];
                o[1] = ui[1] + s[1];
                o[2] = ui[2] + s[2];
            }
        }
    });
    return out;
}

std::vector<VectorField> exp_svf_stages(const VectorField& v, int steps) {
    expect_kind(v, FieldKind::Velocity, "exp_svf");
    if (steps < 0) throw std::invalid_argument("exp_svf: steps must be >= 0");

    std::vector<VectorField> stages;
    stages.reserve(static_cast<std::size_t>(steps) + 1);

    VectorField u(v.grid, FieldKind::Displacement);
    const double scale = std::ldexp(1.0, -steps); // exact power of two
    for (std::size_t i = 0; i < v.data.size(); ++i) u.data[i] = v.data[i] * scale;
    stages.push_back(std::move(u));

    for (int s = 0; s < steps; ++s) {
        const VectorField& cur = stages.back();
        stages.push_back(compose(cur, cur));
    }
    return stages;
}

VectorField exp_svf(const VectorField& v, int steps) {
    auto stages = exp_svf_stages(v, steps);
    return std::move(stages.back());
}

JacobianField jacobian(const VectorField& u) {
    expect_kind(u, FieldKind::Displacement, "jacobian");
    const GridSpec& g = u.grid;
    JacobianField jac(g);

    parallel_for(0, g.nz, [&](int k) {
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                double* m = jac.mat(i, j, k);
                // d u_c / d axis: central in the interior, one-sided on faces
                for (int axis = 0; axis < 3; ++axis) {
                    const int a = axis == 0 ? i : axis == 1 ? j : k;
                    const int n = axis == 0 ? g.nx : axis == 1 ? g.ny : g.nz;
                    int ip = i, jp = j, kp = k, im = i, jm = j, km = k;
                    double h = 2.0;
                    if (a == 0) {
                        h = 1.0;
                    } else if (a == n - 1) {
                        h = 1.0;
                    }
                    if (axis == 0) {
                        ip = std::min(i + 1, g.nx - 1);
                        im = std::max(i - 1, 0);
                    } else if (axis == 1) {
                        jp = std::min(j + 1, g.ny - 1);
                        jm = std::max(j - 1, 0);
                    } else {
                        kp = std::min(k + 1, g.nz - 1);
                        km = std::max(k - 1, 0);
                    }
                    const double* up = u.vec(ip, jp, kp);
                    const double* um = u.vec(im, jm, km);
                    for (int c = 0; c < 3; ++c)
                        m[3 * c + axis] = (up[c] - um[c]) / h;
                }
                m[0] += 1.0;
                m[4] += 1.0;
                m[8] += 1.0;
            }
        }
    });
    return jac;
}

ScalarVolume jacobian_determinant(const JacobianField& jac) {
    ScalarVolume out(jac.grid);
    const std::size_t n = jac.grid.voxel_count();
    for (std::size_t idx = 0; idx < n; ++idx)
        out.data[idx] = det3(jac.data.data() + 9 * idx);
    return out;
}

} // namespace tdreg
