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

// Test utilities: seeded random volumes and the independent brute-force
// oracles the unit suites check the implementation against. Oracles are
// written from the definitions, not by calling library internals.

#ifndef TDREG_TESTS_HELPERS_HPP
#define TDREG_TESTS_HELPERS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tdreg/rng.hpp"
#include "tdreg/volume.hpp"

namespace tdreg::testing {

inline ScalarVolume random_scalar(const GridSpec& g, Rng& rng, double lo = 0.0,
                                  double hi = 1.0) {
    ScalarVolume v(g);
    for (auto& x : v.data) x = rng.uniform(lo, hi);
    return v;
}

inline VectorField random_field(const GridSpec& g, FieldKind kind, Rng& rng,
                                double amplitude) {
    VectorField f(g, kind);
    for (auto& x : f.data) x = rng.uniform(-amplitude, amplitude);
    return f;
}

// Smooth velocity bounded by `max_norm` voxels: seeded noise tapered to zero
// at the faces, repeatedly smoothed, rescaled so the largest voxel norm hits
// the bound. The family behind the diffeomorphism properties.
VectorField bounded_smooth_velocity(const GridSpec& g, double max_norm,
                                    std::uint64_t seed);

inline TensorVolume random_tensors(const GridSpec& g, Rng& rng, double scale = 1.0) {
    TensorVolume t(g);
    for (auto& x : t.data) x = scale * rng.uniform(-1.0, 1.0);
    return t;
}

// Direct-sum trilinear interpolation with clamp-to-edge: an independent
// formulation (explicit corner weights) of the sampler under test.
inline double oracle_trilinear(const std::vector<double>& data, const GridSpec& g,
                               int channels, int channel, double x, double y,
                               double z) {
    auto prep = [](double v, int n, int& lo, int& hi, double& f) {
        if (v <= 0.0) {
            lo = hi = 0;
            f = 0.0;
        } else if (v >= n - 1) {
            lo = hi = n - 1;
            f = 0.0;
        } else {
            lo = static_cast<int>(std::floor(v));
            hi = lo + 1;
            f = v - lo;
        }
    };
    int x0, x1, y0, y1, z0, z1;
    double fx, fy, fz;
    prep(x, g.nx, x0, x1, fx);
    prep(y, g.ny, y0, y1, fy);
    prep(z, g.nz, z0, z1, fz);

    auto value = [&](int i, int j, int k) {
        return data[channels * g.index(i, j, k) + channel];
    };
    double sum = 0.0;
    sum += value(x0, y0, z0) * (1 - fx) * (1 - fy) * (1 - fz);
    sum += value(x1, y0, z0) * fx * (1 - fy) * (1 - fz);
    sum += value(x0, y1, z0) * (1 - fx) * fy * (1 - fz);
    sum += value(x1, y1, z0) * fx * fy * (1 - fz);
    sum += value(x0, y0, z1) * (1 - fx) * (1 - fy) * fz;
    sum += value(x1, y0, z1) * fx * (1 - fy) * fz;
    sum += value(x0, y1, z1) * (1 - fx) * fy * fz;
    sum += value(x1, y1, z1) * fx * fy * fz;
    return sum;
}

// Jacobi eigen decomposition of a symmetric 3x3 matrix with eigenvectors
// (columns of V), eigenvalues descending. Used by the polar-decomposition
// oracle (J^T J)^(1/2) and as an independent eigenvalue reference.
inline void oracle_sym_eig(const double a_in[9], double eig[3], double v_out[9]) {
    double a[3][3] = {{a_in[0], a_in[1], a_in[2]},
                      {a_in[3], a_in[4], a_in[5]},
                      {a_in[6], a_in[7], a_in[8]}};
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 64; ++sweep) {
        const double off =
            std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < 3; ++r) {
                    const double arp = a[r][p], arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for (int r = 0; r < 3; ++r) {
                    const double apr = a[p][r], aqr = a[q][r];
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                for (int r = 0; r < 3; ++r) {
                    const double vrp = v[r][p], vrq = v[r][q];
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
        }
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3,
              [&](int i, int j) { return a[i][i] > a[j][j]; });
    for (int c = 0; c < 3; ++c) {
        eig[c] = a[order[c]][order[c]];
        for (int r = 0; r < 3; ++r) v_out[3 * r + c] = v[r][order[c]];
    }
}

// Polar-factor oracle: P = (J^T J)^(1/2) via eigen decomposition, R = J P^-1.
inline void oracle_polar(const double j[9], double r_out[9]) {
    double jtj[9];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            jtj[3 * r + c] =
                j[r] * j[c] + j[3 + r] * j[3 + c] + j[6 + r] * j[6 + c];
    double eig[3], v[9];
    oracle_sym_eig(jtj, eig, v);
    // P^-1 = V diag(1/sqrt(eig)) V^T
    double pinv[9] = {0};
    for (int e = 0; e < 3; ++e) {
        const double w = 1.0 / std::sqrt(eig[e]);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                pinv[3 * r + c] += w * v[3 * r + e] * v[3 * c + e];
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            r_out[3 * r + c] = j[3 * r] * pinv[c] + j[3 * r + 1] * pinv[3 + c] +
                               j[3 * r + 2] * pinv[6 + c];
}

inline double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const double lower = *std::max_element(values.begin(), values.begin() + mid);
        m = 0.5 * (m + lower);
    }
    return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace tdreg::testing

#endif
