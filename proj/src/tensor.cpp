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

#include "tdreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tdreg/diffeo.hpp"
#include "tdreg/parallel.hpp"

namespace tdreg {

namespace {

constexpr double kSingularDet = 1e-8;

// Cyclic Jacobi sweeps; only used near-degenerate where the closed form
// loses accuracy. Eigenvalues only, no vectors.
std::array<double, 3> jacobi_eigenvalues(const SymTensor& d) {
    double a[3][3] = {{d.xx, d.xy, d.xz}, {d.xy, d.yy, d.yz}, {d.xz, d.yz, d.zz}};
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
                a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                const int r = 3 - p - q;
                const double arp = a[r][p], arq = a[r][q];
                a[r][p] = c * arp - s * arq;
                a[p][r] = a[r][p];
                a[r][q] = s * arp + c * arq;
                a[q][r] = a[r][q];
            }
        }
    }
    std::array<double, 3> eig = {a[0][0], a[1][1], a[2][2]};
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

inline void mat_mul3(const double* a, const double* b, double* out) {
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            out[3 * r + c] = a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] +
                             a[3 * r + 2] * b[6 + c];
}

// inverse-transpose via the adjugate; det must be checked by the caller
inline void inv_transpose3(const double* m, double det, double* out) {
    const double inv = 1.0 / det;
    out[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
    out[1] = (m[5] * m[6] - m[3] * m[8]) * inv;
    out[2] = (m[3] * m[7] - m[4] * m[6]) * inv;
    out[3] = (m[2] * m[7] - m[1] * m[8]) * inv;
    out[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
    out[5] = (m[1] * m[6] - m[0] * m[7]) * inv;
    out[6] = (m[1] * m[5] - m[2] * m[4]) * inv;
    out[7] = (m[2] * m[3] - m[0] * m[5]) * inv;
    out[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
}

} // namespace

std::array<double, 3> eigenvalues_sym3(const SymTensor& d) {
    const double q = (d.xx + d.yy + d.zz) / 3.0;
    const double p1 = d.xy * d.xy + d.xz * d.xz + d.yz * d.yz;
    const double dx = d.xx - q, dy = d.yy - q, dz = d.zz - q;
    const double p2 = dx * dx + dy * dy + dz * dz + 2.0 * p1;
    if (p2 == 0.0) return {q, q, q}; // already isotropic

    const double p = std::sqrt(p2 / 6.0);
    // B = (D - q I)/p; r = det(B)/2 in [-1,1] up to rounding
    const double b0 = dx / p, b1 = d.xy / p, b2 = d.xz / p;
    const double b3 = dy / p, b4 = d.yz / p, b5 = dz / p;
    const double detb = b0 * (b3 * b5 - b4 * b4) - b1 * (b1 * b5 - b4 * b2) +
                        b2 * (b1 * b4 - b3 * b2);
    double r = detb / 2.0;

    // near-degenerate spectra: hand over to the iterative fallback
    if (std::fabs(r) > 1.0 - 1e-5) return jacobi_eigenvalues(d);
    r = std::clamp(r, -1.0, 1.0);

    const double phi = std::acos(r) / 3.0;
    const double two_pi_3 = 2.0943951023931954923;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + two_pi_3);
    const double e2 = 3.0 * q - e1 - e3;
    return {e1, e2, e3};
}

double fa(const SymTensor& d) {
    const double norm2 = d.xx * d.xx + d.yy * d.yy + d.zz * d.zz +
                         2.0 * (d.xy * d.xy + d.xz * d.xz + d.yz * d.yz);
    if (norm2 == 0.0) return 0.0;
    // ||D - (tr D / 3) I||^2 in pairwise-difference form, which is exactly
    // zero for isotropic tensors instead of cancelling to rounding noise
    const double dab = d.xx - d.yy, dbc = d.yy - d.zz, dca = d.zz - d.xx;
    const double dev2 = (dab * dab + dbc * dbc + dca * dca) / 3.0 +
                        2.0 * (d.xy * d.xy + d.xz * d.xz + d.yz * d.yz);
    if (dev2 <= 0.0) return 0.0;
    return std::min(1.0, std::sqrt(1.5 * dev2 / norm2));
}

ScalarVolume fa_map(const TensorVolume& vol) {
    ScalarVolume out(vol.grid);
    const std::size_t n = vol.grid.voxel_count();
    for (std::size_t idx = 0; idx < n; ++idx)
        out.data[idx] = fa(SymTensor(vol.data.data() + 6 * idx));
    return out;
}

Rotation polar_rotation(const double* jac3x3) {
    const double det = det3(jac3x3);
    if (std::fabs(det) < kSingularDet)
        throw SingularJacobianError("polar_rotation: Jacobian is singular (det = " +
                                    std::to_string(det) + ")");
    if (det < 0.0)
        throw FoldError("polar_rotation: negative Jacobian determinant (det = " +
                        std::to_string(det) + "), deformation folds");

    double x[9], next[9], invt[9];
    std::copy(jac3x3, jac3x3 + 9, x);
    for (int it = 0; it < 50; ++it) {
        const double dx = det3(x);
        if (std::fabs(dx) < 1e-300)
            throw SingularJacobianError("polar_rotation: iteration became singular");
        inv_transpose3(x, dx, invt);
        double diff = 0.0;
        for (int c = 0; c < 9; ++c) {
            next[c] = 0.5 * (x[c] + invt[c]);
            diff = std::max(diff, std::fabs(next[c] - x[c]));
        }
        std::copy(next, next + 9, x);
        if (diff < 1e-12) break;
    }
    Rotation r;
    std::copy(x, x + 9, r.m);
    return r;
}

SymTensor reorient_tensor(const SymTensor& d, const Rotation& r) {
    const double dm[9] = {d.xx, d.xy, d.xz, d.xy, d.yy, d.yz, d.xz, d.yz, d.zz};
    double rd[9], rdrt[9];
    mat_mul3(r.m, dm, rd);
    // (R D) R^T
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            rdrt[3 * i + j] = rd[3 * i] * r.m[3 * j] + rd[3 * i + 1] * r.m[3 * j + 1] +
                              rd[3 * i + 2] * r.m[3 * j + 2];
    return SymTensor(rdrt[0], rdrt[4], rdrt[8], rdrt[1], rdrt[2], rdrt[5]);
}

TensorVolume reorient_field(const TensorVolume& moved, const VectorField& phi,
                            FoldPolicy policy, ReorientStats* stats) {
    expect_kind(phi, FieldKind::Displacement, "reorient_field");
    assert_same_grid(moved.grid, phi.grid);

    const GridSpec& g = moved.grid;
    const JacobianField jac = jacobian(phi);
    TensorVolume out(g);
    ReorientStats local{};

    for (int k = 0; k < g.nz; ++k) {
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double* jm = jac.data.data() + 9 * idx;
                const double det = det3(jm);
                const SymTensor d(moved.data.data() + 6 * idx);

                const bool singular = std::fabs(det) < 1e-8;
                if (singular || det < 0.0) {
                    if (policy == FoldPolicy::Strict) {
                        std::ostringstream os;
                        os << (singular ? "singular Jacobian" : "folded deformation")
                           << " at voxel (" << i << "," << j << "," << k
                           << "), det J = " << det;
                        if (singular) throw SingularJacobianError(os.str());
                        throw FoldError(os.str());
                    }
                    singular ? ++local.singular : ++local.folded;
                    d.store(out.data.data() + 6 * idx); // identity rotation
                    continue;
                }
                const Rotation r = polar_rotation(jm);
                reorient_tensor(d, r).store(out.data.data() + 6 * idx);
            }
        }
    }
    if (stats) *stats = local;
    return out;
}

} // namespace tdreg
