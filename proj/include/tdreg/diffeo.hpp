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

#ifndef TDREG_DIFFEO_HPP
#define TDREG_DIFFEO_HPP

#include <vector>

#include "tdreg/volume.hpp"

namespace tdreg {

/// Per-voxel 3x3 Jacobian J = d(phi)/dx, row-major, dimensionless
/// (voxel/voxel). For the identity deformation J = I everywhere.
struct JacobianField {
    GridSpec grid;
    std::vector<double> data; // 9 per voxel

    JacobianField() = default;
    explicit JacobianField(const GridSpec& g) : grid(g), data(g.voxel_count() * 9, 0.0) {}

    const double* mat(int i, int j, int k) const {
        return data.data() + 9 * grid.index(i, j, k);
    }
    double* mat(int i, int j, int k) { return data.data() + 9 * grid.index(i, j, k); }
};

/// Separable 3-tap Gaussian per axis and component. Taps are sampled from
/// exp(-d^2 / 2 sigma_vox^2) at d in {-1,0,1} and normalized to sum 1,
/// with sigma_vox = sigma_mm / spacing_mm. Borders clamp to edge.
VectorField gaussian_smooth(const VectorField& v, double sigma_mm);

/// The normalized (w, 1, w)/(1+2w) taps used by gaussian_smooth.
void gaussian_taps(double sigma_vox, double taps[3]);

/// Squaring-and-scaling exponential of a stationary velocity field:
/// u_0 = v / 2^steps, then u <- u o u  `steps` times. Returns the
/// displacement of phi = exp(v).
VectorField exp_svf(const VectorField& v, int steps = 7);

/// All intermediate fields of exp_svf: result[k] holds u_k for
/// k = 0..steps, with result[steps] the final displacement.
std::vector<VectorField> exp_svf_stages(const VectorField& v, int steps);

/// Displacement of phi_outer o phi_inner:
/// result(x) = u_inner(x) + u_outer(x + u_inner(x)).
VectorField compose(const VectorField& u_outer, const VectorField& u_inner);

/// J(x) = I + grad u(x): central differences in the interior, one-sided on
/// the faces, voxel units.
JacobianField jacobian(const VectorField& u);

ScalarVolume jacobian_determinant(const JacobianField& jac);

inline double det3(const double* m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

} // namespace tdreg

#endif
