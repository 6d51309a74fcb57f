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

#ifndef TDREG_TENSOR_HPP
#define TDREG_TENSOR_HPP

#include <array>

#include "tdreg/volume.hpp"

namespace tdreg {

/// Symmetric 3x3 tensor, off-diagonals stored once. Component order
/// matches TensorVolume: (xx, yy, zz, xy, xz, yz).
struct SymTensor {
    double xx = 0, yy = 0, zz = 0, xy = 0, xz = 0, yz = 0;

    SymTensor() = default;
    SymTensor(double xx_, double yy_, double zz_, double xy_, double xz_, double yz_)
        : xx(xx_), yy(yy_), zz(zz_), xy(xy_), xz(xz_), yz(yz_) {}
    explicit SymTensor(const double* six)
        : xx(six[0]), yy(six[1]), zz(six[2]), xy(six[3]), xz(six[4]), yz(six[5]) {}

    void store(double* six) const {
        six[0] = xx;
        six[1] = yy;
        six[2] = zz;
        six[3] = xy;
        six[4] = xz;
        six[5] = yz;
    }
};

/// Proper rotation (orthogonal, det +1), row-major.
struct Rotation {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
};

/// Eigenvalues of the symmetric matrix, sorted descending. Closed-form
/// trigonometric solve with an iterative Jacobi fallback near degeneracy.
std::array<double, 3> eigenvalues_sym3(const SymTensor& d);

/// Fractional anisotropy: sqrt(3/2) * ||D - (tr D / 3) I||_F / ||D||_F,
/// clamped to [0, 1]; 0 for the zero tensor.
double fa(const SymTensor& d);

/// Per-voxel fa().
ScalarVolume fa_map(const TensorVolume& vol);

/// Orthogonal polar factor R of J = R P via the Newton iteration
/// R <- (R + R^-T)/2 started from J. P = R^T J is symmetric
/// positive-semidefinite. Throws SingularJacobianError when |det J| < 1e-8
/// and FoldError when det J < 0.
Rotation polar_rotation(const double* jac3x3);

/// R D R^T.
SymTensor reorient_tensor(const SymTensor& d, const Rotation& r);

enum class FoldPolicy { Strict, Lenient };

struct ReorientStats {
    long folded = 0;   // det J <= 0, identity substituted (lenient)
    long singular = 0; // |det J| below threshold, identity substituted (lenient)
};

/// Finite-strain reorientation of a component-warped tensor volume: at each
/// voxel the local Jacobian of phi is polar-decomposed and the tensor
/// replaced by R D R^T. `moved` must be the output of
/// warp_tensor_components under the same phi.
///
/// Strict policy throws on det J <= 0 (or near-singular J) with the voxel
/// coordinates; lenient substitutes the identity rotation and counts.
TensorVolume reorient_field(const TensorVolume& moved, const VectorField& phi,
                            FoldPolicy policy = FoldPolicy::Strict,
                            ReorientStats* stats = nullptr);

} // namespace tdreg

#endif
