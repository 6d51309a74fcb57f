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

#ifndef TDREG_LOSS_HPP
#define TDREG_LOSS_HPP

#include "tdreg/volume.hpp"

namespace tdreg {

/// Weights of the composite loss alpha*EDS + beta*NCC + lambda*BE.
struct LossWeights {
    double alpha = 1.0;  // tensor similarity
    double beta = 1.0;   // structural similarity
    double lambda = 0.001; // bending-energy regularizer

    void validate() const;
};

struct LossReport {
    double eds = 0.0;
    double ncc = 0.0;
    double be = 0.0;
    double total = 0.0; // always alpha*eds + beta*ncc + lambda*be, by construction
};

/// Negated global normalized cross-correlation:
///   -sum (F - mean F)(M - mean M) / sqrt(sum (F - mean F)^2 sum (M - mean M)^2)
/// over all voxels (or the nonzero voxels of `mask`). -1 means perfectly
/// correlated. Throws DegenerateInputError on zero variance.
double ncc(const ScalarVolume& f, const ScalarVolume& mw,
           const LabelVolume* mask = nullptr);

/// Euclidean distance squared between tensor volumes:
///   sum_x Tr((F(x) - Mw(x))^2), off-diagonal components counting twice.
/// Mw is expected to be already warped and reoriented.
double eds(const TensorVolume& f, const TensorVolume& mw,
           const LabelVolume* mask = nullptr);

/// Bending energy of the deformation phi = x + u: sum over interior voxels
/// and displacement components of
///   phi_xx^2 + phi_yy^2 + phi_zz^2 + 2 phi_xy^2 + 2 phi_xz^2 + 2 phi_yz^2
/// with central second differences in voxel units. Second derivatives of x
/// vanish, so the sum is computed on u directly.
double bending_energy(const VectorField& u, const LabelVolume* mask = nullptr);

/// Composite loss. Tensor volumes may be null (the structural-only
/// baseline); the eds term is then reported as 0.
LossReport total_loss(const ScalarVolume& f_t2w, const ScalarVolume& mw_t2w,
                      const TensorVolume* f_dti, const TensorVolume* mw_dti,
                      const VectorField& u, const LossWeights& w,
                      const LabelVolume* mask = nullptr);

} // namespace tdreg

#endif
