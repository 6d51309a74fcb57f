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

#ifndef TDREG_PHANTOM_HPP
#define TDREG_PHANTOM_HPP

#include <cstdint>

#include "tdreg/volume.hpp"

namespace tdreg {

// Synthetic volumes with controlled structure, used by the test and
// acceptance suites in place of acquired data. Identical spec + seed
// produces bit-identical phantoms.

enum class PhantomKind {
    Blobs,               // smooth multi-region image, isotropic tensors
    Tracts,              // blobs plus curved high-FA tracts along their tangent
    OrientationContrast, // two tensor regions invisible in the scalar channel
};

struct PhantomSpec {
    GridSpec grid;
    PhantomKind kind = PhantomKind::Blobs;
    double noise = 0.0; // additive Gaussian sigma on the scalar channel
    std::uint64_t seed = 0;
};

struct PhantomSet {
    ScalarVolume t2w;
    TensorVolume dti;
    LabelVolume labels;
};

PhantomSet make_phantom(const PhantomSpec& spec);

/// Smooth random stationary velocity field: seeded white noise, tapered to
/// zero at the volume faces, repeatedly smoothed, then rescaled so that the
/// maximum displacement of its exponential matches `max_disp_voxels` within
/// 5%. The resulting deformation is fold-free. max_disp_voxels = 0 returns
/// the zero field.
VectorField make_ground_truth_svf(const GridSpec& grid, double max_disp_voxels,
                                  std::uint64_t seed);

/// Fixed/moving pair with known ground truth. The moving set is the phantom
/// warped by exp(-v_true) using the library's own warp and reorientation
/// operators, so that registering moving onto fixed should recover
/// phi_true = exp(v_true), which is stored for error measurement.
struct RegistrationPair {
    PhantomSet fixed;
    PhantomSet moving;
    VectorField phi_true; // displacement the registration should recover
};

RegistrationPair make_registration_pair(const PhantomSet& phantom,
                                        const VectorField& v_true,
                                        double scalar_noise = 0.0,
                                        std::uint64_t noise_seed = 1);

} // namespace tdreg

#endif
