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

#ifndef TDREG_EVAL_HPP
#define TDREG_EVAL_HPP

#include <cstdint>
#include <vector>

#include "tdreg/volume.hpp"

namespace tdreg {

struct DiceReport {
    std::vector<std::int32_t> labels;
    std::vector<double> scores;     // in [0,1], aligned with labels
    std::vector<bool> absent;       // label missing from both volumes
    double mean = 0.0;              // arithmetic mean of scores
};

/// Per-label overlap 2|A & B| / (|A| + |B|). A label absent from both
/// volumes scores 1.0 and is flagged, keeping averages well-defined.
DiceReport dice(const LabelVolume& a, const LabelVolume& b,
                const std::vector<std::int32_t>& labels);

/// Sum of squared differences between the FA maps of two tensor volumes.
double fa_ssd(const TensorVolume& f_dti, const TensorVolume& mw_dti);

/// Deformation-quality statistics over interior voxels (one-voxel margin):
/// Jacobian determinant extrema, fold count, largest displacement norm.
struct DeformationStats {
    double min_det_j = 0.0;
    double mean_det_j = 0.0;
    long fold_count = 0; // det J <= 0
    double max_displacement = 0.0;
};

DeformationStats deformation_stats(const VectorField& phi);

} // namespace tdreg

#endif
