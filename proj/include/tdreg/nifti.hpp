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

#ifndef TDREG_NIFTI_HPP
#define TDREG_NIFTI_HPP

#include <string>

#include "tdreg/volume.hpp"

namespace tdreg {

// NIfTI-1 reader/writer for .nii and .nii.gz, single-file ("n+1") only.
// See docs/formats.md for the exact header fields written and the layout
// of vector (3-frame) and tensor (6-frame) volumes.
//
// Orientation matrices are read but not applied: inputs are assumed to be
// pre-aligned on a common grid. A warning is emitted to stderr when the
// header orientation is not axis-aligned. Anisotropic voxels are rejected.

ScalarVolume load_scalar(const std::string& path);
VectorField load_vector(const std::string& path, FieldKind kind);
TensorVolume load_tensor(const std::string& path);
LabelVolume load_labels(const std::string& path);

// Scalar/vector/tensor are written as 32-bit float, labels as 16-bit signed
// integer. pixdim carries the grid spacing; the orientation matrix is
// identity with spacing on the diagonal.
void save_volume(const ScalarVolume& vol, const std::string& path);
void save_volume(const VectorField& vol, const std::string& path);
void save_volume(const TensorVolume& vol, const std::string& path);
void save_volume(const LabelVolume& vol, const std::string& path);

} // namespace tdreg

#endif
