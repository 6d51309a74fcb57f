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

#ifndef TDREG_VOLUME_HPP
#define TDREG_VOLUME_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdreg {

// Error taxonomy. The CLI maps these onto its exit codes: data errors
// (I/O, format, grid) -> 3, numerical errors -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class GridMismatchError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Zero-variance image handed to a correlation metric.
class DegenerateInputError : public NumericError {
public:
    using NumericError::NumericError;
};

class SingularJacobianError : public NumericError {
public:
    using NumericError::NumericError;
};

// det J <= 0 somewhere: the deformation folds and is locally non-invertible.
class FoldError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Voxel lattice shared by every volume participating in one registration.
/// All spatial computation runs in voxel units; spacing_mm only converts
/// physical parameters (e.g. a smoothing sigma given in mm) into voxels.
struct GridSpec {
    int nx = 0;
    int ny = 0;
    int nz = 0;
    double spacing_mm = 1.5;

    GridSpec() = default;
    GridSpec(int nx_, int ny_, int nz_, double spacing = 1.5);

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }

    // x-fastest linear order: index = i + nx*(j + ny*k)
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(j) +
                    static_cast<std::size_t>(ny) * static_cast<std::size_t>(k));
    }

    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
    }

    bool operator==(const GridSpec&) const = default;

    std::string describe() const;
};

/// Throws GridMismatchError naming both shapes unless counts and spacing agree.
void assert_same_grid(const GridSpec& a, const GridSpec& b);

/// Single-channel 3-D intensity image (T2w, FA, Jacobian-determinant maps).
/// Treat as immutable once filled; operations take it by const reference.
struct ScalarVolume {
    GridSpec grid;
    std::vector<double> data;

    ScalarVolume() = default;
    explicit ScalarVolume(const GridSpec& g, double fill = 0.0)
        : grid(g), data(g.voxel_count(), fill) {}

    double at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
    double& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
};

// A vector field is either a stationary velocity or a displacement u with
// phi(x) = x + u(x). Operations check which kind they accept; the tag is
// set at construction and never mutated afterwards.
enum class FieldKind { Velocity, Displacement };

const char* to_string(FieldKind kind);

/// 3-channel 3-D field, components interleaved per voxel, voxel units.
struct VectorField {
    GridSpec grid;
    FieldKind kind = FieldKind::Displacement;
    std::vector<double> data;

    VectorField() = default;
    VectorField(const GridSpec& g, FieldKind k, double fill = 0.0)
        : grid(g), kind(k), data(g.voxel_count() * 3, fill) {}

    const double* vec(int i, int j, int k) const {
        return data.data() + 3 * grid.index(i, j, k);
    }
    double* vec(int i, int j, int k) {
        return data.data() + 3 * grid.index(i, j, k);
    }
};

/// Throws unless the field carries the expected semantic tag.
void expect_kind(const VectorField& f, FieldKind expected, const char* op);

/// 6-channel field of symmetric 3x3 diffusion tensors. Component order is
/// fixed: (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz), interleaved per voxel.
struct TensorVolume {
    GridSpec grid;
    std::vector<double> data;

    TensorVolume() = default;
    explicit TensorVolume(const GridSpec& g, double fill = 0.0)
        : grid(g), data(g.voxel_count() * 6, fill) {}

    const double* tensor(int i, int j, int k) const {
        return data.data() + 6 * grid.index(i, j, k);
    }
    double* tensor(int i, int j, int k) {
        return data.data() + 6 * grid.index(i, j, k);
    }
};

/// Integer segmentation image; 0 is background.
struct LabelVolume {
    GridSpec grid;
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    explicit LabelVolume(const GridSpec& g, std::int32_t fill = 0)
        : grid(g), data(g.voxel_count(), fill) {}

    std::int32_t at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
    std::int32_t& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
};

} // namespace tdreg

#endif
