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

#ifndef TDREG_INTERP_HPP
#define TDREG_INTERP_HPP

#include <cmath>

#include "tdreg/volume.hpp"

namespace tdreg {

// Sampling is clamp-to-edge in every direction: coordinates outside
// [0, n-1] read the nearest edge voxel. At integer lattice points the
// stored value is returned exactly.

namespace detail {

struct AxisWeight {
    std::size_t lo; // floor index
    std::size_t hi; // floor index + 1, clamped
    double frac;    // in [0, 1); 0 at and beyond the edges
};

inline AxisWeight axis_weight(double x, int n) {
    AxisWeight w;
    if (x <= 0.0) {
        w.lo = w.hi = 0;
        w.frac = 0.0;
    } else if (x >= static_cast<double>(n - 1)) {
        w.lo = w.hi = static_cast<std::size_t>(n - 1);
        w.frac = 0.0;
    } else {
        const double f = std::floor(x);
        w.lo = static_cast<std::size_t>(f);
        w.hi = w.lo + 1;
        w.frac = x - f;
    }
    return w;
}

// Trilinear sample of `channels` interleaved values per voxel.
// `out[c]` receives channel c. Lerp is written as a + t*(b-a) so that
// sampling a field of equal corner values reproduces the value exactly.
template <int Channels>
inline void sample_channels(const double* data, const GridSpec& g, double x, double y,
                            double z, double* out) {
    const AxisWeight wx = axis_weight(x, g.nx);
    const AxisWeight wy = axis_weight(y, g.ny);
    const AxisWeight wz = axis_weight(z, g.nz);

    const std::size_t sx = static_cast<std::size_t>(Channels);
    const std::size_t sy = sx * static_cast<std::size_t>(g.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(g.ny);

    const double* p000 = data + wx.lo * sx + wy.lo * sy + wz.lo * sz;
    const double* p100 = data + wx.hi * sx + wy.lo * sy + wz.lo * sz;
    const double* p010 = data + wx.lo * sx + wy.hi * sy + wz.lo * sz;
    const double* p110 = data + wx.hi * sx + wy.hi * sy + wz.lo * sz;
    const double* p001 = data + wx.lo * sx + wy.lo * sy + wz.hi * sz;
    const double* p101 = data + wx.hi * sx + wy.lo * sy + wz.hi * sz;
    const double* p011 = data + wx.lo * sx + wy.hi * sy + wz.hi * sz;
    const double* p111 = data + wx.hi * sx + wy.hi * sy + wz.hi * sz;

    const double fx = wx.frac, fy = wy.frac, fz = wz.frac;
    for (int c = 0; c < Channels; ++c) {
        const double c00 = p000[c] + fx * (p100[c] - p000[c]);
        const double c10 = p010[c] + fx * (p110[c] - p010[c]);
        const double c01 = p001[c] + fx * (p101[c] - p001[c]);
        const double c11 = p011[c] + fx * (p111[c] - p011[c]);
        const double c0 = c00 + fy * (c10 - c00);
        const double c1 = c01 + fy * (c11 - c01);
        out[c] = c0 + fz * (c1 - c0);
    }
}

} // namespace detail

/// Trilinear interpolation of the 8 neighbouring voxels at a continuous
/// voxel coordinate. Total function: out-of-bounds coordinates clamp.
inline double sample_trilinear(const ScalarVolume& vol, double x, double y, double z) {
    double out;
    detail::sample_channels<1>(vol.data.data(), vol.grid, x, y, z, &out);
    return out;
}

/// Backward warp: out(x) = vol(x + u(x)), sampled trilinearly.
ScalarVolume warp_scalar(const ScalarVolume& vol, const VectorField& phi);

/// Each of the 6 tensor channels warped independently; no reorientation
/// (that is reorient_field in the tensor module).
TensorVolume warp_tensor_components(const TensorVolume& vol, const VectorField& phi);

/// Nearest-neighbour label propagation: out(x) = vol(round(x + u(x))),
/// rounding clamped to the grid. Labels are never blended.
LabelVolume warp_labels_nearest(const LabelVolume& vol, const VectorField& phi);

/// Per-channel backward warp of a vector field's components.
VectorField warp_vector(const VectorField& field, const VectorField& phi);

} // namespace tdreg

#endif
