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

#include "tdreg/interp.hpp"

#include <algorithm>

#include "tdreg/parallel.hpp"

namespace tdreg {

namespace {

void check_warp_args(const GridSpec& vol, const VectorField& phi, const char* op) {
    expect_kind(phi, FieldKind::Displacement, op);
    assert_same_grid(vol, phi.grid);
}

} // namespace

ScalarVolume warp_scalar(const ScalarVolume& vol, const VectorField& phi) {
    check_warp_args(vol.grid, phi, "warp_scalar");
    const GridSpec& g = vol.grid;
    ScalarVolume out(g);
    parallel_for(0, g.nz, [&](int k) {
        std::size_t idx = g.index(0, 0, k);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i, ++idx) {
                const double* u = phi.data.data() + 3 * idx;
                detail::sample_channels<1>(vol.data.data(), g, i + u[0], j + u[1],
                                           k + u[2], &out.data[idx]);
            }
        }
    });
    return out;
}

TensorVolume warp_tensor_components(const TensorVolume& vol, const VectorField& phi) {
    check_warp_args(vol.grid, phi, "warp_tensor_components");
    const GridSpec& g = vol.grid;
    TensorVolume out(g);
    parallel_for(0, g.nz, [&](int k) {
        std::size_t idx = g.index(0, 0, k);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i, ++idx) {
                const double* u = phi.data.data() + 3 * idx;
                detail::sample_channels<6>(vol.data.data(), g, i + u[0], j + u[1],
                                           k + u[2], &out.data[6 * idx]);
            }
        }
    });
    return out;
}

LabelVolume warp_labels_nearest(const LabelVolume& vol, const VectorField& phi) {
    check_warp_args(vol.grid, phi, "warp_labels_nearest");
    const GridSpec& g = vol.grid;
    LabelVolume out(g);
    parallel_for(0, g.nz, [&](int k) {
        std::size_t idx = g.index(0, 0, k);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i, ++idx) {
                const double* u = phi.data.data() + 3 * idx;
                const int si = std::clamp(static_cast<int>(std::lround(i + u[0])), 0,
                                          g.nx - 1);
                const int sj = std::clamp(static_cast<int>(std::lround(j + u[1])), 0,
                                          g.ny - 1);
                const int sk = std::clamp(static_cast<int>(std::lround(k + u[2])), 0,
                                          g.nz - 1);
                out.data[idx] = vol.data[g.index(si, sj, sk)];
            }
        }
    });
    return out;
}

VectorField warp_vector(const VectorField& field, const VectorField& phi) {
    check_warp_args(field.grid, phi, "warp_vector");
    const GridSpec& g = field.grid;
    VectorField out(g, field.kind);
    parallel_for(0, g.nz, [&](int k) {
        std::size_t idx = g.index(0, 0, k);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i, ++idx) {
                const double* u = phi.data.data() + 3 * idx;
                detail::sample_channels<3>(field.data.data(), g, i + u[0], j + u[1],
                                           k + u[2], &out.data[3 * idx]);
            }
        }
    });
    return out;
}

} // namespace tdreg
