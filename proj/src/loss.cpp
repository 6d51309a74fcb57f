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

#include "tdreg/loss.hpp"

#include <cmath>

namespace tdreg {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0 || lambda < 0.0)
        throw std::invalid_argument("loss weights must be non-negative");
    if (alpha + beta <= 0.0)
        throw std::invalid_argument("at least one data term must be active "
                                    "(alpha + beta > 0)");
}

namespace {

inline bool masked_out(const LabelVolume* mask, std::size_t idx) {
    return mask && mask->data[idx] == 0;
}

} // namespace

double ncc(const ScalarVolume& f, const ScalarVolume& mw, const LabelVolume* mask) {
    assert_same_grid(f.grid, mw.grid);
    if (mask) assert_same_grid(f.grid, mask->grid);

    const std::size_t n = f.grid.voxel_count();
    double sum_f = 0.0, sum_m = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (masked_out(mask, i)) continue;
        sum_f += f.data[i];
        sum_m += mw.data[i];
        ++count;
    }
    if (count == 0) throw DegenerateInputError("ncc: empty mask");
    const double mean_f = sum_f / static_cast<double>(count);
    const double mean_m = sum_m / static_cast<double>(count);

    double cross = 0.0, var_f = 0.0, var_m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (masked_out(mask, i)) continue;
        const double df = f.data[i] - mean_f;
        const double dm = mw.data[i] - mean_m;
        cross += df * dm;
        var_f += df * df;
        var_m += dm * dm;
    }
    if (var_f == 0.0 || var_m == 0.0)
        throw DegenerateInputError("ncc: constant image has no correlation");
    return -cross / std::sqrt(var_f * var_m);
}

double eds(const TensorVolume& f, const TensorVolume& mw, const LabelVolume* mask) {
    assert_same_grid(f.grid, mw.grid);
    if (mask) assert_same_grid(f.grid, mask->grid);

    const std::size_t n = f.grid.voxel_count();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (masked_out(mask, i)) continue;
        const double* a = f.data.data() + 6 * i;
        const double* b = mw.data.data() + 6 * i;
        const double dxx = a[0] - b[0], dyy = a[1] - b[1], dzz = a[2] - b[2];
        const double dxy = a[3] - b[3], dxz = a[4] - b[4], dyz = a[5] - b[5];
        total += dxx * dxx + dyy * dyy + dzz * dzz +
                 2.0 * (dxy * dxy + dxz * dxz + dyz * dyz);
    }
    return total;
}

double bending_energy(const VectorField& u, const LabelVolume* mask) {
    expect_kind(u, FieldKind::Displacement, "bending_energy");
    const GridSpec& g = u.grid;
    if (g.nx < 3 || g.ny < 3 || g.nz < 3)
        throw Error("bending_energy: grid must be at least 3 voxels per axis");
    if (mask) assert_same_grid(g, mask->grid);

    const std::size_t sx = 3;
    const std::size_t sy = 3 * static_cast<std::size_t>(g.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(g.ny);
    const double* d = u.data.data();

    double total = 0.0;
    for (int k = 1; k < g.nz - 1; ++k) {
        for (int j = 1; j < g.ny - 1; ++j) {
            std::size_t idx = 3 * g.index(1, j, k);
            for (int i = 1; i < g.nx - 1; ++i, idx += 3) {
                if (masked_out(mask, idx / 3)) continue;
                for (std::size_t c = 0; c < 3; ++c) {
                    const std::size_t p = idx + c;
                    const double center2 = 2.0 * d[p];
                    const double uxx = d[p + sx] - center2 + d[p - sx];
                    const double uyy = d[p + sy] - center2 + d[p - sy];
                    const double uzz = d[p + sz] - center2 + d[p - sz];
                    const double uxy =
                        (d[p + sx + sy] - d[p + sx - sy] - d[p - sx + sy] +
                         d[p - sx - sy]) * 0.25;
                    const double uxz =
                        (d[p + sx + sz] - d[p + sx - sz] - d[p - sx + sz] +
                         d[p - sx - sz]) * 0.25;
                    const double uyz =
                        (d[p + sy + sz] - d[p + sy - sz] - d[p - sy + sz] +
                         d[p - sy - sz]) * 0.25;
                    total += uxx * uxx + uyy * uyy + uzz * uzz +
                             2.0 * (uxy * uxy + uxz * uxz + uyz * uyz);
                }
            }
        }
    }
    return total;
}

LossReport total_loss(const ScalarVolume& f_t2w, const ScalarVolume& mw_t2w,
                      const TensorVolume* f_dti, const TensorVolume* mw_dti,
                      const VectorField& u, const LossWeights& w,
                      const LabelVolume* mask) {
    w.validate();
    if ((f_dti == nullptr) != (mw_dti == nullptr))
        throw std::invalid_argument("total_loss: tensor volumes must be given in pairs");

    LossReport r;
    r.ncc = ncc(f_t2w, mw_t2w, mask);
    if (f_dti) r.eds = eds(*f_dti, *mw_dti, mask);
    r.be = bending_energy(u, mask);
    r.total = w.alpha * r.eds + w.beta * r.ncc + w.lambda * r.be;
    if (!std::isfinite(r.total))
        throw NumericError("total_loss: non-finite loss value");
    return r;
}

} // namespace tdreg
