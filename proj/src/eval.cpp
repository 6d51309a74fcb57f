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

#include "tdreg/eval.hpp"

#include <cmath>
#include <unordered_map>

#include "tdreg/diffeo.hpp"
#include "tdreg/tensor.hpp"

namespace tdreg {

DiceReport dice(const LabelVolume& a, const LabelVolume& b,
                const std::vector<std::int32_t>& labels) {
    assert_same_grid(a.grid, b.grid);

    std::unordered_map<std::int32_t, long> count_a, count_b, inter;
    const std::size_t n = a.grid.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        ++count_a[a.data[i]];
        ++count_b[b.data[i]];
        if (a.data[i] == b.data[i]) ++inter[a.data[i]];
    }

    DiceReport report;
    report.labels = labels;
    double sum = 0.0;
    for (const std::int32_t label : labels) {
        const long na = count_a.count(label) ? count_a.at(label) : 0;
        const long nb = count_b.count(label) ? count_b.at(label) : 0;
        if (na + nb == 0) {
            report.scores.push_back(1.0);
            report.absent.push_back(true);
        } else {
            const long ni = inter.count(label) ? inter.at(label) : 0;
            report.scores.push_back(2.0 * static_cast<double>(ni) /
                                    static_cast<double>(na + nb));
            report.absent.push_back(false);
        }
        sum += report.scores.back();
    }
    report.mean = labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
    return report;
}

double fa_ssd(const TensorVolume& f_dti, const TensorVolume& mw_dti) {
    assert_same_grid(f_dti.grid, mw_dti.grid);
    const std::size_t n = f_dti.grid.voxel_count();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = fa(SymTensor(f_dti.data.data() + 6 * i)) -
                         fa(SymTensor(mw_dti.data.data() + 6 * i));
        total += d * d;
    }
    return total;
}

DeformationStats deformation_stats(const VectorField& phi) {
    expect_kind(phi, FieldKind::Displacement, "deformation_stats");
    const GridSpec& g = phi.grid;
    const JacobianField jac = jacobian(phi);

    DeformationStats s;
    s.min_det_j = std::numeric_limits<double>::infinity();
    double det_sum = 0.0;
    long count = 0;
    for (int k = 1; k < g.nz - 1; ++k) {
        for (int j = 1; j < g.ny - 1; ++j) {
            for (int i = 1; i < g.nx - 1; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double det = det3(jac.data.data() + 9 * idx);
                s.min_det_j = std::min(s.min_det_j, det);
                det_sum += det;
                if (det <= 0.0) ++s.fold_count;
                const double* u = phi.data.data() + 3 * idx;
                const double norm =
                    std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
                s.max_displacement = std::max(s.max_displacement, norm);
                ++count;
            }
        }
    }
    s.mean_det_j = count > 0 ? det_sum / static_cast<double>(count) : 0.0;
    if (count == 0) s.min_det_j = 0.0;
    return s;
}

} // namespace tdreg
