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

#include "helpers.hpp"

#include "tdreg/diffeo.hpp"

namespace tdreg::testing {

VectorField bounded_smooth_velocity(const GridSpec& g, double max_norm,
                                    std::uint64_t seed) {
    Rng rng(seed);
    VectorField v(g, FieldKind::Velocity);
    const int margin = std::max(4, 3 * std::min({g.nx, g.ny, g.nz}) / 8);
    auto taper = [&](int a, int n) {
        double t = std::min(a, n - 1 - a) / static_cast<double>(margin);
        t = std::clamp(t, 0.0, 1.0);
        return t * t * (3.0 - 2.0 * t);
    };
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double w = taper(i, g.nx) * taper(j, g.ny) * taper(k, g.nz);
                double* p = v.vec(i, j, k);
                for (int c = 0; c < 3; ++c) p[c] = w * rng.uniform(-1.0, 1.0);
            }

    const int passes = 5 * std::min({g.nx, g.ny, g.nz});
    for (int p = 0; p < passes; ++p) v = gaussian_smooth(v, g.spacing_mm);

    double m = 0.0;
    for (std::size_t i = 0; i < v.data.size(); i += 3)
        m = std::max(m, std::sqrt(v.data[i] * v.data[i] +
                                  v.data[i + 1] * v.data[i + 1] +
                                  v.data[i + 2] * v.data[i + 2]));
    if (m > 0.0)
        for (auto& x : v.data) x *= max_norm / m;
    return v;
}

} // namespace tdreg::testing
