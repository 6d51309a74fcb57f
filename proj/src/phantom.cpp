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

#include "tdreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tdreg/diffeo.hpp"
#include "tdreg/eval.hpp"
#include "tdreg/interp.hpp"
#include "tdreg/rng.hpp"
#include "tdreg/tensor.hpp"

namespace tdreg {

namespace {

constexpr double kBackgroundIntensity = 0.2;
constexpr double kIsotropicDiffusivity = 0.8; // arbitrary consistent units
// strongly anisotropic eigenvalue triple used inside tracts and contrast regions
constexpr double kLambdaMajor = 1.8;
constexpr double kLambdaMinor = 0.3;

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

Vec3 normalized(const Vec3& v) {
    const double n = norm(v);
    if (n == 0.0) return {1, 0, 0};
    return {v.x / n, v.y / n, v.z / n};
}

// compact-support bump: (1 - (d/r)^2)^3 inside radius r, exactly 0 outside
double bump(double dist, double radius) {
    if (dist >= radius) return 0.0;
    const double t = 1.0 - (dist / radius) * (dist / radius);
    return t * t * t;
}

// isotropic part plus (major - minor) along the unit direction dir
SymTensor anisotropic_tensor(const Vec3& dir) {
    const double d = kLambdaMajor - kLambdaMinor;
    return SymTensor(kLambdaMinor + d * dir.x * dir.x, kLambdaMinor + d * dir.y * dir.y,
                     kLambdaMinor + d * dir.z * dir.z, d * dir.x * dir.y,
                     d * dir.x * dir.z, d * dir.y * dir.z);
}

struct Blob {
    Vec3 center;
    double radius = 0;
    double amplitude = 0;
    double diffusivity = 0;
};

std::vector<Blob> place_blobs(const GridSpec& g, Rng& rng, int count,
                              const std::vector<Vec3>& keep_out,
                              double keep_out_radius) {
    std::vector<Blob> blobs;
    const double n_min = std::min({g.nx, g.ny, g.nz});
    int attempts = 0;
    while (static_cast<int>(blobs.size()) < count && attempts < 200) {
        ++attempts;
        Blob b;
        b.center = {rng.uniform(0.22, 0.78) * (g.nx - 1),
                    rng.uniform(0.22, 0.78) * (g.ny - 1),
                    rng.uniform(0.22, 0.78) * (g.nz - 1)};
        b.radius = rng.uniform(0.13, 0.22) * n_min;
        b.amplitude = rng.uniform(0.45, 0.95);
        b.diffusivity = rng.uniform(0.9, 1.4);
        bool ok = true;
        for (const Vec3& p : keep_out) {
            const Vec3 d{b.center.x - p.x, b.center.y - p.y, b.center.z - p.z};
            if (norm(d) < b.radius + keep_out_radius) {
                ok = false;
                break;
            }
        }
        if (ok) blobs.push_back(b);
    }
    return blobs;
}

void paint_blobs(PhantomSet& set, const std::vector<Blob>& blobs,
                 std::int32_t first_label) {
    const GridSpec& g = set.t2w.grid;
    for (int k = 0; k < g.nz; ++k) {
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.index(i, j, k);
                double value = kBackgroundIntensity;
                double best = 0.0;
                int best_blob = -1;
                for (std::size_t b = 0; b < blobs.size(); ++b) {
                    const Vec3 d{i - blobs[b].center.x, j - blobs[b].center.y,
                                 k - blobs[b].center.z};
                    const double w = bump(norm(d), blobs[b].radius);
                    value += blobs[b].amplitude * w;
                    if (w > best) {
                        best = w;
                        best_blob = static_cast<int>(b);
                    }
                }
                set.t2w.data[idx] = value;
                double diffusivity = kIsotropicDiffusivity;
                if (best > 0.3 && best_blob >= 0) {
                    set.labels.data[idx] = first_label + best_blob;
                    diffusivity = blobs[static_cast<std::size_t>(best_blob)].diffusivity;
                }
                double* t = set.dti.data.data() + 6 * idx;
                t[0] = t[1] = t[2] = diffusivity;
                t[3] = t[4] = t[5] = 0.0;
            }
        }
    }
}

struct Tract {
    // centerline c(t), t in [0,1], running along y with sinusoidal sway
    double x0 = 0, z0 = 0;
    double amp_x = 0, amp_z = 0;
    double freq = 0, phase = 0;
    double radius = 0;

    Vec3 point(const GridSpec& g, double t) const {
        return {x0 + amp_x * std::sin(6.2831853071795865 * freq * t + phase),
                t * (g.ny - 1),
                z0 + amp_z * std::cos(6.2831853071795865 * freq * t + phase)};
    }
    Vec3 tangent(const GridSpec& g, double t) const {
        const double w = 6.2831853071795865 * freq;
        return normalized({amp_x * w * std::cos(w * t + phase),
                           static_cast<double>(g.ny - 1),
                           -amp_z * w * std::sin(w * t + phase)});
    }
};

void paint_tracts(PhantomSet& set, const std::vector<Tract>& tracts,
                  std::int32_t first_label) {
    const GridSpec& g = set.t2w.grid;
    const int samples = 4 * std::max({g.nx, g.ny, g.nz});
    for (std::size_t tr = 0; tr < tracts.size(); ++tr) {
        const Tract& tract = tracts[tr];
        std::vector<Vec3> pts(samples + 1), tans(samples + 1);
        for (int s = 0; s <= samples; ++s) {
            const double t = static_cast<double>(s) / samples;
            pts[s] = tract.point(g, t);
            tans[s] = tract.tangent(g, t);
        }
        // only voxels within the tube radius of the centerline change
        for (int k = 0; k < g.nz; ++k) {
            for (int j = 0; j < g.ny; ++j) {
                for (int i = 0; i < g.nx; ++i) {
                    double best = tract.radius;
                    int best_s = -1;
                    for (int s = 0; s <= samples; ++s) {
                        const Vec3 d{i - pts[s].x, j - pts[s].y, k - pts[s].z};
                        const double dist = norm(d);
                        if (dist < best) {
                            best = dist;
                            best_s = s;
                        }
                    }
                    if (best_s < 0) continue;
                    const std::size_t idx = g.index(i, j, k);
                    const double profile = bump(best, tract.radius);
                    set.t2w.data[idx] += 0.3 * profile;
                    set.labels.data[idx] = first_label + static_cast<std::int32_t>(tr);
                    anisotropic_tensor(tans[best_s]).store(set.dti.data.data() + 6 * idx);
                }
            }
        }
    }
}

void add_noise(ScalarVolume& vol, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (double& v : vol.data) v += sigma * rng.normal();
}

PhantomSet make_blobs(const PhantomSpec& spec, Rng& rng) {
    PhantomSet set{ScalarVolume(spec.grid, kBackgroundIntensity),
                   TensorVolume(spec.grid), LabelVolume(spec.grid)};
    const auto blobs = place_blobs(spec.grid, rng, 5, {}, 0.0);
    paint_blobs(set, blobs, 1);
    return set;
}

PhantomSet make_tracts(const PhantomSpec& spec, Rng& rng) {
    PhantomSet set{ScalarVolume(spec.grid, kBackgroundIntensity),
                   TensorVolume(spec.grid), LabelVolume(spec.grid)};
    const auto blobs = place_blobs(spec.grid, rng, 4, {}, 0.0);
    paint_blobs(set, blobs, 1);

    const double n_min = std::min({spec.grid.nx, spec.grid.ny, spec.grid.nz});
    std::vector<Tract> tracts(2);
    for (std::size_t t = 0; t < tracts.size(); ++t) {
        Tract& tract = tracts[t];
        tract.x0 = rng.uniform(0.3, 0.7) * (spec.grid.nx - 1);
        tract.z0 = rng.uniform(0.3, 0.7) * (spec.grid.nz - 1);
        tract.amp_x = rng.uniform(0.08, 0.16) * spec.grid.nx;
        tract.amp_z = rng.uniform(0.08, 0.16) * spec.grid.nz;
        tract.freq = rng.uniform(0.6, 1.1);
        tract.phase = rng.uniform(0.0, 6.28);
        tract.radius = std::max(2.2, 0.07 * n_min);
    }
    paint_tracts(set, tracts, static_cast<std::int32_t>(blobs.size()) + 1);
    return set;
}

PhantomSet make_orientation_contrast(const PhantomSpec& spec, Rng& rng) {
    PhantomSet set{ScalarVolume(spec.grid, kBackgroundIntensity),
                   TensorVolume(spec.grid), LabelVolume(spec.grid)};
    const GridSpec& g = spec.grid;
    const double n_min = std::min({g.nx, g.ny, g.nz});
    const double region_radius = 0.14 * n_min;

    const Vec3 center_p{0.32 * (g.nx - 1), 0.5 * (g.ny - 1), 0.5 * (g.nz - 1)};
    const Vec3 center_q{0.68 * (g.nx - 1), 0.5 * (g.ny - 1), 0.5 * (g.nz - 1)};

    // scalar structure stays clear of the tensor regions: the scalar channel
    // carries no information about them
    const auto blobs =
        place_blobs(g, rng, 4, {center_p, center_q}, region_radius + 2.0);
    paint_blobs(set, blobs, 3);

    const SymTensor along_x = anisotropic_tensor({1, 0, 0});
    const SymTensor along_y = anisotropic_tensor({0, 1, 0});
    for (int k = 0; k < g.nz; ++k) {
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                const Vec3 dp{i - center_p.x, j - center_p.y, k - center_p.z};
                const Vec3 dq{i - center_q.x, j - center_q.y, k - center_q.z};
                const std::size_t idx = g.index(i, j, k);
                if (norm(dp) < region_radius) {
                    along_x.store(set.dti.data.data() + 6 * idx);
                    set.labels.data[idx] = 1;
                } else if (norm(dq) < region_radius) {
                    along_y.store(set.dti.data.data() + 6 * idx);
                    set.labels.data[idx] = 2;
                }
            }
        }
    }
    return set;
}

} // namespace

PhantomSet make_phantom(const PhantomSpec& spec) {
    if (spec.noise < 0.0) throw std::invalid_argument("phantom noise must be >= 0");
    Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    PhantomSet set;
    switch (spec.kind) {
        case PhantomKind::Blobs: set = make_blobs(spec, rng); break;
        case PhantomKind::Tracts: set = make_tracts(spec, rng); break;
        case PhantomKind::OrientationContrast:
            set = make_orientation_contrast(spec, rng);
            break;
    }
    add_noise(set.t2w, spec.noise, rng);
    return set;
}

VectorField make_ground_truth_svf(const GridSpec& grid, double max_disp_voxels,
                                  std::uint64_t seed) {
    if (max_disp_voxels < 0.0)
        throw std::invalid_argument("max displacement must be >= 0");
    VectorField v(grid, FieldKind::Velocity);
    if (max_disp_voxels == 0.0) return v;

    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x853c49e6748fea9bULL);
    const int margin = std::max(4, std::min({grid.nx, grid.ny, grid.nz}) / 6);
    auto taper = [&](int a, int n) {
        const double t = std::min(a, n - 1 - a) / static_cast<double>(margin);
        const double s = std::clamp(t, 0.0, 1.0);
        return s * s * (3.0 - 2.0 * s);
    };

    for (int k = 0; k < grid.nz; ++k) {
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                const double w =
                    taper(i, grid.nx) * taper(j, grid.ny) * taper(k, grid.nz);
                double* p = v.vec(i, j, k);
                p[0] = w * rng.normal();
                p[1] = w * rng.normal();
                p[2] = w * rng.normal();
            }
        }
    }

    const int passes = std::min({grid.nx, grid.ny, grid.nz});
    for (int p = 0; p < passes; ++p) v = gaussian_smooth(v, grid.spacing_mm);

    // rescale until the exponential's largest displacement hits the bound
    for (int attempt = 0; attempt < 8; ++attempt) {
        const VectorField u = exp_svf(v, 7);
        double max_disp = 0.0;
        for (std::size_t i = 0; i < u.data.size(); i += 3) {
            const double d = std::sqrt(u.data[i] * u.data[i] +
                                       u.data[i + 1] * u.data[i + 1] +
                                       u.data[i + 2] * u.data[i + 2]);
            max_disp = std::max(max_disp, d);
        }
        if (max_disp == 0.0) throw NumericError("ground-truth field vanished");
        if (std::fabs(max_disp - max_disp_voxels) <= 0.05 * max_disp_voxels) break;
        const double scale = max_disp_voxels / max_disp;
        for (double& x : v.data) x *= scale;
    }
    return v;
}

RegistrationPair make_registration_pair(const PhantomSet& phantom,
                                        const VectorField& v_true,
                                        double scalar_noise,
                                        std::uint64_t noise_seed) {
    expect_kind(v_true, FieldKind::Velocity, "make_registration_pair");
    assert_same_grid(phantom.t2w.grid, v_true.grid);

    VectorField v_neg(v_true.grid, FieldKind::Velocity);
    for (std::size_t i = 0; i < v_true.data.size(); ++i) v_neg.data[i] = -v_true.data[i];
    const VectorField phi_inv = exp_svf(v_neg, 7);

    RegistrationPair pair;
    pair.fixed = phantom;
    pair.moving.t2w = warp_scalar(phantom.t2w, phi_inv);
    pair.moving.dti = reorient_field(warp_tensor_components(phantom.dti, phi_inv),
                                     phi_inv, FoldPolicy::Strict);
    pair.moving.labels = warp_labels_nearest(phantom.labels, phi_inv);
    pair.phi_true = exp_svf(v_true, 7);

    if (scalar_noise > 0.0) {
        Rng rng(noise_seed * 0x9e3779b97f4a7c15ULL + 0xda3e39cb94b95bdbULL);
        for (double& v : pair.moving.t2w.data) v += scalar_noise * rng.normal();
    }
    return pair;
}

} // namespace tdreg
