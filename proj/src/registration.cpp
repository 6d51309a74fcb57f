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

#include "tdreg/registration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "tdreg/diffeo.hpp"
#include "tdreg/interp.hpp"
#include "tdreg/parallel.hpp"

namespace tdreg {

ControlGrid::ControlGrid(int mx_, int my_, int mz_)
    : mx(mx_), my(my_), mz(mz_) {
    if (mx < 2 || my < 2 || mz < 2)
        throw std::invalid_argument("control grid needs at least 2 points per axis");
    params.assign(param_count(), 0.0);
}

void RegistrationConfig::validate() const {
    weights.validate();
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(sigma_mm > 0.0)) throw std::invalid_argument("sigma_mm must be positive");
    if (levels.empty()) throw std::invalid_argument("at least one level required");
    for (const int m : levels)
        if (m < 2) throw std::invalid_argument("levels need >= 2 control points per axis");
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    if (!(fd_epsilon > 0.0)) throw std::invalid_argument("fd_epsilon must be positive");
    if (!(initial_step_voxels > 0.0) || !(max_step_voxels > 0.0) ||
        !(step_growth >= 1.0))
        throw std::invalid_argument("invalid step-size schedule");
    if (max_halvings < 0) throw std::invalid_argument("max_halvings must be >= 0");
}

void RegistrationInputs::validate() const {
    if (!fixed_t2w || !moving_t2w)
        throw std::invalid_argument("fixed and moving T2w volumes are required");
    assert_same_grid(fixed_t2w->grid, moving_t2w->grid);
    if ((fixed_dti == nullptr) != (moving_dti == nullptr))
        throw std::invalid_argument("tensor volumes must be given as a pair");
    if (fixed_dti) {
        assert_same_grid(fixed_t2w->grid, fixed_dti->grid);
        assert_same_grid(fixed_t2w->grid, moving_dti->grid);
    }
}

namespace {

// Trilinear read of 3 interleaved values from the control lattice, with one
// optional overridden point. Mirrors detail::sample_channels<3> exactly so
// that patch recomputation is bit-identical to upsample_control wherever the
// override does not participate.
inline void sample_control3(const double* params, int mx, int my, int mz, double tx,
                            double ty, double tz, std::size_t override_point,
                            const double* override_vec, double out[3]) {
    const auto wx = detail::axis_weight(tx, mx);
    const auto wy = detail::axis_weight(ty, my);
    const auto wz = detail::axis_weight(tz, mz);
    const std::size_t smx = static_cast<std::size_t>(mx);
    const std::size_t smy = static_cast<std::size_t>(my);

    auto corner = [&](std::size_t cx, std::size_t cy, std::size_t cz) {
        const std::size_t pt = cx + smx * (cy + smy * cz);
        return pt == override_point ? override_vec : params + 3 * pt;
    };
    const double* p000 = corner(wx.lo, wy.lo, wz.lo);
    const double* p100 = corner(wx.hi, wy.lo, wz.lo);
    const double* p010 = corner(wx.lo, wy.hi, wz.lo);
    const double* p110 = corner(wx.hi, wy.hi, wz.lo);
    const double* p001 = corner(wx.lo, wy.lo, wz.hi);
    const double* p101 = corner(wx.hi, wy.lo, wz.hi);
    const double* p011 = corner(wx.lo, wy.hi, wz.hi);
    const double* p111 = corner(wx.hi, wy.hi, wz.hi);

    const double fx = wx.frac, fy = wy.frac, fz = wz.frac;
    for (int c = 0; c < 3; ++c) {
        const double c00 = p000[c] + fx * (p100[c] - p000[c]);
        const double c10 = p010[c] + fx * (p110[c] - p010[c]);
        const double c01 = p001[c] + fx * (p101[c] - p001[c]);
        const double c11 = p011[c] + fx * (p111[c] - p011[c]);
        const double c0 = c00 + fy * (c10 - c00);
        const double c1 = c01 + fy * (c11 - c01);
        out[c] = c0 + fz * (c1 - c0);
    }
}

constexpr std::size_t kNoOverride = static_cast<std::size_t>(-1);

} // namespace

VectorField upsample_control(const ControlGrid& cg, const GridSpec& grid) {
    if (cg.mx < 2 || cg.my < 2 || cg.mz < 2)
        throw std::invalid_argument("control grid needs at least 2 points per axis");
    if (cg.params.size() != cg.param_count())
        throw std::invalid_argument("control grid parameter count mismatch");

    const double scx = static_cast<double>(cg.mx - 1) / (grid.nx - 1);
    const double scy = static_cast<double>(cg.my - 1) / (grid.ny - 1);
    const double scz = static_cast<double>(cg.mz - 1) / (grid.nz - 1);

    VectorField out(grid, FieldKind::Velocity);
    parallel_for(0, grid.nz, [&](int k) {
        const double tz = k * scz;
        std::size_t idx = grid.index(0, 0, k);
        for (int j = 0; j < grid.ny; ++j) {
            const double ty = j * scy;
            for (int i = 0; i < grid.nx; ++i, ++idx) {
                sample_control3(cg.params.data(), cg.mx, cg.my, cg.mz, i * scx, ty,
                                tz, kNoOverride, nullptr, &out.data[3 * idx]);
            }
        }
    });
    return out;
}

ControlGrid promote_control(const ControlGrid& coarse, int m_fine,
                            const GridSpec& grid) {
    const VectorField dense = upsample_control(coarse, grid);
    ControlGrid fine(m_fine, m_fine, m_fine);
    const double sx = static_cast<double>(grid.nx - 1) / (m_fine - 1);
    const double sy = static_cast<double>(grid.ny - 1) / (m_fine - 1);
    const double sz = static_cast<double>(grid.nz - 1) / (m_fine - 1);
    for (int ck = 0; ck < m_fine; ++ck) {
        for (int cj = 0; cj < m_fine; ++cj) {
            for (int ci = 0; ci < m_fine; ++ci) {
                double v[3];
                detail::sample_channels<3>(dense.data.data(), grid, ci * sx, cj * sy,
                                           ck * sz, v);
                double* p = &fine.params[3 * fine.point_index(ci, cj, ck)];
                p[0] = v[0];
                p[1] = v[1];
                p[2] = v[2];
            }
        }
    }
    return fine;
}

LossReport evaluate(const ControlGrid& cg, const RegistrationInputs& in,
                    const RegistrationConfig& cfg) {
    in.validate();
    cfg.validate();
    const GridSpec& g = in.fixed_t2w->grid;

    VectorField v = upsample_control(cg, g);
    v = gaussian_smooth(v, cfg.sigma_mm);
    const VectorField u = exp_svf(v, cfg.steps);
    const ScalarVolume mw = warp_scalar(*in.moving_t2w, u);
    if (in.has_dti()) {
        const TensorVolume mw_dti = reorient_field(
            warp_tensor_components(*in.moving_dti, u), u, cfg.fold_policy);
        return total_loss(*in.fixed_t2w, mw, in.fixed_dti, &mw_dti, u, cfg.weights);
    }
    return total_loss(*in.fixed_t2w, mw, nullptr, nullptr, u, cfg.weights);
}

std::vector<double> fd_gradient_of(
    const ControlGrid& cg, double epsilon,
    const std::function<double(const ControlGrid&)>& objective) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("fd epsilon must be positive");
    std::vector<double> g(cg.param_count());
    ControlGrid probe = cg;
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double saved = probe.params[p];
        probe.params[p] = saved + epsilon;
        const double e_plus = objective(probe);
        probe.params[p] = saved - epsilon;
        const double e_minus = objective(probe);
        probe.params[p] = saved;
        g[p] = (e_plus - e_minus) / (2.0 * epsilon);
    }
    return g;
}

// ---------------------------------------------------------------------------
// RegistrationEngine
//
// gradient() evaluates the same central differences a naive implementation
// would, but recomputes the pipeline only inside the region a single control
// parameter can influence. The region is tracked conservatively through each
// squaring step: a voxel outside box_k keeps its base value, and its composed
// value can only change if the trilinear stencil of x + u_k(x) touches box_k,
// which bounds the growth per step by 1 + ceil(max |u_k|) per axis.
// ---------------------------------------------------------------------------

namespace {

struct Box {
    int lo[3]{0, 0, 0};
    int hi[3]{-1, -1, -1}; // inclusive

    bool contains(int i, int j, int k) const {
        return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] && k >= lo[2] &&
               k <= hi[2];
    }
    Box dilated_clipped(int dx, int dy, int dz, const GridSpec& g) const {
        Box b;
        b.lo[0] = std::max(0, lo[0] - dx);
        b.lo[1] = std::max(0, lo[1] - dy);
        b.lo[2] = std::max(0, lo[2] - dz);
        b.hi[0] = std::min(g.nx - 1, hi[0] + dx);
        b.hi[1] = std::min(g.ny - 1, hi[1] + dy);
        b.hi[2] = std::min(g.nz - 1, hi[2] + dz);
        return b;
    }
};

// Composite field: perturbed values inside `box`, base values elsewhere.
struct FieldView {
    const double* patch;
    const double* base;
    Box box;

    const double* at(const GridSpec& g, int i, int j, int k) const {
        const std::size_t off = 3 * g.index(i, j, k);
        return (box.contains(i, j, k) ? patch : base) + off;
    }
};

// Mirror of detail::sample_channels<3> over a FieldView.
inline void sample3_view(const FieldView& v, const GridSpec& g, double x, double y,
                         double z, double* out) {
    const auto wx = detail::axis_weight(x, g.nx);
    const auto wy = detail::axis_weight(y, g.ny);
    const auto wz = detail::axis_weight(z, g.nz);
    const std::size_t sx = 3;
    const std::size_t sy = 3 * static_cast<std::size_t>(g.nx);
    const std::size_t sz = sy * static_cast<std::size_t>(g.ny);

    auto src = [&](std::size_t ix, std::size_t iy, std::size_t iz) {
        const bool inside = static_cast<int>(ix) >= v.box.lo[0] &&
                            static_cast<int>(ix) <= v.box.hi[0] &&
                            static_cast<int>(iy) >= v.box.lo[1] &&
                            static_cast<int>(iy) <= v.box.hi[1] &&
                            static_cast<int>(iz) >= v.box.lo[2] &&
                            static_cast<int>(iz) <= v.box.hi[2];
        return (inside ? v.patch : v.base) + ix * sx + iy * sy + iz * sz;
    };
    const double* p000 = src(wx.lo, wy.lo, wz.lo);
    const double* p100 = src(wx.hi, wy.lo, wz.lo);
    const double* p010 = src(wx.lo, wy.hi, wz.lo);
    const double* p110 = src(wx.hi, wy.hi, wz.lo);
    const double* p001 = src(wx.lo, wy.lo, wz.hi);
    const double* p101 = src(wx.hi, wy.lo, wz.hi);
    const double* p011 = src(wx.lo, wy.hi, wz.hi);
    const double* p111 = src(wx.hi, wy.hi, wz.hi);

    const double fx = wx.frac, fy = wy.frac, fz = wz.frac;
    for (int c = 0; c < 3; ++c) {
        const double c00 = p000[c] + fx * (p100[c] - p000[c]);
        const double c10 = p010[c] + fx * (p110[c] - p010[c]);
        const double c01 = p001[c] + fx * (p101[c] - p001[c]);
        const double c11 = p011[c] + fx * (p111[c] - p011[c]);
        const double c0 = c00 + fy * (c10 - c00);
        const double c1 = c01 + fy * (c11 - c01);
        out[c] = c0 + fz * (c1 - c0);
    }
}

// Mirror of the jacobian() stencil at one voxel, reading u from a view.
inline void jacobian_at(const FieldView& u, const GridSpec& g, int i, int j, int k,
                        double m[9]) {
    for (int axis = 0; axis < 3; ++axis) {
        const int a = axis == 0 ? i : axis == 1 ? j : k;
        const int n = axis == 0 ? g.nx : axis == 1 ? g.ny : g.nz;
        int ip = i, jp = j, kp = k, im = i, jm = j, km = k;
        double h = 2.0;
        if (a == 0 || a == n - 1) h = 1.0;
        if (axis == 0) {
            ip = std::min(i + 1, g.nx - 1);
            im = std::max(i - 1, 0);
        } else if (axis == 1) {
            jp = std::min(j + 1, g.ny - 1);
            jm = std::max(j - 1, 0);
        } else {
            kp = std::min(k + 1, g.nz - 1);
            km = std::max(k - 1, 0);
        }
        const double* up = u.at(g, ip, jp, kp);
        const double* um = u.at(g, im, jm, km);
        for (int c = 0; c < 3; ++c) m[3 * c + axis] = (up[c] - um[c]) / h;
    }
    m[0] += 1.0;
    m[4] += 1.0;
    m[8] += 1.0;
}

// Mirror of the bending_energy integrand at one interior voxel (all three
// components summed), reading u from a view.
inline double bending_term_at(const FieldView& u, const GridSpec& g, int i, int j,
                              int k) {
    double total = 0.0;
    const double* c000 = u.at(g, i, j, k);
    const double* cpx = u.at(g, i + 1, j, k);
    const double* cmx = u.at(g, i - 1, j, k);
    const double* cpy = u.at(g, i, j + 1, k);
    const double* cmy = u.at(g, i, j - 1, k);
    const double* cpz = u.at(g, i, j, k + 1);
    const double* cmz = u.at(g, i, j, k - 1);
    const double* cpxpy = u.at(g, i + 1, j + 1, k);
    const double* cpxmy = u.at(g, i + 1, j - 1, k);
    const double* cmxpy = u.at(g, i - 1, j + 1, k);
    const double* cmxmy = u.at(g, i - 1, j - 1, k);
    const double* cpxpz = u.at(g, i + 1, j, k + 1);
    const double* cpxmz = u.at(g, i + 1, j, k - 1);
    const double* cmxpz = u.at(g, i - 1, j, k + 1);
    const double* cmxmz = u.at(g, i - 1, j, k - 1);
    const double* cpypz = u.at(g, i, j + 1, k + 1);
    const double* cpymz = u.at(g, i, j + 1, k - 1);
    const double* cmypz = u.at(g, i, j - 1, k + 1);
    const double* cmymz = u.at(g, i, j - 1, k - 1);

    for (int c = 0; c < 3; ++c) {
        const double center2 = 2.0 * c000[c];
        const double uxx = cpx[c] - center2 + cmx[c];
        const double uyy = cpy[c] - center2 + cmy[c];
        const double uzz = cpz[c] - center2 + cmz[c];
        const double uxy = (cpxpy[c] - cpxmy[c] - cmxpy[c] + cmxmy[c]) * 0.25;
        const double uxz = (cpxpz[c] - cpxmz[c] - cmxpz[c] + cmxmz[c]) * 0.25;
        const double uyz = (cpypz[c] - cpymz[c] - cmypz[c] + cmymz[c]) * 0.25;
        total += uxx * uxx + uyy * uyy + uzz * uzz +
                 2.0 * (uxy * uxy + uxz * uxz + uyz * uyz);
    }
    return total;
}

// Mirror of the eds() integrand.
inline double eds_term(const double* a, const double* b) {
    const double dxx = a[0] - b[0], dyy = a[1] - b[1], dzz = a[2] - b[2];
    const double dxy = a[3] - b[3], dxz = a[4] - b[4], dyz = a[5] - b[5];
    return dxx * dxx + dyy * dyy + dzz * dzz +
           2.0 * (dxy * dxy + dxz * dxz + dyz * dyz);
}

} // namespace

struct RegistrationEngine::Impl {
    RegistrationInputs in;
    RegistrationConfig cfg;
    GridSpec grid;
    double taps[3];
    double u0_scale;
    bool dti_active; // tensors present and the eds weight participates

    // fixed-image statistics, reused by every sums-based NCC evaluation
    std::size_t nvox;
    double sum_f = 0.0, sum_ff = 0.0;

    // base pipeline cache for the current gradient call
    ControlGrid base_cg;
    std::vector<VectorField> stages;
    std::vector<std::array<double, 3>> stage_axis_max;
    ScalarVolume base_warped;
    TensorVolume base_warped_dti;
    TensorVolume base_reor_dti;
    ScalarVolume base_be_map;  // bending term per interior voxel
    ScalarVolume base_eds_map; // eds term per voxel
    double base_sum_m = 0.0, base_sum_mm = 0.0, base_sum_fm = 0.0;
    double base_eds = 0.0, base_be = 0.0;

    struct Scratch {
        std::vector<double> up;  // perturbed upsample, then y-pass output
        std::vector<double> tmp; // x-pass and z-pass output
        std::vector<double> a;   // exp patch ping
        std::vector<double> b;   // exp patch pong
    };
    std::vector<Scratch> scratch;

    Impl(const RegistrationInputs& inputs, const RegistrationConfig& config)
        : in(inputs), cfg(config) {
        in.validate();
        cfg.validate();
        grid = in.fixed_t2w->grid;
        gaussian_taps(cfg.sigma_mm / grid.spacing_mm, taps);
        u0_scale = std::ldexp(1.0, -cfg.steps);
        dti_active = in.has_dti() && cfg.weights.alpha != 0.0;
        nvox = grid.voxel_count();
        for (const double v : in.fixed_t2w->data) {
            sum_f += v;
            sum_ff += v * v;
        }
    }

    double ncc_from_sums(double s_m, double s_mm, double s_fm) const {
        const double n = static_cast<double>(nvox);
        const double cov = s_fm - sum_f * s_m / n;
        const double var_f = sum_ff - sum_f * sum_f / n;
        const double var_m = s_mm - s_m * s_m / n;
        if (var_f <= 0.0 || var_m <= 0.0)
            throw DegenerateInputError("ncc: constant image has no correlation");
        return -cov / std::sqrt(var_f * var_m);
    }

    LossReport evaluate_loss(const ControlGrid& cg) { return evaluate(cg, in, cfg); }

    void compute_base(const ControlGrid& cg) {
        base_cg = cg;
        VectorField v = upsample_control(cg, grid);
        v = gaussian_smooth(v, cfg.sigma_mm);
        stages = exp_svf_stages(v, cfg.steps);
        const VectorField& u = stages.back();

        stage_axis_max.assign(stages.size(), {0.0, 0.0, 0.0});
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const auto& d = stages[s].data;
            for (std::size_t i = 0; i < d.size(); i += 3) {
                stage_axis_max[s][0] = std::max(stage_axis_max[s][0], std::fabs(d[i]));
                stage_axis_max[s][1] =
                    std::max(stage_axis_max[s][1], std::fabs(d[i + 1]));
                stage_axis_max[s][2] =
                    std::max(stage_axis_max[s][2], std::fabs(d[i + 2]));
            }
        }

        base_warped = warp_scalar(*in.moving_t2w, u);
        base_sum_m = base_sum_mm = base_sum_fm = 0.0;
        for (std::size_t i = 0; i < nvox; ++i) {
            const double m = base_warped.data[i];
            base_sum_m += m;
            base_sum_mm += m * m;
            base_sum_fm += in.fixed_t2w->data[i] * m;
        }

        base_be = bending_energy(u);
        base_be_map = ScalarVolume(grid);
        FieldView base_view{u.data.data(), u.data.data(), Box{}};
        for (int k = 1; k < grid.nz - 1; ++k)
            for (int j = 1; j < grid.ny - 1; ++j)
                for (int i = 1; i < grid.nx - 1; ++i)
                    base_be_map.at(i, j, k) = bending_term_at(base_view, grid, i, j, k);

        if (dti_active) {
            base_warped_dti = warp_tensor_components(*in.moving_dti, u);
            base_reor_dti = reorient_field(base_warped_dti, u, cfg.fold_policy);
            base_eds = eds(*in.fixed_dti, base_reor_dti);
            base_eds_map = ScalarVolume(grid);
            for (std::size_t i = 0; i < nvox; ++i)
                base_eds_map.data[i] = eds_term(in.fixed_dti->data.data() + 6 * i,
                                                base_reor_dti.data.data() + 6 * i);
        }
    }

    Box hat_support(int ci, int cj, int ck, const ControlGrid& cg) const {
        const double ix = static_cast<double>(grid.nx - 1) / (cg.mx - 1);
        const double iy = static_cast<double>(grid.ny - 1) / (cg.my - 1);
        const double iz = static_cast<double>(grid.nz - 1) / (cg.mz - 1);
        Box b;
        b.lo[0] = std::max(0, static_cast<int>(std::floor((ci - 1) * ix)));
        b.lo[1] = std::max(0, static_cast<int>(std::floor((cj - 1) * iy)));
        b.lo[2] = std::max(0, static_cast<int>(std::floor((ck - 1) * iz)));
        b.hi[0] = std::min(grid.nx - 1, static_cast<int>(std::ceil((ci + 1) * ix)));
        b.hi[1] = std::min(grid.ny - 1, static_cast<int>(std::ceil((cj + 1) * iy)));
        b.hi[2] = std::min(grid.nz - 1, static_cast<int>(std::ceil((ck + 1) * iz)));
        return b;
    }

    // Loss at base params with one component of one control point replaced.
    double perturbed_loss(const ControlGrid& cg, std::size_t point, int axis,
                          double delta, Scratch& s) {
        const double scx = static_cast<double>(cg.mx - 1) / (grid.nx - 1);
        const double scy = static_cast<double>(cg.my - 1) / (grid.ny - 1);
        const double scz = static_cast<double>(cg.mz - 1) / (grid.nz - 1);

        double override_vec[3] = {cg.params[3 * point], cg.params[3 * point + 1],
                                  cg.params[3 * point + 2]};
        override_vec[axis] += delta;

        const int ci = static_cast<int>(point % cg.mx);
        const int cj = static_cast<int>((point / cg.mx) % cg.my);
        const int ck = static_cast<int>(point / (static_cast<std::size_t>(cg.mx) * cg.my));

        const Box b0 = hat_support(ci, cj, ck, cg);
        const Box r_up = b0.dilated_clipped(2, 2, 2, grid);
        const Box r_x = b0.dilated_clipped(1, 2, 2, grid);
        const Box r_y = b0.dilated_clipped(1, 1, 2, grid);
        const Box b_v = b0.dilated_clipped(1, 1, 1, grid);

        // perturbed upsample on r_up
        for (int k = r_up.lo[2]; k <= r_up.hi[2]; ++k) {
            const double tz = k * scz;
            for (int j = r_up.lo[1]; j <= r_up.hi[1]; ++j) {
                const double ty = j * scy;
                std::size_t idx = 3 * grid.index(r_up.lo[0], j, k);
                for (int i = r_up.lo[0]; i <= r_up.hi[0]; ++i, idx += 3) {
                    sample_control3(cg.params.data(), cg.mx, cg.my, cg.mz, i * scx,
                                    ty, tz, point, override_vec, &s.up[idx]);
                }
            }
        }

        // smoothing passes mirroring gaussian_smooth: x on r_x, y on r_y, z on b_v
        smooth_patch(s.up, s.tmp, r_x, 0);
        smooth_patch(s.tmp, s.up, r_y, 1);
        smooth_patch(s.up, s.tmp, b_v, 2);

        // u_0 patch
        for (int k = b_v.lo[2]; k <= b_v.hi[2]; ++k)
            for (int j = b_v.lo[1]; j <= b_v.hi[1]; ++j) {
                std::size_t idx = 3 * grid.index(b_v.lo[0], j, k);
                for (int i = b_v.lo[0]; i <= b_v.hi[0]; ++i, idx += 3)
                    for (int c = 0; c < 3; ++c) s.a[idx + c] = s.tmp[idx + c] * u0_scale;
            }

        // squaring steps over growing boxes
        double* cur_buf = s.a.data();
        double* next_buf = s.b.data();
        Box cur = b_v;
        for (int step = 0; step < cfg.steps; ++step) {
            const auto& mx3 = stage_axis_max[static_cast<std::size_t>(step)];
            const Box nxt = cur.dilated_clipped(
                1 + static_cast<int>(std::ceil(mx3[0])),
                1 + static_cast<int>(std::ceil(mx3[1])),
                1 + static_cast<int>(std::ceil(mx3[2])), grid);
            const FieldView view{cur_buf, stages[static_cast<std::size_t>(step)].data.data(),
                                 cur};
            for (int k = nxt.lo[2]; k <= nxt.hi[2]; ++k) {
                for (int j = nxt.lo[1]; j <= nxt.hi[1]; ++j) {
                    std::size_t idx = 3 * grid.index(nxt.lo[0], j, k);
                    for (int i = nxt.lo[0]; i <= nxt.hi[0]; ++i, idx += 3) {
                        const double* inner = view.at(grid, i, j, k);
                        double sv[3];
                        sample3_view(view, grid, i + inner[0], j + inner[1],
                                     k + inner[2], sv);
                        next_buf[idx] = inner[0] + sv[0];
                        next_buf[idx + 1] = inner[1] + sv[1];
                        next_buf[idx + 2] = inner[2] + sv[2];
                    }
                }
            }
            std::swap(cur_buf, next_buf);
            cur = nxt;
        }

        const FieldView u_view{cur_buf, stages.back().data.data(), cur};

        // structural term: update the global sums from the changed voxels
        double d_sm = 0.0, d_smm = 0.0, d_sfm = 0.0;
        const double* moving = in.moving_t2w->data.data();
        for (int k = cur.lo[2]; k <= cur.hi[2]; ++k) {
            for (int j = cur.lo[1]; j <= cur.hi[1]; ++j) {
                std::size_t idx = grid.index(cur.lo[0], j, k);
                for (int i = cur.lo[0]; i <= cur.hi[0]; ++i, ++idx) {
                    const double* u = cur_buf + 3 * idx;
                    double mwp;
                    detail::sample_channels<1>(moving, grid, i + u[0], j + u[1],
                                               k + u[2], &mwp);
                    const double mwb = base_warped.data[idx];
                    const double f = in.fixed_t2w->data[idx];
                    d_sm += mwp - mwb;
                    d_smm += mwp * mwp - mwb * mwb;
                    d_sfm += f * mwp - f * mwb;
                }
            }
        }
        const double ncc_val =
            ncc_from_sums(base_sum_m + d_sm, base_sum_mm + d_smm, base_sum_fm + d_sfm);

        // regularizer and tensor terms read u at +/-1, so their stencil is
        // touched one voxel beyond the changed region
        const Box bj = cur.dilated_clipped(1, 1, 1, grid);
        double d_be = 0.0;
        {
            const int lo0 = std::max(bj.lo[0], 1), hi0 = std::min(bj.hi[0], grid.nx - 2);
            const int lo1 = std::max(bj.lo[1], 1), hi1 = std::min(bj.hi[1], grid.ny - 2);
            const int lo2 = std::max(bj.lo[2], 1), hi2 = std::min(bj.hi[2], grid.nz - 2);
            for (int k = lo2; k <= hi2; ++k)
                for (int j = lo1; j <= hi1; ++j)
                    for (int i = lo0; i <= hi0; ++i)
                        d_be += bending_term_at(u_view, grid, i, j, k) -
                                base_be_map.at(i, j, k);
        }

        double d_eds = 0.0;
        if (dti_active) {
            const double* mt = in.moving_dti->data.data();
            for (int k = bj.lo[2]; k <= bj.hi[2]; ++k) {
                for (int j = bj.lo[1]; j <= bj.hi[1]; ++j) {
                    std::size_t idx = grid.index(bj.lo[0], j, k);
                    for (int i = bj.lo[0]; i <= bj.hi[0]; ++i, ++idx) {
                        double jm[9];
                        jacobian_at(u_view, grid, i, j, k, jm);
                        const double det = det3(jm);

                        double warped[6];
                        if (cur.contains(i, j, k)) {
                            const double* u = cur_buf + 3 * idx;
                            detail::sample_channels<6>(mt, grid, i + u[0], j + u[1],
                                                       k + u[2], warped);
                        } else {
                            const double* w = base_warped_dti.data.data() + 6 * idx;
                            std::copy(w, w + 6, warped);
                        }

                        double reor[6];
                        const bool singular = std::fabs(det) < 1e-8;
                        if (singular || det < 0.0) {
                            if (cfg.fold_policy == FoldPolicy::Strict) {
                                std::ostringstream os;
                                os << (singular ? "singular Jacobian"
                                                : "folded deformation")
                                   << " at voxel (" << i << "," << j << "," << k
                                   << ") during gradient probe, det J = " << det;
                                if (singular) throw SingularJacobianError(os.str());
                                throw FoldError(os.str());
                            }
                            std::copy(warped, warped + 6, reor);
                        } else {
                            const Rotation r = polar_rotation(jm);
                            reorient_tensor(SymTensor(warped), r).store(reor);
                        }
                        d_eds += eds_term(in.fixed_dti->data.data() + 6 * idx, reor) -
                                 base_eds_map.data[idx];
                    }
                }
            }
        }

        return cfg.weights.alpha * (base_eds + d_eds) + cfg.weights.beta * ncc_val +
               cfg.weights.lambda * (base_be + d_be);
    }

    void smooth_patch(const std::vector<double>& src, std::vector<double>& dst,
                      const Box& region, int axis) const {
        const std::size_t step = 3 * (axis == 0 ? 1
                                  : axis == 1 ? static_cast<std::size_t>(grid.nx)
                                              : static_cast<std::size_t>(grid.nx) *
                                                    grid.ny);
        const int n_axis = axis == 0 ? grid.nx : axis == 1 ? grid.ny : grid.nz;
        const double t0 = taps[0], t1 = taps[1];
        for (int k = region.lo[2]; k <= region.hi[2]; ++k) {
            for (int j = region.lo[1]; j <= region.hi[1]; ++j) {
                std::size_t idx = 3 * grid.index(region.lo[0], j, k);
                for (int i = region.lo[0]; i <= region.hi[0]; ++i, idx += 3) {
                    const int a = axis == 0 ? i : axis == 1 ? j : k;
                    const std::size_t prev = a > 0 ? idx - step : idx;
                    const std::size_t next = a < n_axis - 1 ? idx + step : idx;
                    for (int c = 0; c < 3; ++c)
                        dst[idx + c] =
                            t1 * src[idx + c] + t0 * (src[prev + c] + src[next + c]);
                }
            }
        }
    }

    std::vector<double> gradient(const ControlGrid& cg) {
        compute_base(cg);

        const int workers = std::max(1, effective_threads());
        if (static_cast<int>(scratch.size()) < workers) scratch.resize(workers);
        for (auto& s : scratch) {
            const std::size_t need = 3 * nvox;
            if (s.up.size() != need) {
                s.up.assign(need, 0.0);
                s.tmp.assign(need, 0.0);
                s.a.assign(need, 0.0);
                s.b.assign(need, 0.0);
            }
        }

        std::vector<double> g(cg.param_count());
        const int nparams = static_cast<int>(cg.param_count());
        parallel_tasks(nparams, workers, [&](int p, int w) {
            const std::size_t point = static_cast<std::size_t>(p) / 3;
            const int axis = p % 3;
            Scratch& s = scratch[static_cast<std::size_t>(w)];
            const double e_plus = perturbed_loss(cg, point, axis, cfg.fd_epsilon, s);
            const double e_minus = perturbed_loss(cg, point, axis, -cfg.fd_epsilon, s);
            g[static_cast<std::size_t>(p)] =
                (e_plus - e_minus) / (2.0 * cfg.fd_epsilon);
        });
        return g;
    }
};

RegistrationEngine::RegistrationEngine(const RegistrationInputs& in,
                                       const RegistrationConfig& cfg)
    : impl_(std::make_unique<Impl>(in, cfg)) {}

RegistrationEngine::~RegistrationEngine() = default;

LossReport RegistrationEngine::evaluate_loss(const ControlGrid& cg) {
    return impl_->evaluate_loss(cg);
}

std::vector<double> RegistrationEngine::gradient(const ControlGrid& cg) {
    return impl_->gradient(cg);
}

std::vector<double> fd_gradient(const ControlGrid& cg, const RegistrationInputs& in,
                                const RegistrationConfig& cfg) {
    RegistrationEngine engine(in, cfg);
    return engine.gradient(cg);
}

RegistrationResult register_volumes(const RegistrationInputs& in,
                                    const RegistrationConfig& cfg) {
    in.validate();
    cfg.validate();
    const GridSpec& grid = in.fixed_t2w->grid;

    RegistrationEngine engine(in, cfg);
    RegistrationResult result;

    ControlGrid cg(cfg.levels[0], cfg.levels[0], cfg.levels[0]);
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        const int m = cfg.levels[li];
        if (li > 0) cg = promote_control(cg, m, grid);

        LossReport current = engine.evaluate_loss(cg);
        result.trace.push_back({static_cast<int>(li), m, 0, 0.0, current});

        double step = cfg.initial_step_voxels;
        int stall = 0;
        for (int iter = 1; iter <= cfg.iterations; ++iter) {
            const std::vector<double> g = engine.gradient(cg);
            double gmax = 0.0;
            for (const double v : g) gmax = std::max(gmax, std::fabs(v));
            if (gmax == 0.0) break;

            // backtracking line search on the max-norm-normalized direction
            bool accepted = false;
            ControlGrid trial = cg;
            LossReport trial_loss;
            for (int h = 0; h <= cfg.max_halvings; ++h) {
                for (std::size_t p = 0; p < g.size(); ++p)
                    trial.params[p] = cg.params[p] - step * (g[p] / gmax);
                trial_loss = engine.evaluate_loss(trial);
                if (trial_loss.total < current.total) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;

            const double decrease = current.total - trial_loss.total;
            cg = std::move(trial);
            current = trial_loss;
            result.trace.push_back({static_cast<int>(li), m, iter, step, current});

            if (decrease <
                cfg.min_rel_decrease * std::max(1.0, std::fabs(current.total))) {
                if (++stall >= 2) break;
            } else {
                stall = 0;
            }
            step = std::min(step * cfg.step_growth, cfg.max_step_voxels);
        }
    }

    VectorField v = upsample_control(cg, grid);
    result.velocity = gaussian_smooth(v, cfg.sigma_mm);
    result.displacement = exp_svf(result.velocity, cfg.steps);
    result.control = std::move(cg);
    return result;
}

} // namespace tdreg
