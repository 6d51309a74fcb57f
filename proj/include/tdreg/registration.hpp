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

#ifndef TDREG_REGISTRATION_HPP
#define TDREG_REGISTRATION_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "tdreg/loss.hpp"
#include "tdreg/tensor.hpp"
#include "tdreg/volume.hpp"

namespace tdreg {

// Direct optimization of a coarse-control-grid stationary velocity field.
// The velocity at the control points is trilinearly upsampled to the dense
// grid, smoothed, exponentiated and used to warp the moving images; the
// composite loss is minimized by gradient descent with central
// finite-difference gradients and a backtracking line search.

/// Velocity parameters on an mx x my x mz lattice of control points placed
/// at equal fractional positions spanning [0, n-1] per axis.
struct ControlGrid {
    int mx = 0, my = 0, mz = 0;
    std::vector<double> params; // 3 per control point, x-fastest

    ControlGrid() = default;
    ControlGrid(int mx_, int my_, int mz_);

    std::size_t point_count() const {
        return static_cast<std::size_t>(mx) * my * mz;
    }
    std::size_t param_count() const { return 3 * point_count(); }
    std::size_t point_index(int ci, int cj, int ck) const {
        return static_cast<std::size_t>(ci) +
               static_cast<std::size_t>(mx) *
                   (static_cast<std::size_t>(cj) +
                    static_cast<std::size_t>(my) * static_cast<std::size_t>(ck));
    }
};

struct RegistrationConfig {
    LossWeights weights{};       // alpha=1, beta=1, lambda=0.001
    int steps = 7;               // squaring-and-scaling steps
    double sigma_mm = 1.2;       // velocity smoothing kernel
    std::vector<int> levels{6, 12}; // control points per axis, coarse to fine
    int iterations = 60;         // cap per level

    // step-size schedule: the line search scales a max-norm-normalized
    // descent direction, halving on failure and growing on success
    double initial_step_voxels = 1.0;
    double step_growth = 1.5;
    double max_step_voxels = 4.0;
    int max_halvings = 8;
    double min_rel_decrease = 1e-7; // stop a level once progress stalls

    double fd_epsilon = 0.1; // central-difference perturbation, voxels
    FoldPolicy fold_policy = FoldPolicy::Strict;
    std::uint64_t seed = 0; // recorded for reproducibility

    void validate() const;
};

struct RegistrationInputs {
    const ScalarVolume* fixed_t2w = nullptr;
    const ScalarVolume* moving_t2w = nullptr;
    const TensorVolume* fixed_dti = nullptr;  // optional, both or neither
    const TensorVolume* moving_dti = nullptr;

    bool has_dti() const { return fixed_dti != nullptr; }
    void validate() const;
};

/// Trilinear interpolation of control-point velocities onto the dense grid.
VectorField upsample_control(const ControlGrid& cg, const GridSpec& grid);

/// Resamples a coarse control grid onto a finer one by evaluating the coarse
/// dense field at the finer control-point positions.
ControlGrid promote_control(const ControlGrid& coarse, int m_fine,
                            const GridSpec& grid);

/// Full pipeline loss: upsample, smooth, exponentiate, warp (and reorient
/// when tensors are present), then the composite loss.
LossReport evaluate(const ControlGrid& cg, const RegistrationInputs& in,
                    const RegistrationConfig& cfg);

/// Central finite differences of the total loss over every parameter:
/// g_i = [E(p_i + eps) - E(p_i - eps)] / (2 eps). Deterministic for fixed
/// inputs.
std::vector<double> fd_gradient(const ControlGrid& cg, const RegistrationInputs& in,
                                const RegistrationConfig& cfg);

/// Plain central differences of an arbitrary objective; the seam the
/// gradient tests use to substitute analytic objectives.
std::vector<double> fd_gradient_of(const ControlGrid& cg, double epsilon,
                                   const std::function<double(const ControlGrid&)>& objective);

struct IterationRecord {
    int level_index = 0;     // position in cfg.levels
    int control_points = 0;  // per axis at this level
    int iteration = 0;       // 0 is the level baseline
    double step_voxels = 0.0;
    LossReport loss;
};

struct RegistrationResult {
    ControlGrid control;      // finest-level parameters
    VectorField velocity;     // dense smoothed velocity, exp input
    VectorField displacement; // u of phi = x + u
    std::vector<IterationRecord> trace;
};

/// Coarse-to-fine descent over cfg.levels. Accepted iterations never
/// increase the total loss; the final total does not exceed the initial.
RegistrationResult register_volumes(const RegistrationInputs& in,
                                    const RegistrationConfig& cfg);

// Shared pipeline state for repeated evaluations over one input pair.
// evaluate_loss matches evaluate(); gradient computes the same central
// differences as naive +/- evaluations, recomputing the pipeline only
// inside each parameter's region of influence.
class RegistrationEngine {
public:
    RegistrationEngine(const RegistrationInputs& in, const RegistrationConfig& cfg);
    ~RegistrationEngine();

    LossReport evaluate_loss(const ControlGrid& cg);
    std::vector<double> gradient(const ControlGrid& cg);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace tdreg

#endif
