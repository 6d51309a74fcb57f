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

// tdreg command-line interface: register, warp, exp, jacobian, fa, phantom,
// metrics. Exit codes: 0 success, 2 invalid usage, 3 data errors (unreadable
// or mismatched inputs), 4 numerical failures (non-finite loss, folds).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tdreg/diffeo.hpp"
#include "tdreg/eval.hpp"
#include "tdreg/interp.hpp"
#include "tdreg/nifti.hpp"
#include "tdreg/parallel.hpp"
#include "tdreg/phantom.hpp"
#include "tdreg/registration.hpp"
#include "tdreg/tensor.hpp"

namespace {

constexpr const char* kVersion = "tdreg 0.1.0";

int g_threads = 0;
bool g_deterministic = false;

// Strips .nii / .nii.gz and appends a suffix plus .nii.gz
std::string derive_path(const std::string& base, const std::string& suffix,
                        const std::string& ext = ".nii.gz") {
    std::string stem = base;
    auto strip = [&](const std::string& e) {
        if (stem.size() > e.size() &&
            stem.compare(stem.size() - e.size(), e.size(), e) == 0)
            stem.resize(stem.size() - e.size());
    };
    strip(".gz");
    strip(".nii");
    return stem + suffix + ext;
}

void write_report(const std::string& text, const std::string& out_path) {
    std::fputs(text.c_str(), stdout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw tdreg::IoError("cannot write report to '" + out_path + "'");
        out << text;
    }
}

struct RegisterArgs {
    std::string fixed_t2w, moving_t2w, fixed_dti, moving_dti;
    std::string out_phi, out_velocity, out_warped_t2w, out_warped_dti;
    std::string trace_path, manifest_path;
    tdreg::RegistrationConfig cfg;
    std::vector<int> levels;
    bool lenient_folds = false;
};

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trace(const std::vector<tdreg::IterationRecord>& trace,
                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw tdreg::IoError("cannot write trace to '" + path + "'");
    for (const auto& r : trace) {
        out << "level=" << r.level_index << " control=" << r.control_points
            << " iter=" << r.iteration << " step=" << format_double(r.step_voxels)
            << " total=" << format_double(r.loss.total)
            << " eds=" << format_double(r.loss.eds)
            << " ncc=" << format_double(r.loss.ncc)
            << " be=" << format_double(r.loss.be) << "\n";
    }
}

void write_manifest(const RegisterArgs& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw tdreg::IoError("cannot write manifest to '" + path + "'");
    out << "version=" << kVersion << "\n";
    out << "fixed_t2w=" << a.fixed_t2w << "\n";
    out << "moving_t2w=" << a.moving_t2w << "\n";
    out << "fixed_dti=" << a.fixed_dti << "\n";
    out << "moving_dti=" << a.moving_dti << "\n";
    out << "alpha=" << format_double(a.cfg.weights.alpha) << "\n";
    out << "beta=" << format_double(a.cfg.weights.beta) << "\n";
    out << "lambda=" << format_double(a.cfg.weights.lambda) << "\n";
    out << "sigma_mm=" << format_double(a.cfg.sigma_mm) << "\n";
    out << "steps=" << a.cfg.steps << "\n";
    out << "levels=";
    for (std::size_t i = 0; i < a.cfg.levels.size(); ++i)
        out << (i ? "," : "") << a.cfg.levels[i];
    out << "\n";
    out << "iterations=" << a.cfg.iterations << "\n";
    out << "initial_step_voxels=" << format_double(a.cfg.initial_step_voxels) << "\n";
    out << "step_growth=" << format_double(a.cfg.step_growth) << "\n";
    out << "max_step_voxels=" << format_double(a.cfg.max_step_voxels) << "\n";
    out << "max_halvings=" << a.cfg.max_halvings << "\n";
    out << "min_rel_decrease=" << format_double(a.cfg.min_rel_decrease) << "\n";
    out << "fd_epsilon=" << format_double(a.cfg.fd_epsilon) << "\n";
    out << "fold_policy="
        << (a.cfg.fold_policy == tdreg::FoldPolicy::Strict ? "strict" : "lenient")
        << "\n";
    out << "seed=" << a.cfg.seed << "\n";
    out << "threads=" << g_threads << "\n";
    out << "deterministic=" << (g_deterministic ? 1 : 0) << "\n";
}

int cmd_register(RegisterArgs& a) {
    if (a.levels.size() > 0) a.cfg.levels = a.levels;
    a.cfg.fold_policy =
        a.lenient_folds ? tdreg::FoldPolicy::Lenient : tdreg::FoldPolicy::Strict;

    const tdreg::ScalarVolume fixed = tdreg::load_scalar(a.fixed_t2w);
    const tdreg::ScalarVolume moving = tdreg::load_scalar(a.moving_t2w);
    tdreg::TensorVolume fixed_dti, moving_dti;
    tdreg::RegistrationInputs in;
    in.fixed_t2w = &fixed;
    in.moving_t2w = &moving;
    if (!a.fixed_dti.empty()) {
        fixed_dti = tdreg::load_tensor(a.fixed_dti);
        moving_dti = tdreg::load_tensor(a.moving_dti);
        in.fixed_dti = &fixed_dti;
        in.moving_dti = &moving_dti;
    }

    const tdreg::RegistrationResult result = tdreg::register_volumes(in, a.cfg);

    if (a.out_velocity.empty()) a.out_velocity = derive_path(a.out_phi, "_velocity");
    if (a.out_warped_t2w.empty())
        a.out_warped_t2w = derive_path(a.out_phi, "_warped_t2w");
    if (a.trace_path.empty()) a.trace_path = derive_path(a.out_phi, "_trace", ".txt");
    if (a.manifest_path.empty())
        a.manifest_path = derive_path(a.out_phi, "_manifest", ".txt");

    tdreg::save_volume(result.displacement, a.out_phi);
    tdreg::save_volume(result.velocity, a.out_velocity);
    tdreg::save_volume(tdreg::warp_scalar(moving, result.displacement),
                       a.out_warped_t2w);
    if (in.has_dti()) {
        if (a.out_warped_dti.empty())
            a.out_warped_dti = derive_path(a.out_phi, "_warped_dti");
        const tdreg::TensorVolume warped = tdreg::reorient_field(
            tdreg::warp_tensor_components(moving_dti, result.displacement),
            result.displacement, a.cfg.fold_policy);
        tdreg::save_volume(warped, a.out_warped_dti);
    }
    write_trace(result.trace, a.trace_path);
    write_manifest(a, a.manifest_path);

    const auto& last = result.trace.back().loss;
    std::printf("final_total=%s\n", format_double(last.total).c_str());
    return 0;
}

struct WarpArgs {
    std::string input, field, output, type;
    bool lenient_folds = false;
};

int cmd_warp(const WarpArgs& a) {
    const tdreg::VectorField phi =
        tdreg::load_vector(a.field, tdreg::FieldKind::Displacement);
    if (a.type == "scalar") {
        tdreg::save_volume(tdreg::warp_scalar(tdreg::load_scalar(a.input), phi),
                           a.output);
    } else if (a.type == "tensor") {
        const tdreg::TensorVolume vol = tdreg::load_tensor(a.input);
        const tdreg::FoldPolicy policy = a.lenient_folds ? tdreg::FoldPolicy::Lenient
                                                         : tdreg::FoldPolicy::Strict;
        tdreg::ReorientStats stats;
        const tdreg::TensorVolume warped = tdreg::reorient_field(
            tdreg::warp_tensor_components(vol, phi), phi, policy, &stats);
        if (stats.folded + stats.singular > 0)
            std::fprintf(stderr,
                         "tdreg: warning: identity rotation substituted at %ld "
                         "folded and %ld near-singular voxels\n",
                         stats.folded, stats.singular);
        tdreg::save_volume(warped, a.output);
    } else if (a.type == "label") {
        tdreg::save_volume(
            tdreg::warp_labels_nearest(tdreg::load_labels(a.input), phi), a.output);
    }
    return 0;
}

int run_app(int argc, char** argv) {
    CLI::App app{"Diffusion-tensor-driven diffeomorphic registration"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.add_option("--threads", g_threads, "Cap worker threads (0 = all cores)");
    app.add_flag("--deterministic", g_deterministic,
                 "Bit-reproducible mode (outputs are bit-reproducible in every "
                 "mode; flag kept for interface stability)");

    // register
    RegisterArgs reg;
    auto* reg_cmd = app.add_subcommand("register",
                                       "Optimize a velocity field aligning a moving "
                                       "volume pair onto a fixed pair");
    reg_cmd->add_option("--fixed-t2w", reg.fixed_t2w, "Fixed T2w volume")->required();
    reg_cmd->add_option("--moving-t2w", reg.moving_t2w, "Moving T2w volume")->required();
    auto* fdti = reg_cmd->add_option("--fixed-dti", reg.fixed_dti, "Fixed tensor volume");
    auto* mdti =
        reg_cmd->add_option("--moving-dti", reg.moving_dti, "Moving tensor volume");
    fdti->needs(mdti);
    mdti->needs(fdti);
    reg_cmd->add_option("--out-phi", reg.out_phi, "Output deformation (displacement)")
        ->required();
    reg_cmd->add_option("--out-velocity", reg.out_velocity,
                        "Output velocity (default <out-phi>_velocity)");
    reg_cmd->add_option("--out-warped-t2w", reg.out_warped_t2w,
                        "Output warped T2w (default <out-phi>_warped_t2w)");
    reg_cmd->add_option("--out-warped-dti", reg.out_warped_dti,
                        "Output warped+reoriented tensors (default <out-phi>_warped_dti)");
    reg_cmd->add_option("--trace", reg.trace_path,
                        "Loss-trace text file (default <out-phi>_trace.txt)");
    reg_cmd->add_option("--manifest", reg.manifest_path,
                        "Run-manifest text file (default <out-phi>_manifest.txt)");
    reg_cmd->add_option("--alpha", reg.cfg.weights.alpha, "Tensor term weight")
        ->capture_default_str();
    reg_cmd->add_option("--beta", reg.cfg.weights.beta, "Structural term weight")
        ->capture_default_str();
    reg_cmd->add_option("--lambda", reg.cfg.weights.lambda, "Bending-energy weight")
        ->capture_default_str();
    reg_cmd->add_option("--sigma-mm", reg.cfg.sigma_mm, "Velocity smoothing sigma, mm")
        ->capture_default_str();
    reg_cmd->add_option("--steps", reg.cfg.steps, "Squaring-and-scaling steps")
        ->capture_default_str();
    reg_cmd->add_option("--levels", reg.levels,
                        "Control points per axis, coarse to fine (default 6,12)")
        ->delimiter(',');
    reg_cmd->add_option("--iterations", reg.cfg.iterations, "Iteration cap per level")
        ->capture_default_str();
    reg_cmd->add_option("--initial-step", reg.cfg.initial_step_voxels,
                        "Initial line-search step, voxels")
        ->capture_default_str();
    reg_cmd->add_option("--fd-epsilon", reg.cfg.fd_epsilon,
                        "Finite-difference perturbation, voxels")
        ->capture_default_str();
    reg_cmd->add_option("--seed", reg.cfg.seed, "Seed recorded in the manifest")
        ->capture_default_str();
    reg_cmd->add_flag("--lenient-folds", reg.lenient_folds,
                      "Substitute identity rotations at folded voxels instead of "
                      "aborting");

    // warp
    WarpArgs warp;
    auto* warp_cmd = app.add_subcommand("warp", "Apply a deformation to a volume");
    warp_cmd->add_option("--in", warp.input, "Input volume")->required();
    warp_cmd->add_option("--field", warp.field, "Displacement field")->required();
    warp_cmd->add_option("--out", warp.output, "Output volume")->required();
    warp_cmd->add_option("--type", warp.type, "Volume kind")
        ->required()
        ->check(CLI::IsMember({"scalar", "tensor", "label"}));
    warp_cmd->add_flag("--lenient-folds", warp.lenient_folds,
                       "Substitute identity rotations at folded voxels");

    // exp
    std::string exp_velocity, exp_out;
    int exp_steps = 7;
    auto* exp_cmd =
        app.add_subcommand("exp", "Exponentiate a stationary velocity field");
    exp_cmd->add_option("--velocity", exp_velocity, "Input velocity field")->required();
    exp_cmd->add_option("--out", exp_out, "Output displacement field")->required();
    exp_cmd->add_option("--steps", exp_steps, "Squaring-and-scaling steps")
        ->capture_default_str();

    // jacobian
    std::string jac_field, jac_out;
    auto* jac_cmd = app.add_subcommand(
        "jacobian", "Jacobian-determinant map of a displacement field");
    jac_cmd->add_option("--field", jac_field, "Displacement field")->required();
    jac_cmd->add_option("--out", jac_out, "Output determinant map")->required();

    // fa
    std::string fa_in, fa_out;
    auto* fa_cmd = app.add_subcommand("fa", "Fractional-anisotropy map of a tensor "
                                            "volume");
    fa_cmd->add_option("--in", fa_in, "Input tensor volume")->required();
    fa_cmd->add_option("--out", fa_out, "Output FA map")->required();

    // phantom
    tdreg::PhantomSpec phantom_spec;
    std::string phantom_kind = "blobs", phantom_prefix;
    int phantom_size = 32;
    double phantom_spacing = 1.5, pair_max_disp = 0.0, pair_noise = 0.0;
    auto* ph_cmd = app.add_subcommand("phantom", "Generate a synthetic volume set");
    ph_cmd->add_option("--kind", phantom_kind, "Phantom family")
        ->check(CLI::IsMember({"blobs", "tracts", "orientation-contrast"}))
        ->capture_default_str();
    ph_cmd->add_option("--size", phantom_size, "Voxels per axis")
        ->capture_default_str();
    ph_cmd->add_option("--spacing", phantom_spacing, "Voxel spacing, mm")
        ->capture_default_str();
    ph_cmd->add_option("--noise", phantom_spec.noise, "Additive scalar noise sigma")
        ->capture_default_str();
    ph_cmd->add_option("--seed", phantom_spec.seed, "Phantom seed")
        ->capture_default_str();
    ph_cmd->add_option("--out-prefix", phantom_prefix, "Output path prefix")
        ->required();
    ph_cmd->add_option("--pair-max-disp", pair_max_disp,
                       "Also emit a moving set and ground truth, deformed by at "
                       "most this many voxels");
    ph_cmd->add_option("--pair-noise", pair_noise,
                       "Additive noise on the moving scalar channel");

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "Similarity and overlap metrics");
    metrics_cmd->require_subcommand(1);
    std::string m_a, m_b, m_out;
    std::vector<std::int32_t> m_labels;

    auto* dice_cmd = metrics_cmd->add_subcommand("dice", "Per-label Dice overlap");
    dice_cmd->add_option("--a", m_a, "First label volume")->required();
    dice_cmd->add_option("--b", m_b, "Second label volume")->required();
    dice_cmd->add_option("--labels", m_labels,
                         "Label ids (default: all nonzero labels present)")
        ->delimiter(',');
    dice_cmd->add_option("--out", m_out, "Also write the report to this file");

    auto* fassd_cmd =
        metrics_cmd->add_subcommand("fa-ssd", "Sum of squared FA differences");
    fassd_cmd->add_option("--fixed", m_a, "Fixed tensor volume")->required();
    fassd_cmd->add_option("--moving", m_b, "Moving/warped tensor volume")->required();
    fassd_cmd->add_option("--out", m_out, "Also write the report to this file");

    auto* ncc_cmd = metrics_cmd->add_subcommand("ncc", "Negated global NCC");
    ncc_cmd->add_option("--fixed", m_a, "Fixed scalar volume")->required();
    ncc_cmd->add_option("--moving", m_b, "Moving/warped scalar volume")->required();
    ncc_cmd->add_option("--out", m_out, "Also write the report to this file");

    auto* eds_cmd = metrics_cmd->add_subcommand("eds", "Euclidean distance squared");
    eds_cmd->add_option("--fixed", m_a, "Fixed tensor volume")->required();
    eds_cmd->add_option("--moving", m_b, "Moving/warped tensor volume")->required();
    eds_cmd->add_option("--out", m_out, "Also write the report to this file");

    auto* def_cmd =
        metrics_cmd->add_subcommand("defstats", "Deformation-quality statistics");
    def_cmd->add_option("--field", m_a, "Displacement field")->required();
    def_cmd->add_option("--out", m_out, "Also write the report to this file");

    // global flags may appear after the subcommand
    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
        for (auto* nested : sub->get_subcommands({})) nested->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    tdreg::set_thread_cap(g_threads);

    if (*reg_cmd) return cmd_register(reg);
    if (*warp_cmd) return cmd_warp(warp);
    if (*exp_cmd) {
        const tdreg::VectorField v =
            tdreg::load_vector(exp_velocity, tdreg::FieldKind::Velocity);
        tdreg::save_volume(tdreg::exp_svf(v, exp_steps), exp_out);
        return 0;
    }
    if (*jac_cmd) {
        const tdreg::VectorField phi =
            tdreg::load_vector(jac_field, tdreg::FieldKind::Displacement);
        tdreg::save_volume(tdreg::jacobian_determinant(tdreg::jacobian(phi)), jac_out);
        return 0;
    }
    if (*fa_cmd) {
        tdreg::save_volume(tdreg::fa_map(tdreg::load_tensor(fa_in)), fa_out);
        return 0;
    }
    if (*ph_cmd) {
        phantom_spec.grid = tdreg::GridSpec(phantom_size, phantom_size, phantom_size,
                                            phantom_spacing);
        if (phantom_kind == "tracts") phantom_spec.kind = tdreg::PhantomKind::Tracts;
        else if (phantom_kind == "orientation-contrast")
            phantom_spec.kind = tdreg::PhantomKind::OrientationContrast;
        else phantom_spec.kind = tdreg::PhantomKind::Blobs;

        const tdreg::PhantomSet set = tdreg::make_phantom(phantom_spec);
        tdreg::save_volume(set.t2w, phantom_prefix + "_t2w.nii.gz");
        tdreg::save_volume(set.dti, phantom_prefix + "_dti.nii.gz");
        tdreg::save_volume(set.labels, phantom_prefix + "_labels.nii.gz");
        if (pair_max_disp > 0.0) {
            const tdreg::VectorField v_true = tdreg::make_ground_truth_svf(
                phantom_spec.grid, pair_max_disp, phantom_spec.seed + 1);
            const tdreg::RegistrationPair pair = tdreg::make_registration_pair(
                set, v_true, pair_noise, phantom_spec.seed + 2);
            tdreg::save_volume(pair.moving.t2w, phantom_prefix + "_moving_t2w.nii.gz");
            tdreg::save_volume(pair.moving.dti, phantom_prefix + "_moving_dti.nii.gz");
            tdreg::save_volume(pair.moving.labels,
                               phantom_prefix + "_moving_labels.nii.gz");
            tdreg::save_volume(pair.phi_true, phantom_prefix + "_phi_true.nii.gz");
            tdreg::save_volume(v_true, phantom_prefix + "_v_true.nii.gz");
        }
        return 0;
    }
    if (*dice_cmd) {
        const tdreg::LabelVolume a = tdreg::load_labels(m_a);
        const tdreg::LabelVolume b = tdreg::load_labels(m_b);
        if (m_labels.empty()) {
            std::vector<std::int32_t> seen;
            for (const auto v : a.data)
                if (v != 0) seen.push_back(v);
            for (const auto v : b.data)
                if (v != 0) seen.push_back(v);
            std::sort(seen.begin(), seen.end());
            seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
            m_labels = seen;
        }
        const tdreg::DiceReport report = tdreg::dice(a, b, m_labels);
        std::ostringstream os;
        for (std::size_t i = 0; i < report.labels.size(); ++i) {
            os << "dice_" << report.labels[i] << "="
               << format_double(report.scores[i]) << "\n";
            if (report.absent[i]) os << "absent_" << report.labels[i] << "=1\n";
        }
        os << "mean_dice=" << format_double(report.mean) << "\n";
        write_report(os.str(), m_out);
        return 0;
    }
    if (*fassd_cmd) {
        const double v = tdreg::fa_ssd(tdreg::load_tensor(m_a), tdreg::load_tensor(m_b));
        write_report("fa_ssd=" + format_double(v) + "\n", m_out);
        return 0;
    }
    if (*ncc_cmd) {
        const double v = tdreg::ncc(tdreg::load_scalar(m_a), tdreg::load_scalar(m_b));
        write_report("ncc=" + format_double(v) + "\n", m_out);
        return 0;
    }
    if (*eds_cmd) {
        const double v = tdreg::eds(tdreg::load_tensor(m_a), tdreg::load_tensor(m_b));
        write_report("eds=" + format_double(v) + "\n", m_out);
        return 0;
    }
    if (*def_cmd) {
        const tdreg::DeformationStats s = tdreg::deformation_stats(
            tdreg::load_vector(m_a, tdreg::FieldKind::Displacement));
        std::ostringstream os;
        os << "min_det_j=" << format_double(s.min_det_j) << "\n"
           << "mean_det_j=" << format_double(s.mean_det_j) << "\n"
           << "fold_count=" << s.fold_count << "\n"
           << "max_displacement=" << format_double(s.max_displacement) << "\n";
        write_report(os.str(), m_out);
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const tdreg::NumericError& e) {
        std::fprintf(stderr, "tdreg: numerical failure: %s\n", e.what());
        return 4;
    } catch (const tdreg::Error& e) {
        std::fprintf(stderr, "tdreg: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "tdreg: invalid arguments: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tdreg: %s\n", e.what());
        return 3;
    }
}
