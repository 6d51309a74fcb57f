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

#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "tdreg/nifti.hpp"
#include "tdreg/volume.hpp"

using namespace tdreg;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("grid invariants") {
    CHECK_THROWS_AS(GridSpec(1, 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec(4, 4, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec(4, 4, 4, -1.5), std::invalid_argument);
    const GridSpec g(96, 96, 64, 1.5);
    CHECK(g.voxel_count() == 96u * 96u * 64u);
}

TEST_CASE("linear index mapping is bijective") {
    const GridSpec g(5, 7, 3);
    std::vector<bool> seen(g.voxel_count(), false);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.index(i, j, k);
                REQUIRE(idx < seen.size());
                CHECK_FALSE(seen[idx]);
                seen[idx] = true;
                // recompose
                CHECK(static_cast<int>(idx % g.nx) == i);
                CHECK(static_cast<int>((idx / g.nx) % g.ny) == j);
                CHECK(static_cast<int>(idx / (g.nx * static_cast<std::size_t>(g.ny))) == k);
            }
}

TEST_CASE("assert_same_grid") {
    CHECK_NOTHROW(assert_same_grid(GridSpec(96, 96, 64, 1.5), GridSpec(96, 96, 64, 1.5)));
    CHECK_THROWS_AS(assert_same_grid(GridSpec(96, 96, 64), GridSpec(96, 96, 63)),
                    GridMismatchError);
    CHECK_THROWS_AS(assert_same_grid(GridSpec(96, 96, 64, 1.5), GridSpec(96, 96, 64, 1.0)),
                    GridMismatchError);
    try {
        assert_same_grid(GridSpec(96, 96, 64), GridSpec(96, 96, 63));
    } catch (const GridMismatchError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(96,96,64)") != std::string::npos);
        CHECK(msg.find("(96,96,63)") != std::string::npos);
    }
}

TEST_CASE("scalar round trip within float32 rounding") {
    Rng rng(11);
    const GridSpec g(7, 6, 5, 1.5);
    const ScalarVolume vol = testing::random_scalar(g, rng, -3.0, 3.0);
    for (const char* name : {"rt_scalar.nii", "rt_scalar.nii.gz"}) {
        const std::string path = temp_path(name);
        save_volume(vol, path);
        const ScalarVolume back = load_scalar(path);
        CHECK(back.grid == g);
        for (std::size_t i = 0; i < vol.data.size(); ++i)
            CHECK(back.data[i] == static_cast<double>(static_cast<float>(vol.data[i])));
        std::remove(path.c_str());
    }
}

TEST_CASE("tensor round trip preserves component order") {
    const GridSpec g(4, 4, 4);
    TensorVolume vol(g);
    // distinct ramp per component so any reordering would be caught
    for (std::size_t v = 0; v < g.voxel_count(); ++v)
        for (int c = 0; c < 6; ++c)
            vol.data[6 * v + c] = static_cast<double>(c) + 0.001 * static_cast<double>(v);
    const std::string path = temp_path("rt_tensor.nii.gz");
    save_volume(vol, path);
    const TensorVolume back = load_tensor(path);
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(vol.data[i])));
    std::remove(path.c_str());
}

TEST_CASE("vector field round trip keeps the requested kind") {
    Rng rng(4);
    const GridSpec g(5, 5, 5);
    const VectorField f = testing::random_field(g, FieldKind::Velocity, rng, 2.0);
    const std::string path = temp_path("rt_vec.nii.gz");
    save_volume(f, path);
    const VectorField back = load_vector(path, FieldKind::Velocity);
    CHECK(back.kind == FieldKind::Velocity);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(f.data[i])));
    std::remove(path.c_str());
}

TEST_CASE("label round trip is lossless including max label 87") {
    const GridSpec g(6, 5, 4);
    LabelVolume vol(g);
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        vol.data[i] = static_cast<std::int32_t>(i % 88);
    vol.data[0] = 87;
    const std::string path = temp_path("rt_labels.nii.gz");
    save_volume(vol, path);
    const LabelVolume back = load_labels(path);
    CHECK(back.data == vol.data);
    std::remove(path.c_str());
}

TEST_CASE("dimension mismatch is rejected") {
    Rng rng(5);
    const GridSpec g(4, 4, 4);
    const VectorField f = testing::random_field(g, FieldKind::Displacement, rng, 1.0);
    const std::string path = temp_path("mismatch.nii.gz");
    save_volume(f, path); // 3 frames
    CHECK_THROWS_AS(load_scalar(path), FormatError);
    CHECK_THROWS_AS(load_tensor(path), FormatError);
    try {
        load_scalar(path);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("missing and malformed files") {
    CHECK_THROWS_AS(load_scalar(temp_path("does_not_exist.nii")), IoError);
    const std::string junk = temp_path("junk.nii");
    {
        std::FILE* f = std::fopen(junk.c_str(), "wb");
        std::fwrite("not a nifti file at all, far too short", 1, 38, f);
        std::fclose(f);
    }
    CHECK_THROWS(load_scalar(junk));
    std::remove(junk.c_str());
}

TEST_CASE("anisotropic voxels are rejected") {
    // write a 3-D file, then patch pixdim to be anisotropic
    const GridSpec g(4, 4, 4, 1.5);
    const ScalarVolume vol(g, 1.0);
    const std::string path = temp_path("aniso.nii");
    save_volume(vol, path);
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        const float bad = 2.0f;
        std::fseek(f, 76 + 2 * 4, SEEK_SET); // pixdim[2]
        std::fwrite(&bad, sizeof(float), 1, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_scalar(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("non-finite data is rejected") {
    const GridSpec g(4, 4, 4);
    ScalarVolume vol(g, 1.0);
    const std::string path = temp_path("nonfinite.nii");
    save_volume(vol, path);
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::fseek(f, 352 + 5 * 4, SEEK_SET);
        std::fwrite(&nan, sizeof(float), 1, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_scalar(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("labels must be integral") {
    const GridSpec g(4, 4, 4);
    ScalarVolume vol(g, 0.0);
    vol.data[3] = 1.25;
    const std::string path = temp_path("fractional_labels.nii");
    save_volume(vol, path);
    CHECK_THROWS_AS(load_labels(path), FormatError);
    vol.data[3] = 3.0; // integral float labels are accepted
    save_volume(vol, path);
    const LabelVolume lab = load_labels(path);
    CHECK(lab.data[3] == 3);
    std::remove(path.c_str());
}

TEST_CASE("field kind is checked by operations that require one") {
    const GridSpec g(4, 4, 4);
    const VectorField vel(g, FieldKind::Velocity);
    CHECK_THROWS_AS(expect_kind(vel, FieldKind::Displacement, "test-op"),
                    std::invalid_argument);
    CHECK_NOTHROW(expect_kind(vel, FieldKind::Velocity, "test-op"));
}
