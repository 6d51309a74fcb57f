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

#include "tdreg/volume.hpp"

#include <sstream>

namespace tdreg {

GridSpec::GridSpec(int nx_, int ny_, int nz_, double spacing)
    : nx(nx_), ny(ny_), nz(nz_), spacing_mm(spacing) {
    // finite-difference stencils need at least 2 samples per axis
    if (nx < 2 || ny < 2 || nz < 2) {
        std::ostringstream os;
        os << "grid dimensions must be >= 2 per axis, got (" << nx << "," << ny
           << "," << nz << ")";
        throw std::invalid_argument(os.str());
    }
    if (!(spacing_mm > 0.0)) {
        throw std::invalid_argument("voxel spacing must be positive, got " +
                                    std::to_string(spacing_mm));
    }
}

std::string GridSpec::describe() const {
    std::ostringstream os;
    os << "(" << nx << "," << ny << "," << nz << ")@" << spacing_mm << "mm";
    return os.str();
}

void assert_same_grid(const GridSpec& a, const GridSpec& b) {
    if (a == b) return;
    throw GridMismatchError("grid mismatch: " + a.describe() + " vs " + b.describe());
}

const char* to_string(FieldKind kind) {
    return kind == FieldKind::Velocity ? "velocity" : "displacement";
}

void expect_kind(const VectorField& f, FieldKind expected, const char* op) {
    if (f.kind != expected) {
        throw std::invalid_argument(std::string(op) + " expects a " +
                                    to_string(expected) + " field, got " +
                                    to_string(f.kind));
    }
}

} // namespace tdreg
