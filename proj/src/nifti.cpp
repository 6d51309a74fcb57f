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

#include "tdreg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <vector>

namespace tdreg {

namespace {

// NIfTI-1 header, 348 bytes. Field offsets follow the standard layout;
// the struct is packed on every platform we care about (verified below).
struct NiftiHeader {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

enum NiftiDatatype : std::int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
    DT_INT8 = 256,
    DT_UINT16 = 512,
    DT_UINT32 = 768,
};

constexpr char kUnitsMm = 2; // NIFTI_UNITS_MM

class GzFile {
public:
    GzFile(const std::string& path, const char* mode) {
        file_ = gzopen(path.c_str(), mode);
        if (!file_) throw IoError("cannot open '" + path + "'");
        path_ = path;
    }
    ~GzFile() {
        if (file_) gzclose(file_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    void read(void* dst, std::size_t bytes) {
        auto* p = static_cast<unsigned char*>(dst);
        while (bytes > 0) {
            const unsigned chunk =
                bytes > (1u << 30) ? (1u << 30) : static_cast<unsigned>(bytes);
            const int got = gzread(file_, p, chunk);
            if (got <= 0) throw IoError("truncated or unreadable file '" + path_ + "'");
            p += got;
            bytes -= static_cast<std::size_t>(got);
        }
    }

    void write(const void* src, std::size_t bytes) {
        auto* p = static_cast<const unsigned char*>(src);
        while (bytes > 0) {
            const unsigned chunk =
                bytes > (1u << 30) ? (1u << 30) : static_cast<unsigned>(bytes);
            const int put = gzwrite(file_, p, chunk);
            if (put <= 0) throw IoError("write failed for '" + path_ + "'");
            p += put;
            bytes -= static_cast<std::size_t>(put);
        }
    }

private:
    gzFile file_ = nullptr;
    std::string path_;
};

bool has_gz_suffix(const std::string& path) {
    return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

template <typename T>
void byteswap(T& value) {
    auto* b = reinterpret_cast<unsigned char*>(&value);
    for (std::size_t i = 0, j = sizeof(T) - 1; i < j; ++i, --j) std::swap(b[i], b[j]);
}

void byteswap_header(NiftiHeader& h) {
    byteswap(h.sizeof_hdr);
    byteswap(h.extents);
    byteswap(h.session_error);
    for (auto& d : h.dim) byteswap(d);
    byteswap(h.intent_p1);
    byteswap(h.intent_p2);
    byteswap(h.intent_p3);
    byteswap(h.intent_code);
    byteswap(h.datatype);
    byteswap(h.bitpix);
    byteswap(h.slice_start);
    for (auto& p : h.pixdim) byteswap(p);
    byteswap(h.vox_offset);
    byteswap(h.scl_slope);
    byteswap(h.scl_inter);
    byteswap(h.slice_end);
    byteswap(h.cal_max);
    byteswap(h.cal_min);
    byteswap(h.slice_duration);
    byteswap(h.toffset);
    byteswap(h.glmax);
    byteswap(h.glmin);
    byteswap(h.qform_code);
    byteswap(h.sform_code);
    byteswap(h.quatern_b);
    byteswap(h.quatern_c);
    byteswap(h.quatern_d);
    byteswap(h.qoffset_x);
    byteswap(h.qoffset_y);
    byteswap(h.qoffset_z);
    for (auto& v : h.srow_x) byteswap(v);
    for (auto& v : h.srow_y) byteswap(v);
    for (auto& v : h.srow_z) byteswap(v);
}

struct RawVolume {
    GridSpec grid;
    int frames = 1;
    // frame-major (planar): frame f, then z, y, x-fastest
    std::vector<double> data;
};

void warn_if_oblique(const NiftiHeader& h, const std::string& path) {
    bool oblique = false;
    if (h.sform_code > 0) {
        // axis-aligned means zero off-diagonals and positive diagonal
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        for (int r = 0; r < 3 && !oblique; ++r) {
            for (int c = 0; c < 3; ++c) {
                const float v = rows[r][c];
                if (r == c ? (v <= 0.0f) : (std::fabs(v) > 1e-5f)) {
                    oblique = true;
                    break;
                }
            }
        }
    } else if (h.qform_code > 0) {
        oblique = std::fabs(h.quatern_b) > 1e-5f || std::fabs(h.quatern_c) > 1e-5f ||
                  std::fabs(h.quatern_d) > 1e-5f;
    }
    if (oblique) {
        std::fprintf(stderr,
                     "tdreg: warning: '%s' has a non-axis-aligned orientation; "
                     "the orientation matrix is ignored\n",
                     path.c_str());
    }
}

template <typename Src>
void convert_to_double(const std::vector<char>& raw, std::size_t count, bool swap,
                       std::vector<double>& out) {
    const auto* src = reinterpret_cast<const Src*>(raw.data());
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        Src v = src[i];
        if (swap) byteswap(v);
        out[i] = static_cast<double>(v);
    }
}

RawVolume read_nifti(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: '" + path + "'");
    GzFile file(path, "rb");

    NiftiHeader h{};
    file.read(&h, sizeof(h));

    bool swap = false;
    if (h.sizeof_hdr != 348) {
        byteswap_header(h);
        if (h.sizeof_hdr != 348)
            throw FormatError("'" + path + "' is not a NIfTI-1 file (bad sizeof_hdr)");
        swap = true;
    }
    if (std::strncmp(h.magic, "n+1", 3) != 0) {
        if (std::strncmp(h.magic, "ni1", 3) == 0)
            throw FormatError("'" + path + "': two-file NIfTI (.hdr/.img) is not supported");
        throw FormatError("'" + path + "' is not a NIfTI-1 file (bad magic)");
    }

    const int ndim = h.dim[0];
    if (ndim < 3 || ndim > 5)
        throw FormatError("'" + path + "': unsupported dimensionality " +
                          std::to_string(ndim));
    const int nx = h.dim[1], ny = h.dim[2], nz = h.dim[3];
    if (nx < 2 || ny < 2 || nz < 2)
        throw FormatError("'" + path + "': need at least 2 voxels per spatial axis");
    int frames = ndim >= 4 ? std::max<int>(1, h.dim[4]) : 1;
    if (ndim == 5) {
        const int n5 = std::max<int>(1, h.dim[5]);
        if (frames == 1) {
            frames = n5; // some writers put per-voxel components in dim 5
        } else if (n5 != 1) {
            throw FormatError("'" + path + "': unsupported 5th dimension");
        }
    }

    const float px = h.pixdim[1], py = h.pixdim[2], pz = h.pixdim[3];
    if (!(px > 0.0f) || !(py > 0.0f) || !(pz > 0.0f))
        throw FormatError("'" + path + "': non-positive pixdim");
    const float pmax = std::max({px, py, pz});
    if (std::fabs(px - py) > 1e-4f * pmax || std::fabs(px - pz) > 1e-4f * pmax)
        throw FormatError("'" + path + "': anisotropic voxels (" + std::to_string(px) +
                          ", " + std::to_string(py) + ", " + std::to_string(pz) +
                          ") are not supported");

    warn_if_oblique(h, path);

    RawVolume rv;
    rv.grid = GridSpec(nx, ny, nz, static_cast<double>(px));
    rv.frames = frames;

    const std::size_t count = rv.grid.voxel_count() * static_cast<std::size_t>(frames);
    int bytes_per_sample = 0;
    switch (h.datatype) {
        case DT_UINT8:
        case DT_INT8: bytes_per_sample = 1; break;
        case DT_INT16:
        case DT_UINT16: bytes_per_sample = 2; break;
        case DT_INT32:
        case DT_UINT32:
        case DT_FLOAT32: bytes_per_sample = 4; break;
        case DT_FLOAT64: bytes_per_sample = 8; break;
        default:
            throw FormatError("'" + path + "': unsupported datatype " +
                              std::to_string(h.datatype));
    }

    // skip whatever sits between header and data (extensions)
    const long offset = static_cast<long>(h.vox_offset);
    if (offset < 348) throw FormatError("'" + path + "': bad vox_offset");
    std::vector<char> skip(static_cast<std::size_t>(offset) - sizeof(NiftiHeader));
    if (!skip.empty()) file.read(skip.data(), skip.size());

    std::vector<char> raw(count * static_cast<std::size_t>(bytes_per_sample));
    file.read(raw.data(), raw.size());

    switch (h.datatype) {
        case DT_UINT8: convert_to_double<std::uint8_t>(raw, count, false, rv.data); break;
        case DT_INT8: convert_to_double<std::int8_t>(raw, count, false, rv.data); break;
        case DT_INT16: convert_to_double<std::int16_t>(raw, count, swap, rv.data); break;
        case DT_UINT16: convert_to_double<std::uint16_t>(raw, count, swap, rv.data); break;
        case DT_INT32: convert_to_double<std::int32_t>(raw, count, swap, rv.data); break;
        case DT_UINT32: convert_to_double<std::uint32_t>(raw, count, swap, rv.data); break;
        case DT_FLOAT32: convert_to_double<float>(raw, count, swap, rv.data); break;
        case DT_FLOAT64: convert_to_double<double>(raw, count, swap, rv.data); break;
        default: break;
    }

    // rescale if the header asks for it
    if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope) && std::isfinite(h.scl_inter) &&
        (h.scl_slope != 1.0f || h.scl_inter != 0.0f)) {
        const double s = h.scl_slope, b = h.scl_inter;
        for (auto& v : rv.data) v = s * v + b;
    }

    return rv;
}

void require_frames(const RawVolume& rv, int expected, const std::string& path,
                    const char* kind) {
    if (rv.frames != expected)
        throw FormatError("'" + path + "': dimension mismatch: expected " +
                          std::to_string(expected) + " frame(s) for a " + kind +
                          " volume, found " + std::to_string(rv.frames));
}

void require_finite(const std::vector<double>& data, const std::string& path) {
    for (const double v : data) {
        if (!std::isfinite(v))
            throw FormatError("'" + path + "': non-finite values in image data");
    }
}

NiftiHeader make_header(const GridSpec& grid, int frames, std::int16_t datatype,
                        std::int16_t bitpix, const char* intent_name) {
    NiftiHeader h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = static_cast<std::int16_t>(frames > 1 ? 4 : 3);
    h.dim[1] = static_cast<std::int16_t>(grid.nx);
    h.dim[2] = static_cast<std::int16_t>(grid.ny);
    h.dim[3] = static_cast<std::int16_t>(grid.nz);
    h.dim[4] = static_cast<std::int16_t>(frames > 1 ? frames : 1);
    for (int d = 5; d < 8; ++d) h.dim[d] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = h.pixdim[2] = h.pixdim[3] = static_cast<float>(grid.spacing_mm);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = kUnitsMm;
    std::snprintf(h.descrip, sizeof(h.descrip), "tdreg");
    h.sform_code = 1;
    h.srow_x[0] = static_cast<float>(grid.spacing_mm);
    h.srow_y[1] = static_cast<float>(grid.spacing_mm);
    h.srow_z[2] = static_cast<float>(grid.spacing_mm);
    std::snprintf(h.intent_name, sizeof(h.intent_name), "%s", intent_name);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_nifti(const std::string& path, const NiftiHeader& h, const void* data,
                 std::size_t bytes) {
    GzFile file(path, has_gz_suffix(path) ? "wb" : "wbT");
    file.write(&h, sizeof(h));
    const char pad[4] = {0, 0, 0, 0};
    file.write(pad, 4); // no extensions
    file.write(data, bytes);
}

// internal interleaved layout -> planar float frames
std::vector<float> planar_float(const std::vector<double>& data, std::size_t voxels,
                                int channels) {
    std::vector<float> out(data.size());
    for (std::size_t v = 0; v < voxels; ++v)
        for (int c = 0; c < channels; ++c)
            out[static_cast<std::size_t>(c) * voxels + v] =
                static_cast<float>(data[v * channels + c]);
    return out;
}

void planar_to_interleaved(const std::vector<double>& planar, std::size_t voxels,
                           int channels, std::vector<double>& out) {
    out.resize(planar.size());
    for (int c = 0; c < channels; ++c)
        for (std::size_t v = 0; v < voxels; ++v)
            out[v * static_cast<std::size_t>(channels) + c] =
                planar[static_cast<std::size_t>(c) * voxels + v];
}

} // namespace

ScalarVolume load_scalar(const std::string& path) {
    RawVolume rv = read_nifti(path);
    require_frames(rv, 1, path, "scalar");
    require_finite(rv.data, path);
    ScalarVolume out;
    out.grid = rv.grid;
    out.data = std::move(rv.data);
    return out;
}

VectorField load_vector(const std::string& path, FieldKind kind) {
    RawVolume rv = read_nifti(path);
    require_frames(rv, 3, path, "vector");
    require_finite(rv.data, path);
    VectorField out(rv.grid, kind);
    planar_to_interleaved(rv.data, rv.grid.voxel_count(), 3, out.data);
    return out;
}

TensorVolume load_tensor(const std::string& path) {
    RawVolume rv = read_nifti(path);
    require_frames(rv, 6, path, "tensor");
    require_finite(rv.data, path);
    TensorVolume out(rv.grid);
    planar_to_interleaved(rv.data, rv.grid.voxel_count(), 6, out.data);
    return out;
}

LabelVolume load_labels(const std::string& path) {
    RawVolume rv = read_nifti(path);
    require_frames(rv, 1, path, "label");
    LabelVolume out(rv.grid);
    for (std::size_t i = 0; i < rv.data.size(); ++i) {
        const double v = rv.data[i];
        if (!std::isfinite(v) || v != std::floor(v))
            throw FormatError("'" + path + "': label volume contains non-integral values");
        if (v < 0.0 || v > 2147483647.0)
            throw FormatError("'" + path + "': label value out of range: " +
                              std::to_string(v));
        out.data[i] = static_cast<std::int32_t>(v);
    }
    return out;
}

void save_volume(const ScalarVolume& vol, const std::string& path) {
    NiftiHeader h = make_header(vol.grid, 1, DT_FLOAT32, 32, "scalar");
    std::vector<float> out(vol.data.begin(), vol.data.end());
    write_nifti(path, h, out.data(), out.size() * sizeof(float));
}

void save_volume(const VectorField& vol, const std::string& path) {
    NiftiHeader h = make_header(vol.grid, 3, DT_FLOAT32, 32, to_string(vol.kind));
    std::vector<float> out = planar_float(vol.data, vol.grid.voxel_count(), 3);
    write_nifti(path, h, out.data(), out.size() * sizeof(float));
}

void save_volume(const TensorVolume& vol, const std::string& path) {
    NiftiHeader h = make_header(vol.grid, 6, DT_FLOAT32, 32, "tensor");
    std::vector<float> out = planar_float(vol.data, vol.grid.voxel_count(), 6);
    write_nifti(path, h, out.data(), out.size() * sizeof(float));
}

void save_volume(const LabelVolume& vol, const std::string& path) {
    NiftiHeader h = make_header(vol.grid, 1, DT_INT16, 16, "labels");
    std::vector<std::int16_t> out(vol.data.size());
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        const std::int32_t v = vol.data[i];
        if (v < std::numeric_limits<std::int16_t>::min() ||
            v > std::numeric_limits<std::int16_t>::max())
            throw FormatError("label value " + std::to_string(v) +
                              " does not fit the int16 file format");
        out[i] = static_cast<std::int16_t>(v);
    }
    write_nifti(path, h, out.data(), out.size() * sizeof(std::int16_t));
}

} // namespace tdreg
