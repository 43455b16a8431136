#include "svmorph/nrrd.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "svmorph/errors.h"

namespace svmorph {

namespace {

constexpr const char* kMagic = "NRRD0004";

void append_le32(std::string& out, std::uint32_t bits) {
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

std::uint32_t read_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Header {
    std::string type;
    int dimension = 0;
    std::vector<long long> sizes;
    std::vector<double> spacings; // nan allowed on the vector axis
};

void write_file(const std::string& path, const std::string& type,
                const std::vector<long long>& sizes, const std::vector<std::string>& spacings,
                const std::string& payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << kMagic << "\n";
    out << "type: " << type << "\n";
    out << "dimension: " << sizes.size() << "\n";
    out << "sizes:";
    for (long long s : sizes) out << " " << s;
    out << "\n";
    out << "spacings:";
    for (const auto& s : spacings) out << " " << s;
    out << "\n";
    out << "encoding: raw\n";
    out << "\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw DataError("write failed: " + path);
}

Header parse_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMagic) throw DataError(path + ": bad magic line, expected " + std::string(kMagic));

    std::map<std::string, std::string> fields;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break; // header/data separator
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw DataError(path + ": malformed header line \"" + line + "\"");
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        fields[key] = value;
    }

    for (const char* required : {"type", "dimension", "sizes", "spacings", "encoding"})
        if (!fields.count(required))
            throw DataError(path + ": missing header field \"" + required + "\"");

    if (fields["encoding"] != "raw")
        throw DataError(path + ": unsupported encoding \"" + fields["encoding"] +
                        "\" (field \"encoding\")");

    Header h;
    h.type = fields["type"];
    if (h.type != "float32" && h.type != "int32")
        throw DataError(path + ": unsupported type \"" + h.type + "\" (field \"type\")");

    try {
        h.dimension = std::stoi(fields["dimension"]);
    } catch (const std::exception&) {
        throw DataError(path + ": invalid value for field \"dimension\"");
    }
    if (h.dimension != 3 && h.dimension != 4)
        throw DataError(path + ": dimension must be 3 or 4 (field \"dimension\")");

    {
        std::istringstream ss(fields["sizes"]);
        long long v;
        while (ss >> v) h.sizes.push_back(v);
        if (static_cast<int>(h.sizes.size()) != h.dimension)
            throw DataError(path + ": sizes count does not match dimension (field \"sizes\")");
        for (long long s : h.sizes)
            if (s < 1) throw DataError(path + ": non-positive size (field \"sizes\")");
    }
    {
        std::istringstream ss(fields["spacings"]);
        std::string tok;
        while (ss >> tok) {
            if (tok == "nan" || tok == "NaN") {
                h.spacings.push_back(std::nan(""));
            } else {
                try {
                    h.spacings.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw DataError(path + ": invalid value (field \"spacings\")");
                }
            }
        }
        if (h.spacings.size() != h.sizes.size())
            throw DataError(path + ": spacings count does not match dimension (field \"spacings\")");
    }
    return h;
}

std::string read_payload(std::istream& in, const std::string& path, std::size_t expected_bytes) {
    std::string payload(expected_bytes, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(in.gcount()) != expected_bytes)
        throw DataError(path + ": data shorter than sizes imply (field \"sizes\")");
    char extra;
    if (in.read(&extra, 1))
        throw DataError(path + ": trailing data beyond sizes (field \"sizes\")");
    return payload;
}

Spacing spatial_spacing(const Header& h, const std::string& path, int offset) {
    const double sx = h.spacings[offset + 0];
    const double sy = h.spacings[offset + 1];
    const double sz = h.spacings[offset + 2];
    if (!(sx > 0.0) || !(sy > 0.0) || !(sz > 0.0))
        throw DataError(path + ": spatial spacings must be > 0 (field \"spacings\")");
    return Spacing{sx, sy, sz};
}

} // namespace

AnyGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    const Header h = parse_header(in, path);

    if (h.dimension == 3) {
        const Dims dims{static_cast<int>(h.sizes[0]), static_cast<int>(h.sizes[1]),
                        static_cast<int>(h.sizes[2])};
        const Spacing sp = spatial_spacing(h, path, 0);
        const std::size_t n = dims.voxels();
        const std::string payload = read_payload(in, path, n * 4);
        const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
        if (h.type == "float32") {
            Volume v(dims, sp);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t bits = read_le32(p + 4 * i);
                float f;
                std::memcpy(&f, &bits, 4);
                v.data[i] = static_cast<double>(f);
            }
            return v;
        }
        LabelVolume v(dims, sp);
        for (std::size_t i = 0; i < n; ++i)
            v.data[i] = static_cast<std::int32_t>(read_le32(p + 4 * i));
        return v;
    }

    // dimension 4: deformation field, vector axis first
    if (h.type != "float32")
        throw DataError(path + ": dimension-4 grids must be float32 (field \"type\")");
    if (h.sizes[0] != 3)
        throw DataError(path + ": dimension-4 grids need a leading vector axis of size 3 (field \"sizes\")");
    const Dims dims{static_cast<int>(h.sizes[1]), static_cast<int>(h.sizes[2]),
                    static_cast<int>(h.sizes[3])};
    const Spacing sp = spatial_spacing(h, path, 1);
    const std::size_t n = 3 * dims.voxels();
    const std::string payload = read_payload(in, path, n * 4);
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    DeformationField f(dims, sp);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = read_le32(p + 4 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        f.data[i] = static_cast<double>(v);
    }
    return f;
}

Volume load_volume(const std::string& path) {
    AnyGrid g = load_grid(path);
    if (auto* v = std::get_if<Volume>(&g)) return std::move(*v);
    throw DataError(path + ": expected a float32 dimension-3 volume");
}

LabelVolume load_label_volume(const std::string& path) {
    AnyGrid g = load_grid(path);
    if (auto* v = std::get_if<LabelVolume>(&g)) return std::move(*v);
    throw DataError(path + ": expected an int32 dimension-3 label volume");
}

DeformationField load_field(const std::string& path) {
    AnyGrid g = load_grid(path);
    if (auto* v = std::get_if<DeformationField>(&g)) return std::move(*v);
    throw DataError(path + ": expected a float32 dimension-4 deformation field");
}

void save_volume(const Volume& v, const std::string& path) {
    v.validate();
    std::string payload;
    payload.reserve(v.data.size() * 4);
    for (double d : v.data) {
        const float f = static_cast<float>(d);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        append_le32(payload, bits);
    }
    write_file(path, "float32", {v.dims.nx, v.dims.ny, v.dims.nz},
               {format_double(v.spacing.sx), format_double(v.spacing.sy),
                format_double(v.spacing.sz)},
               payload);
}

void save_volume(const LabelVolume& v, const std::string& path) {
    v.validate();
    std::string payload;
    payload.reserve(v.data.size() * 4);
    for (std::int32_t d : v.data) append_le32(payload, static_cast<std::uint32_t>(d));
    write_file(path, "int32", {v.dims.nx, v.dims.ny, v.dims.nz},
               {format_double(v.spacing.sx), format_double(v.spacing.sy),
                format_double(v.spacing.sz)},
               payload);
}

void save_volume(const DeformationField& f, const std::string& path) {
    f.validate();
    std::string payload;
    payload.reserve(f.data.size() * 4);
    for (double d : f.data) {
        const float fl = static_cast<float>(d);
        std::uint32_t bits;
        std::memcpy(&bits, &fl, 4);
        append_le32(payload, bits);
    }
    write_file(path, "float32", {3, f.dims.nx, f.dims.ny, f.dims.nz},
               {"nan", format_double(f.spacing.sx), format_double(f.spacing.sy),
                format_double(f.spacing.sz)},
               payload);
}

} // namespace svmorph
