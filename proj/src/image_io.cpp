#include "advbench/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "advbench/error.hpp"

namespace advbench {
namespace {

unsigned char to_byte(double v, const Bounds& b) {
    const double unit = std::clamp((v - b.lower) / b.diameter(), 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(unit * 255.0));
}

double from_byte(unsigned char q, const Bounds& b) { return b.lower + static_cast<double>(q) / 255.0 * b.diameter(); }

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

Tensor quantize_8bit(const Tensor& image, Bounds bounds) {
    Tensor out = image;
    for (double& v : out.data()) v = from_byte(to_byte(v, bounds), bounds);
    return out;
}

void write_netpbm(const Tensor& image, const std::filesystem::path& path, Bounds bounds) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
        throw ShapeError("netpbm export needs a (1,h,w) or (3,h,w) image, got " + shape_string(image.shape()));
    }
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::string bytes = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                bytes.push_back(static_cast<char>(to_byte(image[(ch * h + y) * w + x], bounds)));
    write_all(path, bytes);
}

Tensor read_netpbm(const std::filesystem::path& path, Bounds bounds) {
    const std::string bytes = read_all(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P6") throw CorruptFileError("'" + path.string() + "' is not a binary PGM/PPM");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw CorruptFileError("'" + path.string() + "': bad netpbm header");
    }
    if (maxval != 255) throw CorruptFileError("'" + path.string() + "': only 8-bit images are supported");
    ++pos;  // single whitespace before the raster
    const std::size_t c = magic == "P5" ? 1 : 3;
    if (bytes.size() != pos + c * h * w) throw CorruptFileError("'" + path.string() + "': raster size mismatch");
    Tensor out({c, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                out[(ch * h + y) * w + x] =
                    from_byte(static_cast<unsigned char>(bytes[pos + (y * w + x) * c + ch]), bounds);
    return out;
}

void write_raw_f64(const Tensor& tensor, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(tensor.size() * 8);
    for (double v : tensor.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>(bits >> (8 * i)));
    }
    write_all(path, bytes);
    const nlohmann::json sidecar{{"shape", tensor.shape()}, {"dtype", "float64"}, {"byte_order", "little"}};
    write_all(path.string() + ".json", sidecar.dump(2) + "\n");
}

Tensor read_raw_f64(const std::filesystem::path& path) {
    Shape shape;
    try {
        const auto sidecar = nlohmann::json::parse(read_all(path.string() + ".json"));
        if (sidecar.at("dtype") != "float64" || sidecar.at("byte_order") != "little") {
            throw CorruptFileError("'" + path.string() + ".json': unsupported dtype or byte order");
        }
        shape = sidecar.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError("'" + path.string() + ".json': " + e.what());
    }
    const std::string bytes = read_all(path);
    if (bytes.size() != shape_size(shape) * 8) throw CorruptFileError("'" + path.string() + "': payload size mismatch");
    std::vector<double> values(shape_size(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= std::uint64_t{static_cast<unsigned char>(bytes[i * 8 + static_cast<std::size_t>(b)])} << (8 * b);
        std::memcpy(&values[i], &bits, 8);
    }
    return Tensor(std::move(shape), std::move(values));
}

}  // namespace advbench
