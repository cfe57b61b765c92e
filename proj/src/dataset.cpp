#include "advbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

Shape Dataset::example_shape() const {
    const Shape& s = images.shape();
    if (s.empty()) return {};
    return Shape(s.begin() + 1, s.end());
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    const Shape inner = example_shape();
    const std::size_t stride = shape_size(inner);
    Shape shape{indices.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> data;
    data.reserve(indices.size() * stride);
    std::vector<int> out_labels;
    out_labels.reserve(indices.size());
    const auto src = images.data();
    for (auto i : indices) {
        if (i >= size()) throw ValidationError("dataset index out of range");
        data.insert(data.end(), src.begin() + static_cast<std::ptrdiff_t>(i * stride),
                    src.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
        out_labels.push_back(labels[i]);
    }
    return Dataset{Tensor(std::move(shape), std::move(data)), std::move(out_labels)};
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    return Dataset{images.rows(begin, end),
                   std::vector<int>(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                    labels.begin() + static_cast<std::ptrdiff_t>(end))};
}

void Dataset::validate(std::size_t num_classes) const {
    if (images.rank() != 4) {
        throw ShapeError("dataset images must be (n,c,h,w), got " + shape_string(images.shape()));
    }
    if (images.dim(0) != labels.size()) {
        throw ShapeError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ValidationError("dataset label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
    }
}

Dataset generate_blobs(std::uint64_t seed, std::size_t n, std::size_t k, std::size_t image_size) {
    if (k < 1 || k > 10) throw ValidationError("blobs: class count must be in [1, 10]");
    if (image_size < 4) throw ValidationError("blobs: image size must be >= 4");

    const double s = static_cast<double>(image_size);
    const double centre = (s - 1.0) / 2.0;
    const double radius = s / 4.0;
    const double width = s / 8.0;
    std::vector<std::vector<double>> templates(k, std::vector<double>(image_size * image_size));
    for (std::size_t c = 0; c < k; ++c) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
        const double cy = centre + radius * std::sin(angle);
        const double cx = centre + radius * std::cos(angle);
        for (std::size_t y = 0; y < image_size; ++y)
            for (std::size_t x = 0; x < image_size; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                templates[c][y * image_size + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
            }
    }

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
    CounterRng shuffle(seed, "blobs/shuffle");
    const auto order = permutation(n, shuffle);
    std::vector<int> shuffled(n);
    for (std::size_t i = 0; i < n; ++i) shuffled[i] = labels[order[i]];

    CounterRng noise(seed, "blobs/noise");
    const std::size_t pixels = image_size * image_size;
    std::vector<double> data(n * pixels);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = templates[static_cast<std::size_t>(shuffled[i])];
        for (std::size_t p = 0; p < pixels; ++p) {
            data[i * pixels + p] = std::clamp(t[p] + kBlobNoiseSigma * noise.normal(), 0.0, 1.0);
        }
    }
    return Dataset{Tensor({n, 1, image_size, image_size}, std::move(data)), std::move(shuffled)};
}

std::string dataset_digest(const Dataset& data) {
    std::uint64_t h = fnv1a64(shape_string(data.images.shape()));
    for (double v : data.images.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>(bits >> (8 * i));
        h = fnv1a64(std::string_view(bytes, 8), h);
    }
    for (int y : data.labels) h = fnv1a64(std::to_string(y) + ",", h);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset,
                   const std::filesystem::path& path) {
    if (offset + 4 > b.size()) throw CorruptFileError("'" + path.string() + "': truncated IDX header");
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t img_magic = be32(img, 0, images_path);
    if (img_magic != kIdxImagesMagic) {
        throw CorruptFileError("'" + images_path.string() + "': expected IDX image magic 0x00000803");
    }
    const std::size_t n = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    if (img.size() != 16 + n * rows * cols) {
        throw CorruptFileError("'" + images_path.string() + "': payload size does not match header");
    }

    const std::uint32_t lab_magic = be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelsMagic) {
        throw CorruptFileError("'" + labels_path.string() + "': expected IDX label magic 0x00000801");
    }
    const std::size_t nl = be32(lab, 4, labels_path);
    if (lab.size() != 8 + nl) {
        throw CorruptFileError("'" + labels_path.string() + "': payload size does not match header");
    }
    if (nl != n) throw CorruptFileError("IDX image and label counts differ");

    std::vector<double> data(n * rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = lab[8 + i];
    return Dataset{Tensor({n, 1, rows, cols}, std::move(data)), std::move(labels)};
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    const Shape& s = data.images.shape();
    if (s.size() != 4 || s[1] != 1) throw ShapeError("IDX export supports (n,1,h,w) datasets only");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw IoError("cannot write IDX files");
    put_be32(img, kIdxImagesMagic);
    put_be32(img, static_cast<std::uint32_t>(s[0]));
    put_be32(img, static_cast<std::uint32_t>(s[2]));
    put_be32(img, static_cast<std::uint32_t>(s[3]));
    for (double v : data.images.data()) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        img.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    put_be32(lab, kIdxLabelsMagic);
    put_be32(lab, static_cast<std::uint32_t>(data.labels.size()));
    for (int y : data.labels) {
        if (y < 0 || y > 255) throw ValidationError("IDX labels must fit in one byte");
        lab.put(static_cast<char>(static_cast<unsigned char>(y)));
    }
    if (!img || !lab) throw IoError("failed writing IDX files");
}

}  // namespace advbench
