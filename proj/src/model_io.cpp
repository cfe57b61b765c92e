#include "advbench/model_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "advbench/error.hpp"

namespace advbench {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "ADVBMODEL\n";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= std::uint64_t{static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)])} << (8 * i);
    return v;
}

}  // namespace

void save_model(const NetworkModel& model, const std::filesystem::path& path,
                const std::optional<TransformSpec>& transform) {
    const ModelInfo& info = model.info();
    const auto layout = parameter_layout(model.architecture(), info.input_shape, info.num_classes);

    json header;
    header["format_version"] = kModelFormatVersion;
    header["architecture"] = architecture_name(model.architecture());
    header["name"] = info.name;
    header["input_shape"] = info.input_shape;
    header["num_classes"] = info.num_classes;
    header["bounds"] = {info.bounds.lower, info.bounds.upper};
    json params = json::array();
    for (const auto& [name, shape] : layout) params.push_back({{"name", name}, {"shape", shape}});
    header["parameters"] = params;
    if (transform) header["input_transform"] = {{"kind", transform->kind}, {"parameter", transform->parameter}};

    const std::string text = header.dump();
    std::string bytes(kMagic);
    put_u64(bytes, text.size());
    bytes += text;
    for (const auto& [name, shape] : layout) {
        for (double v : model.parameters().at(name).data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(bytes, bits);
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model file '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing model file '" + path.string() + "'");
}

ModelFile read_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path.string() + "'");
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    const std::string where = "model file '" + path.string() + "'";

    if (bytes.size() < kMagic.size() + 8 || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
        throw CorruptFileError(where + ": missing ADVBMODEL signature");
    }
    const std::uint64_t header_len = get_u64(bytes, kMagic.size());
    const std::size_t header_at = kMagic.size() + 8;
    if (header_len > bytes.size() - header_at) throw CorruptFileError(where + ": truncated header");

    json header;
    try {
        header = json::parse(bytes.substr(header_at, header_len));
    } catch (const json::exception& e) {
        throw CorruptFileError(where + ": unreadable header: " + e.what());
    }

    try {
        const int version = header.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw VersionError(where + ": format version " + std::to_string(version) +
                               " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
        }
        const Architecture arch = parse_architecture(header.at("architecture").get<std::string>());
        const Shape input_shape = header.at("input_shape").get<Shape>();
        const std::size_t k = header.at("num_classes").get<std::size_t>();
        const auto bounds = header.at("bounds").get<std::vector<double>>();
        if (bounds.size() != 2) throw CorruptFileError(where + ": bounds must be [lower, upper]");

        std::size_t offset = header_at + header_len;
        TensorMap params;
        for (const auto& p : header.at("parameters")) {
            const auto name = p.at("name").get<std::string>();
            const auto shape = p.at("shape").get<Shape>();
            const std::size_t count = shape_size(shape);
            if (count > (bytes.size() - offset) / 8) {
                throw CorruptFileError(where + ": truncated payload in parameter '" + name + "'");
            }
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i, offset += 8) {
                const std::uint64_t bits = get_u64(bytes, offset);
                std::memcpy(&values[i], &bits, 8);
            }
            try {
                params.emplace(name, Tensor(shape, std::move(values)));
            } catch (const OverflowError&) {
                throw CorruptFileError(where + ": parameter '" + name + "' holds non-finite values");
            }
        }
        if (offset != bytes.size()) throw CorruptFileError(where + ": trailing bytes after payload");

        ModelFile file{NetworkModel(arch, input_shape, k, std::move(params), Bounds{bounds[0], bounds[1]}),
                       std::nullopt};
        if (header.contains("input_transform")) {
            const auto& t = header.at("input_transform");
            file.transform = TransformSpec{t.at("kind").get<std::string>(), t.at("parameter").get<int>()};
        }
        return file;
    } catch (const json::exception& e) {
        throw CorruptFileError(where + ": malformed header: " + e.what());
    } catch (const ValidationError& e) {
        throw CorruptFileError(where + ": " + e.what());
    } catch (const ShapeError& e) {
        throw CorruptFileError(where + ": " + e.what());
    }
}

NetworkModel load_model(const std::filesystem::path& path) { return read_model_file(path).network; }

}  // namespace advbench
