#include "scaleformer/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "scaleformer/error.hpp"

namespace scaleformer {

namespace {

void put_le(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.write(bytes, 8);
}

double get_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw CheckpointError("checkpoint truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& meta) {
    nlohmann::json header;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& p : params) {
        const auto& s = p.value.shape();
        header["tensors"].push_back({{"name", p.name}, {"shape", {s.b, s.l, s.w}}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out << kCheckpointVersion << '\n' << header.dump() << '\n';
    for (const auto& p : params)
        for (double v : p.value.data()) put_le(out, v);
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    std::string tag;
    std::getline(in, tag);
    if (tag != kCheckpointVersion) throw CheckpointError("'" + path.string() + "' is not a " + kCheckpointVersion + " file");
    std::string line;
    std::getline(in, line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    }
    Checkpoint ck;
    ck.meta = header.value("meta", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 3) throw CheckpointError("tensor shape must have rank 3");
        Tensor value(Shape{shape[0], shape[1], shape[2]});
        for (double& v : value.data()) v = get_le(in);
        ck.params.add(t.at("name").get<std::string>(), std::move(value));
    }
    return ck;
}

void assign_parameters(ParameterSet& dst, const ParameterSet& src) {
    for (auto& p : dst) {
        if (!src.contains(p.name)) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
        const auto& s = src.at(p.name);
        if (s.value.shape() != p.value.shape()) {
            throw CheckpointError("parameter '" + p.name + "' has shape " + s.value.shape().str() + ", expected " +
                                  p.value.shape().str());
        }
        p.value = s.value;
    }
}

}  // namespace scaleformer
