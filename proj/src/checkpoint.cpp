#include "sodkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace sodkit {

namespace {

constexpr const char* kMagic = "SODKIT-CKPT v1";

void write_le_doubles(std::ostream& out, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_le_doubles(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    nlohmann::json manifest;
    manifest["entries"] = nlohmann::json::array();
    for (const auto& [name, e] : store.entries()) {
        manifest["entries"].push_back({{"name", name},
                                       {"shape", e.value->shape},
                                       {"trainable", e.trainable},
                                       {"count", e.value->data.size()}});
    }
    out << kMagic << "\n" << manifest.dump() << "\n";
    for (const auto& [name, e] : store.entries()) write_le_doubles(out, e.value->data);
    if (!out) throw IoError("write failure on checkpoint: " + path.string());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string magic, manifest_line;
    std::getline(in, magic);
    if (magic != kMagic) throw IoError("not a checkpoint file: " + path.string());
    std::getline(in, manifest_line);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
    const auto& entries = manifest.at("entries");
    if (entries.size() != store.entries().size())
        throw ValidationError("checkpoint incompatible: file has " +
                              std::to_string(entries.size()) + " entries, model expects " +
                              std::to_string(store.entries().size()));
    auto it = store.entries().begin();
    for (const auto& je : entries) {
        const std::string name = je.at("name").get<std::string>();
        if (it->first != name)
            throw ValidationError("checkpoint incompatible at parameter " + name +
                                  ": model expects " + it->first);
        const Shape shape = je.at("shape").get<Shape>();
        if (shape != it->second.value->shape)
            throw ValidationError("checkpoint incompatible at parameter " + name +
                                  ": shape " + shape_str(shape) + " vs model " +
                                  shape_str(it->second.value->shape));
        ++it;
    }
    for (auto& [name, e] : store.entries()) {
        read_le_doubles(in, e.value->data);
        if (!in) throw IoError("truncated checkpoint payload at " + name);
    }
}

}  // namespace sodkit
