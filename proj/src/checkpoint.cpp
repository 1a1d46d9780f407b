#include "pblab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace pblab {

namespace {
constexpr char kMagic[] = "PBCK1\n";
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 6);
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        std::ostringstream line;
        line << name << ' ';
        for (std::size_t i = 0; i < t.shape().size(); ++i) {
            if (i) line << ',';
            line << t.shape()[i];
        }
        const std::size_t bytes = t.size() * sizeof(float);
        line << ' ' << offset << ' ' << bytes << '\n';
        out << line.str();
        offset += bytes;
    }
    out << '\n';
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) throw CheckpointError("checkpoint: write failed for " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw BadMagicError("checkpoint: bad magic in " + path + ", expected \"PBCK1\"");

    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset, length;
    };
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) break;
        std::istringstream ls(line);
        Entry e;
        std::string shape_str;
        if (!(ls >> e.name >> shape_str >> e.offset >> e.length))
            throw ManifestMismatchError("checkpoint: malformed manifest line: " + line);
        std::istringstream ss(shape_str);
        std::string dim;
        while (std::getline(ss, dim, ',')) e.shape.push_back(std::stoull(dim));
        if (e.shape.empty() || e.shape.size() > 2)
            throw ManifestMismatchError("checkpoint: unsupported rank in manifest line: " + line);
        std::size_t numel = 1;
        for (auto d : e.shape) numel *= d;
        if (e.length != numel * sizeof(float))
            throw ManifestMismatchError("checkpoint: manifest length " + std::to_string(e.length) +
                                        " does not match shape of tensor " + e.name);
        entries.push_back(std::move(e));
    }

    const std::streampos payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::size_t payload_bytes = static_cast<std::size_t>(in.tellg() - payload_start);

    NamedTensors result;
    for (const auto& e : entries) {
        if (e.offset + e.length > payload_bytes)
            throw TruncatedPayloadError("checkpoint: payload truncated, tensor " + e.name +
                                        " needs bytes [" + std::to_string(e.offset) + "," +
                                        std::to_string(e.offset + e.length) + ") but only " +
                                        std::to_string(payload_bytes) + " present");
        Tensor t = e.shape.size() == 1 ? Tensor::vec(e.shape[0]) : Tensor(e.shape[0], e.shape[1]);
        in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(e.length));
        if (!in) throw TruncatedPayloadError("checkpoint: short read for tensor " + e.name);
        result.emplace_back(e.name, std::move(t));
    }
    return result;
}

}  // namespace pblab
