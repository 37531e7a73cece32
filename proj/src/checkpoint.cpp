#include "vlmforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vlmforge::checkpoint {

using core::io_error;
using core::parse_error;

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw parse_error("checkpoint " + path + ": truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save(const std::string& path, const std::vector<model::NamedParam>& params,
          const std::string& config_hash, const std::string& vocab_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write checkpoint " + path);
    f.write("VLMF", 4);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(params.size()));

    std::ofstream mf(path + ".manifest.txt");
    if (!mf) throw io_error("cannot write checkpoint manifest for " + path);
    mf << "format vlmforge-checkpoint v" << kVersion << "\n";
    mf << "config_hash " << config_hash << "\n";
    mf << "vocab_hash " << vocab_hash << "\n";
    mf << "params " << params.size() << "\n";

    for (const auto& p : params) {
        write_u32(f, static_cast<std::uint32_t>(p.name.size()));
        f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_u32(f, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) write_u32(f, static_cast<std::uint32_t>(d));
        const auto data = p.tensor.data();
        mf << p.name;
        for (int d : shape) mf << " " << d;
        mf << " @" << f.tellp() << "\n";
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!f) throw io_error("write failed for checkpoint " + path);
}

std::map<std::string, LoadedArray> load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "VLMF", 4) != 0)
        throw parse_error("checkpoint " + path + ": bad magic");
    const std::uint32_t version = read_u32(f, path);
    if (version != kVersion)
        throw parse_error("checkpoint " + path + ": unsupported version " +
                          std::to_string(version));
    const std::uint32_t count = read_u32(f, path);
    std::map<std::string, LoadedArray> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(f, path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len))
            throw parse_error("checkpoint " + path + ": truncated name");
        const std::uint32_t ndim = read_u32(f, path);
        LoadedArray arr;
        long total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            arr.shape.push_back(static_cast<int>(read_u32(f, path)));
            total *= arr.shape.back();
        }
        arr.data.resize(static_cast<size_t>(total));
        if (!f.read(reinterpret_cast<char*>(arr.data.data()),
                    static_cast<std::streamsize>(arr.data.size() * sizeof(double))))
            throw parse_error("checkpoint " + path + ": truncated data for " + name);
        out.emplace(std::move(name), std::move(arr));
    }
    return out;
}

void apply(model::VlmModel& m, const std::map<std::string, LoadedArray>& arrays) {
    auto params = m.params();
    if (arrays.size() != params.size())
        throw parse_error("checkpoint: holds " + std::to_string(arrays.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
    for (auto& p : params) {
        auto it = arrays.find(p.name);
        if (it == arrays.end())
            throw parse_error("checkpoint: missing parameter " + p.name);
        if (it->second.shape != p.tensor.shape())
            throw parse_error("checkpoint: shape mismatch for " + p.name +
                              " (checkpoint vs config)");
        auto dst = p.tensor.mutable_data();
        std::copy(it->second.data.begin(), it->second.data.end(), dst.begin());
    }
}

std::string group_hash(const std::vector<model::NamedParam>& params, const std::string& group) {
    unsigned long long h = 1469598103934665603ull;
    for (const auto& p : params) {
        if (p.group != group) continue;
        h = text::fnv1a(p.name.data(), p.name.size(), h);
        const auto data = p.tensor.data();
        h = text::fnv1a(data.data(), data.size() * sizeof(double), h);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", h);
    return buf;
}

}  // namespace vlmforge::checkpoint
