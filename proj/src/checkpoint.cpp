#include "dpin/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dpin::ckpt {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'I', 'N', 'C', 'K', 'P', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint '" + path + "' is truncated");
    return v;
}

}  // namespace

void save(const nn::ParamSet& params, std::uint64_t config_hash,
          const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, config_hash);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.values.size()));
    for (const auto& [name, t] : params.values) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::int32_t>(out, t.rows());
        put<std::int32_t>(out, t.cols());
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::uint64_t peek_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("'" + path + "' is not a dpin checkpoint");
    return get<std::uint64_t>(in, path);
}

nn::ParamSet load(const std::string& path, std::uint64_t expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("'" + path + "' is not a dpin checkpoint");
    const std::uint64_t hash = get<std::uint64_t>(in, path);
    if (hash != expected_hash)
        throw ConsistencyError(
            "checkpoint '" + path + "' was written for a different config (hash " +
            std::to_string(hash) + ", expected " + std::to_string(expected_hash) + ")");
    const std::uint32_t count = get<std::uint32_t>(in, path);
    nn::ParamSet params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get<std::uint32_t>(in, path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const std::int32_t rows = get<std::int32_t>(in, path);
        const std::int32_t cols = get<std::int32_t>(in, path);
        if (!in || rows < 1 || cols < 1)
            throw DataError("checkpoint '" + path + "' is corrupt");
        nn::Tensor t(rows, cols);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw DataError("checkpoint '" + path + "' is truncated");
        params.insert(name, std::move(t));
    }
    return params;
}

}  // namespace dpin::ckpt
