#include "lfa/checkpoint.hpp"

#include <openssl/sha.h>

#include <cstring>
#include <set>

#include "lfa/io_util.hpp"

namespace lfa {

namespace {
constexpr char kMagic[4] = {'L', 'F', 'A', '1'};
}

std::vector<uint8_t> serialize_params(const std::vector<Parameter>& params) {
    std::set<std::string> names;
    for (const Parameter& p : params) {
        if (!names.insert(p.name).second) {
            throw UsageError("duplicate parameter name: " + p.name);
        }
    }
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u64(params.size());
    for (const Parameter& p : params) {
        w.str(p.name);
        w.u32(static_cast<uint32_t>(p.tensor.shape().size()));
        for (int64_t d : p.tensor.shape()) w.u64(static_cast<uint64_t>(d));
        for (double v : p.tensor.data()) w.f32(static_cast<float>(v));
    }
    return w.bytes();
}

std::vector<Parameter> deserialize_params(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    const uint64_t count = r.u64();
    std::vector<Parameter> params;
    params.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        Parameter p;
        p.name = r.str();
        const uint32_t rank = r.u32();
        std::vector<int64_t> shape(rank);
        uint64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(r.u64());
            n *= static_cast<uint64_t>(shape[d]);
        }
        if (n * 4 > r.remaining()) throw FormatError("truncated checkpoint data");
        std::vector<double> data(n);
        for (uint64_t j = 0; j < n; ++j) data[j] = static_cast<double>(r.f32());
        p.tensor = Tensor(std::move(shape), std::move(data), true);
        params.push_back(std::move(p));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload");
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params) {
    atomic_write(path, serialize_params(params));
}

std::vector<Parameter> load_checkpoint(const std::filesystem::path& path) {
    return deserialize_params(read_file(path));
}

std::array<uint8_t, 32> sha256(const uint8_t* data, size_t size) {
    std::array<uint8_t, 32> digest{};
    SHA256(data, size, digest.data());
    return digest;
}

std::array<uint8_t, 32> model_fingerprint(const std::vector<Parameter>& params) {
    const std::vector<uint8_t> bytes = serialize_params(params);
    return sha256(bytes.data(), bytes.size());
}

}  // namespace lfa
