#include "lfa/io_util.hpp"

#include <fstream>

namespace lfa {

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    const std::streamsize size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(size));
    if (size > 0 && !f.read(reinterpret_cast<char*>(buf.data()), size)) {
        throw IoError("read failed: " + path.string());
    }
    return buf;
}

void atomic_write(const std::filesystem::path& path, const void* data, size_t size) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " +
                              ec.message());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + tmp.string());
        if (size > 0) f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        f.flush();
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("rename failed for " + path.string() + ": " + ec.message());
    }
}

void atomic_write(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    atomic_write(path, bytes.data(), bytes.size());
}

void atomic_write(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, text.data(), text.size());
}

}  // namespace lfa
