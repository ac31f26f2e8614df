#include "camo/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace camo {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'M', 'O', 'T', 'N', 'S', '1'};
constexpr char kMagicMeta[8] = {'C', 'A', 'M', 'O', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    check(static_cast<bool>(is), "checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    check(static_cast<bool>(is), "checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    const std::uint64_t bits = get_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

namespace {

void write_tensor_block(std::ostream& os,
                        const std::vector<std::pair<std::string, Tensor>>& tensors) {
    put_u64(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
        for (double v : t.data()) put_f64(os, v);
    }
}

std::vector<std::pair<std::string, Tensor>> read_tensor_block(std::istream& is) {
    const std::uint64_t count = get_u64(is);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        check(static_cast<bool>(is), "checkpoint: truncated file");
        const std::uint32_t ndim = get_u32(is);
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<std::int64_t>(get_u64(is));
        const auto n = static_cast<std::size_t>(numel(shape));
        std::vector<double> data(n);
        for (auto& v : data) v = get_f64(is);
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace

void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os.write(kMagic, 8);
    write_tensor_block(os, tensors);
    if (!os) throw IoError("write failed: " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const std::string& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os.write(kMagicMeta, 8);
    put_u64(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_tensor_block(os, tensors);
    if (!os) throw IoError("write failed: " + path.string());
}

std::pair<std::string, std::vector<std::pair<std::string, Tensor>>> load_checkpoint(
    const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    char magic[8];
    is.read(magic, 8);
    check(static_cast<bool>(is) && std::memcmp(magic, kMagicMeta, 8) == 0,
          "checkpoint: bad magic in " + path.string());
    const std::uint64_t meta_len = get_u64(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    check(static_cast<bool>(is), "checkpoint: truncated file");
    return {std::move(meta), read_tensor_block(is)};
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    char magic[8];
    is.read(magic, 8);
    check(static_cast<bool>(is) && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: bad magic in " + path.string());
    return read_tensor_block(is);
}

}  // namespace camo
