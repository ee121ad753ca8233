#include "tan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "tan/errors.hpp"

namespace tanet {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'N', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool get_le(std::istream& in, T& v) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    std::memcpy(&v, buf, sizeof(T));
    return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedMatrix>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("save_checkpoint: cannot open '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    for (const auto& t : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint64_t>(out, t.value.rows());
        put_le<std::uint64_t>(out, t.value.cols());
        for (double v : t.value.data()) put_le<double>(out, v);
    }
    if (!out) throw InputError("save_checkpoint: write failed for '" + path + "'");
}

std::vector<NamedMatrix> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw InputError("load_checkpoint: '" + path + "' is not a TANCKPT1 file");
    }
    std::vector<NamedMatrix> out;
    for (;;) {
        std::uint32_t len = 0;
        if (!get_le(in, len)) break;
        if (len > (1u << 20)) throw InputError("load_checkpoint: implausible name length");
        std::string name(len, '\0');
        std::uint64_t rows = 0, cols = 0;
        if (!in.read(name.data(), len) || !get_le(in, rows) || !get_le(in, cols)) {
            throw InputError("load_checkpoint: truncated record header");
        }
        if (rows != 0 && cols > (std::uint64_t{1} << 40) / rows) throw InputError("load_checkpoint: implausible shape");
        Matrix m(rows, cols);
        for (auto& v : m.data()) {
            if (!get_le(in, v)) throw InputError("load_checkpoint: truncated tensor '" + name + "'");
        }
        out.push_back({std::move(name), std::move(m)});
    }
    return out;
}

}  // namespace tanet
