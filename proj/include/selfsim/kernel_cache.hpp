#pragma once

// On-disk cache for assembled kernel matrices.
//
// Layout (all integers and doubles little-endian):
//   8 bytes  magic "SSKMAT01"
//   u32      format version
//   u32      level
//   u64      rows, cols
//   u64      key hash
//   rows*cols doubles, row-major

#include <selfsim/errors.hpp>
#include <selfsim/galerkin.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/model.hpp>
#include <selfsim/quadrature.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>

namespace selfsim {

inline constexpr char kCacheMagic[8] = {'S', 'S', 'K', 'M', 'A', 'T', '0', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

/// 64-bit FNV-1a.
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001B3ULL;
        }
        return *this;
    }
    Fnv1a& str(std::string_view s) noexcept {
        bytes(s.data(), s.size());
        return u64(s.size());
    }
    Fnv1a& u64(std::uint64_t x) noexcept {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
        return bytes(b, 8);
    }
    Fnv1a& f64(double x) noexcept { return u64(std::bit_cast<std::uint64_t>(x)); }
    std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) noexcept {
    Fnv1a h;
    h.bytes(s.data(), s.size());
    return h.value();
}

/// Hash of everything that determines a kernel matrix: the IFS geometry and
/// weights, the kernel's canonical text, the level and the quadrature spec.
inline std::uint64_t kernel_cache_key(const Ifs& ifs, const KernelField& kernel, int level, const QuadSpec& quad) {
    Fnv1a h;
    h.u64(static_cast<std::uint64_t>(ifs.size())).u64(static_cast<std::uint64_t>(ifs.dimension())).f64(ifs.ratio());
    for (int i = 1; i <= ifs.size(); ++i)
        for (double c : ifs.fixed_point(i)) h.f64(c);
    for (double p : ifs.weights().values()) h.f64(p);
    h.str(describe(kernel)).u64(static_cast<std::uint64_t>(level));
    h.str(to_string(quad.method)).u64(quad.budget).u64(quad.seed);
    const Point anchor = detail::resolve_anchor(ifs, quad);
    for (double c : anchor) h.f64(c);
    return h.value();
}

inline std::filesystem::path kernel_cache_path(const std::filesystem::path& dir, std::uint64_t key, int level) {
    char name[64];
    std::snprintf(name, sizeof name, "kernel_m%d_%016llx.bin", level, static_cast<unsigned long long>(key));
    return dir / name;
}

namespace detail {

template <class T>
void put_le(std::ostream& os, T x) {
    std::uint64_t bits;
    if constexpr (std::is_same_v<T, double>)
        bits = std::bit_cast<std::uint64_t>(x);
    else
        bits = static_cast<std::uint64_t>(x);
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
bool get_le(std::istream& is, T& out) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) return false;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    if constexpr (std::is_same_v<T, double>)
        out = std::bit_cast<double>(bits);
    else
        out = static_cast<T>(bits);
    return true;
}

} // namespace detail

/// Writes through a temporary file and renames, so readers never see a partial matrix.
inline void save_kernel(const std::filesystem::path& file, const KernelMatrix& km, std::uint64_t key) {
    std::filesystem::create_directories(file.parent_path());
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write kernel cache " + tmp.string());
        os.write(kCacheMagic, sizeof kCacheMagic);
        detail::put_le<std::uint32_t>(os, kCacheVersion);
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(km.level));
        detail::put_le<std::uint64_t>(os, km.size);
        detail::put_le<std::uint64_t>(os, km.size);
        detail::put_le<std::uint64_t>(os, key);
        for (double x : km.entries) detail::put_le<double>(os, x);
        if (!os) throw Error("short write to kernel cache " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

/// Returns nothing when the file is missing, malformed or stored under another key.
inline std::optional<KernelMatrix> load_kernel(const std::filesystem::path& file, std::uint64_t key,
                                               const QuadSpec& quad) {
    std::ifstream is(file, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) return std::nullopt;
    std::uint32_t version = 0, level = 0;
    std::uint64_t rows = 0, cols = 0, stored = 0;
    if (!detail::get_le(is, version) || version != kCacheVersion) return std::nullopt;
    if (!detail::get_le(is, level) || !detail::get_le(is, rows) || !detail::get_le(is, cols) ||
        !detail::get_le(is, stored))
        return std::nullopt;
    if (stored != key || rows != cols || rows > (std::uint64_t{1} << 20)) return std::nullopt;
    KernelMatrix km;
    km.level = static_cast<int>(level);
    km.size = static_cast<std::size_t>(rows);
    km.quad = quad;
    km.entries.resize(km.size * km.size);
    for (double& x : km.entries)
        if (!detail::get_le(is, x)) return std::nullopt;
    return km;
}

} // namespace selfsim
