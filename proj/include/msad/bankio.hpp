#pragma once

// Bank file layout (all integers little-endian):
//   "MSMB" | u16 version | u32 len + descriptor JSON
//   per bank: u8 kind | u8 scale | u64 rows | u32 dim | rows*dim float32 | u32 len + provenance JSON
//   u32 CRC32 of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "json.hpp"

#include "msad/membank.hpp"

namespace msad {

inline constexpr char kBankMagic[4] = {'M', 'S', 'M', 'B'};
inline constexpr std::uint16_t kBankFormatVersion = 1;

namespace detail {

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_integral_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
    void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
    void put_bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& bytes() noexcept { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

    template <class T>
    T get() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    std::string get_string() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
        pos_ += len;
        return s;
    }
    void get_bytes(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }
    bool done() const noexcept { return pos_ == n_; }
    std::size_t remaining() const noexcept { return n_ - pos_; }

private:
    void need(std::size_t k) const {
        if (k > n_ - pos_) throw LoadError("bank file truncated");
    }
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = crc32(c, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_banks(const BankSet& set) {
    detail::ByteWriter w;
    w.put_bytes(kBankMagic, 4);
    w.put(kBankFormatVersion);
    nlohmann::json desc = set.descriptor;
    desc["config_hash"] = set.config_hash;
    w.put_string(desc.dump());
    for (const auto& b : set.banks) {
        w.put(static_cast<std::uint8_t>(b.kind()));
        w.put(static_cast<std::uint8_t>(b.scale()));
        w.put(static_cast<std::uint64_t>(b.rows()));
        w.put(static_cast<std::uint32_t>(b.dim()));
        for (float f : b.matrix()) w.put_f32(f);
        nlohmann::json prov = nlohmann::json::array();
        for (const auto& p : b.provenance()) prov.push_back({p.image, p.augmentation, p.object, p.window});
        w.put_string(prov.dump());
    }
    auto& bytes = w.bytes();
    const std::uint32_t crc = detail::crc32_of(bytes.data(), bytes.size());
    w.put(crc);
    return std::move(bytes);
}

/// Parses a bank file image. Checksum, magic and version are checked before anything is returned.
inline BankSet deserialize_banks(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4) throw LoadError("bank file truncated");
    const std::size_t payload = bytes.size() - 4;
    detail::ByteReader tail(bytes.data() + payload, 4);
    if (tail.get<std::uint32_t>() != detail::crc32_of(bytes.data(), payload))
        throw LoadError("bank file checksum mismatch");

    detail::ByteReader r(bytes.data(), payload);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kBankMagic, 4) != 0) throw LoadError("not a bank file (bad magic)");
    const auto version = r.get<std::uint16_t>();
    if (version != kBankFormatVersion) throw LoadError("unsupported bank format version " + std::to_string(version));

    BankSet set;
    try {
        const auto desc = nlohmann::json::parse(r.get_string());
        set.descriptor = desc.get<ProviderDescriptor>();
        set.config_hash = desc.value("config_hash", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("bad descriptor block: ") + e.what());
    }

    std::array<bool, 6> seen{};
    while (!r.done()) {
        const auto kind = r.get<std::uint8_t>();
        const auto scale = r.get<std::uint8_t>();
        const auto rows = r.get<std::uint64_t>();
        const auto dim = r.get<std::uint32_t>();
        if (kind > 1 || scale > 2) throw LoadError("bad bank kind/scale tag");
        if (static_cast<int>(dim) != set.descriptor.dim) throw LoadError("bank dimension differs from descriptor");
        if (dim == 0 || rows > r.remaining() / (4ull * dim)) throw LoadError("bank file truncated");
        std::vector<float> data(rows * dim);
        for (auto& f : data) f = r.get_f32();
        for (std::size_t i = 0; i < rows; ++i) {
            std::span<float> row(data.data() + i * dim, dim);
            const double n = l2_norm(row);
            if (!(n > 0.0) || !std::isfinite(n)) throw LoadError("bank row has zero or non-finite norm");
            if (std::abs(n - 1.0) > 1e-6)
                for (auto& v : row) v = static_cast<float>(v / n);
        }
        std::vector<Provenance> prov;
        try {
            const auto pj = nlohmann::json::parse(r.get_string());
            prov.reserve(pj.size());
            for (const auto& e : pj)
                prov.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>(), e.at(2).get<std::int32_t>(),
                                e.at(3).get<std::uint32_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(std::string("bad provenance block: ") + e.what());
        }
        if (prov.size() != rows) throw LoadError("provenance length differs from row count");
        const auto k = static_cast<BankKind>(kind);
        const auto s = static_cast<Scale>(scale);
        const auto idx = BankSet::bank_index(k, s);
        if (seen[idx]) throw LoadError("duplicate bank in file");
        seen[idx] = true;
        set.banks[idx] = MemoryBank::from_rows(k, s, static_cast<int>(dim), std::move(data), std::move(prov));
    }
    for (bool s : seen)
        if (!s) throw LoadError("bank file is missing a bank");
    return set;
}

inline void save_banks(const BankSet& set, const std::filesystem::path& path) {
    const auto bytes = serialize_banks(set);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + path.string());
}

/// Loads a bank file. When `expected` is given, the stored provider must match it.
inline BankSet load_banks(const std::filesystem::path& path, const ProviderDescriptor* expected = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open bank file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    BankSet set = deserialize_banks(bytes);
    if (expected && (expected->name != set.descriptor.name || expected->dim != set.descriptor.dim ||
                     expected->patch_size != set.descriptor.patch_size))
        throw ContractViolation("bank file was built with provider '" + set.descriptor.name + "' (dim " +
                                std::to_string(set.descriptor.dim) + "), current provider is '" + expected->name +
                                "' (dim " + std::to_string(expected->dim) + ")");
    return set;
}

}  // namespace msad
