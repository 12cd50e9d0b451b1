#include "memseeker/container.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace memseeker {

uint32_t crc32(const void* data, size_t n) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xffffffffu;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

void ByteWriter::f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
}

double ByteReader::f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

void write_container(const std::string& path, std::span<const Section> sections) {
    ByteWriter w;
    w.bytes(kContainerMagic, 4);
    w.u32(kContainerVersion);
    w.u32(static_cast<uint32_t>(sections.size()));
    for (const auto& s : sections) {
        w.u32(s.id);
        w.u64(s.payload.size());
        w.bytes(s.payload.data(), s.payload.size());
        w.u32(crc32(s.payload.data(), s.payload.size()));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Section> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ByteReader r(data);
    char magic[4];
    std::memcpy(magic, r.take(4), 4);
    if (std::memcmp(magic, kContainerMagic, 4) != 0) throw BadMagicError("bad container magic in " + path);
    const uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw VersionError("container version " + std::to_string(version) + " unsupported (want " +
                           std::to_string(kContainerVersion) + ")");
    const uint32_t count = r.u32();
    std::vector<Section> sections;
    sections.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Section s;
        s.id = r.u32();
        const uint64_t len = r.u64();
        s.payload.assign(r.take(len), len);
        const uint32_t stored = r.u32();
        const uint32_t actual = crc32(s.payload.data(), s.payload.size());
        if (stored != actual)
            throw ChecksumError("checksum mismatch in section " + std::to_string(s.id) + " of " + path);
        sections.push_back(std::move(s));
    }
    if (!r.done()) throw TruncatedError("trailing bytes after last section in " + path);
    return sections;
}

const Section& find_section(const std::vector<Section>& sections, uint32_t id) {
    for (const auto& s : sections)
        if (s.id == id) return s;
    throw TruncatedError("missing section " + std::to_string(id));
}

}  // namespace memseeker
