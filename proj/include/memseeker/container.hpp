#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace memseeker {

// Little-endian sectioned container: magic "VDET", u32 version, u32 section
// count, then per section {u32 id, u64 length, payload, u32 crc32(payload)}.
inline constexpr char kContainerMagic[4] = {'V', 'D', 'E', 'T'};
inline constexpr uint32_t kContainerVersion = 1;

enum SectionId : uint32_t {
    kSecConfig = 1,
    kSecVocab = 2,
    kSecTensors = 3,
    kSecOptState = 4,
    kSecRng = 5,
    kSecSamples = 6,
    kSecLayout = 7,
    kSecBank = 8,
    kSecAnswer = 9,
};

struct Section {
    uint32_t id = 0;
    std::string payload;
};

struct BadMagicError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ChecksumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint32_t crc32(const void* data, size_t n);

class ByteWriter {
  public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v);
    void bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void str_lp(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.append(s);
    }
    const std::string& str() const { return buf_; }
    std::string take() { return std::move(buf_); }

  private:
    std::string buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::string_view data) : data_(data) {}
    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint32_t u32() {
        const char* p = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(p[i])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        const char* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(p[i])) << (8 * i);
        return v;
    }
    double f64();
    std::string str_lp() {
        uint32_t n = u32();
        return std::string(take(n), n);
    }
    const char* take(size_t n) {
        if (pos_ + n > data_.size()) throw TruncatedError("container payload truncated");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

  private:
    std::string_view data_;
    size_t pos_ = 0;
};

void write_container(const std::string& path, std::span<const Section> sections);
std::vector<Section> read_container(const std::string& path);
const Section& find_section(const std::vector<Section>& sections, uint32_t id);

}  // namespace memseeker
