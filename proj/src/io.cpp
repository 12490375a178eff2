#include "rffi/io.hpp"

#include <array>
#include <fstream>

#include "rffi/common.hpp"

namespace rffi::io {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::Io, "cannot open for writing: " + path.string());
    return f;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::MissingArtifact, "cannot open: " + path.string());
    return f;
}

std::vector<char> read_all(const fs::path& path) {
    auto f = open_in(path);
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(len));
    f.read(buf.data(), len);
    require(f.good(), ErrorKind::Io, "short read: " + path.string());
    return buf;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len) {
    static const auto table = make_crc_table();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

void write_f32(const fs::path& path, const std::vector<double>& values) {
    std::vector<float> tmp(values.begin(), values.end());
    auto f = open_out(path);
    f.write(reinterpret_cast<const char*>(tmp.data()),
            std::streamsize(tmp.size() * sizeof(float)));
}

std::vector<double> read_f32(const fs::path& path) {
    auto buf = read_all(path);
    require(buf.size() % sizeof(float) == 0, ErrorKind::Verification,
            "f32 payload size not a multiple of 4: " + path.string());
    const auto* p = reinterpret_cast<const float*>(buf.data());
    return std::vector<double>(p, p + buf.size() / sizeof(float));
}

void write_f64(const fs::path& path, const std::vector<double>& values) {
    auto f = open_out(path);
    f.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(double)));
}

std::vector<double> read_f64(const fs::path& path) {
    auto buf = read_all(path);
    require(buf.size() % sizeof(double) == 0, ErrorKind::Verification,
            "f64 payload size not a multiple of 8: " + path.string());
    const auto* p = reinterpret_cast<const double*>(buf.data());
    return std::vector<double>(p, p + buf.size() / sizeof(double));
}

void write_u16(const fs::path& path, const std::vector<std::uint16_t>& values) {
    auto f = open_out(path);
    f.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(std::uint16_t)));
}

std::vector<std::uint16_t> read_u16(const fs::path& path) {
    auto buf = read_all(path);
    require(buf.size() % 2 == 0, ErrorKind::Verification,
            "u16 payload size not even: " + path.string());
    const auto* p = reinterpret_cast<const std::uint16_t*>(buf.data());
    return std::vector<std::uint16_t>(p, p + buf.size() / 2);
}

void write_c64(const fs::path& path, const std::vector<std::complex<double>>& samples) {
    std::vector<float> tmp;
    tmp.reserve(samples.size() * 2);
    for (const auto& s : samples) {
        tmp.push_back(float(s.real()));
        tmp.push_back(float(s.imag()));
    }
    auto f = open_out(path);
    f.write(reinterpret_cast<const char*>(tmp.data()),
            std::streamsize(tmp.size() * sizeof(float)));
}

std::vector<std::complex<double>> read_c64(const fs::path& path) {
    auto v = read_f32(path);
    require(v.size() % 2 == 0, ErrorKind::Verification,
            "c64 payload has odd float count: " + path.string());
    std::vector<std::complex<double>> out(v.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {v[2 * i], v[2 * i + 1]};
    return out;
}

std::uint32_t file_crc32(const fs::path& path) {
    auto buf = read_all(path);
    return crc32(buf.data(), buf.size());
}

void write_json(const fs::path& path, const json& j) {
    auto f = open_out(path);
    f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    auto f = open_in(path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::Verification, "bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    auto f = open_out(path);
    f << text;
}

}  // namespace rffi::io
