#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rffi::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// CRC-32 (IEEE 802.3) over a byte buffer; manifests store payload checksums.
std::uint32_t crc32(const void* data, std::size_t len);

// Little-endian binary payloads. Tensors on disk are float32 by convention;
// model weights are float64 so checkpoint round-trips are bit-exact.
void write_f32(const fs::path& path, const std::vector<double>& values);
std::vector<double> read_f32(const fs::path& path);
void write_f64(const fs::path& path, const std::vector<double>& values);
std::vector<double> read_f64(const fs::path& path);
void write_u16(const fs::path& path, const std::vector<std::uint16_t>& values);
std::vector<std::uint16_t> read_u16(const fs::path& path);

// Interleaved I/Q float32 stream.
void write_c64(const fs::path& path, const std::vector<std::complex<double>>& samples);
std::vector<std::complex<double>> read_c64(const fs::path& path);

std::uint32_t file_crc32(const fs::path& path);

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);

// Quantize a double to the nearest float32 value. Artifacts stored as f32
// are also used in-memory at f32 precision so that disk and memory agree.
inline double to_f32(double v) { return double(float(v)); }

}  // namespace rffi::io
