#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dra/image.hpp"
#include "dra/tensor.hpp"

namespace dra::io {

// ---- image files -----------------------------------------------------------
// PPM (P6, 8-bit) is the native format for synthetic datasets: trivially
// deterministic to write. Other formats (png/jpg/...) decode through OpenCV
// when the build has it.

void save_ppm(const std::string& path, const ImageTensor& img);
ImageTensor load_ppm(const std::string& path);

// Loads any supported format; values scaled to [0,1], channels RGB.
ImageTensor load_image(const std::string& path);

// ---- weight container -------------------------------------------------------
// Versioned binary container holding named double arrays plus a config echo.
//   magic "DRAW"  u32 version  u64 config_len  config bytes
//   u32 n_arrays  { u32 name_len, name, u32 ndim, u64 dims[], f64 data[] }*
//   u64 fnv1a checksum over everything after the magic
// Little-endian throughout. See README for the stability guarantees.

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
    std::string name;
    Tensor values;
};

struct Container {
    std::uint32_t version = kContainerVersion;
    std::string config_echo;
    std::vector<NamedArray> arrays;

    const Tensor* find(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
// Throws std::runtime_error on version mismatch ("incompatible ...") or
// checksum failure ("corrupt ...").
Container read_container(const std::string& path);

// ---- small text helpers -----------------------------------------------------
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace dra::io
