#pragma once

#include <filesystem>

#include "psfmix/imaging.hpp"

namespace psfmix {

// Stack files are a JSON header plus a raw little-endian payload next to it
// (same stem, ".raw"). Payload dtype is uint16 for grey values and float64
// otherwise, in slice/row/column vectorization order.
void write_stack(const std::filesystem::path& header_path, const ImageStack& stack);
ImageStack read_stack(const std::filesystem::path& header_path);

// One row per pixel: j,s,r,c,value.
void write_stack_csv(const std::filesystem::path& path, const ImageStack& stack);

}  // namespace psfmix
