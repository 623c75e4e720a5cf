#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "ibra/tensor.hpp"

namespace ibra {

// IBRT tensor container.
//
//   magic "IBRT" | u8 version | u8 dtype code | u32 rank | u64 dims... | raw data
//
// All integers little-endian. Dtype codes: 0 = real32, 1 = int32,
// 2 = bit-packed (LSB-first, 8 per byte), 3 = real64. In-memory real tensors
// are 64-bit, so code 3 is the lossless default for real data; code 0 is kept
// for interchange and rounds through 32-bit floats.
enum class IbrtCode : uint8_t { Real32 = 0, Int32 = 1, BitPacked = 2, Real64 = 3 };

inline constexpr uint8_t kIbrtVersion = 1;

void write_ibrt(std::ostream& out, const Tensor& t);
void write_ibrt(std::ostream& out, const Tensor& t, IbrtCode code);
Tensor read_ibrt(std::istream& in);

void save_ibrt(const std::string& path, const Tensor& t);
void save_ibrt(const std::string& path, const Tensor& t, IbrtCode code);
Tensor load_ibrt(const std::string& path);

}  // namespace ibra
