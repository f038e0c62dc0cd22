#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vld/optim.hpp"
#include "vld/tensor.hpp"

// Container format shared by checkpoints, feature dumps and dataset tracklets:
//
//   "VLDT"  u16 version
//   repeated until EOF:
//     u32 name length, name bytes, u8 dtype, u8 ndim, u64 extents[ndim],
//     payload (product(extents) elements, little-endian)
namespace vld::io {

inline constexpr std::uint16_t kContainerVersion = 1;

enum class DType : std::uint8_t { kFloat64 = 0, kFloat32 = 1, kUInt8 = 2 };

std::size_t dtype_size(DType dtype);

struct Record {
  std::string name;
  DType dtype = DType::kFloat64;
  Shape shape;
  std::vector<std::uint8_t> payload;

  static Record from_doubles(std::string name, const Shape& shape, std::span<const double> values);
  static Record from_bytes(std::string name, const Shape& shape, std::vector<std::uint8_t> bytes);
  std::vector<double> to_doubles() const;
};

std::vector<std::uint8_t> encode(const std::vector<Record>& records);
std::vector<Record> decode(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const std::vector<Record>& records);
std::vector<Record> read_container(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const ParameterList& params);
/// Copies stored values into the given parameters by name. Missing names or
/// shape disagreements raise LoadError.
void load_parameters(const std::filesystem::path& path, ParameterList& params);

}  // namespace vld::io
