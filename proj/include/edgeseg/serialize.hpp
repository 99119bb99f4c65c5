#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

// Tensor record (all integers little-endian):
//   8 bytes  magic "ESTNSF32" or "ESTNSF64" (scalar width)
//   u32      rank
//   u32      extent, repeated rank times
//   scalars  product(extents) IEEE-754 values, little-endian
//
// Checkpoint container:
//   8 bytes  magic "ESCKPT01"
//   u32      metadata length, then that many bytes of UTF-8 JSON
//   u32      entry count
//   per entry: u32 name length, name bytes, one tensor record

template <typename Scalar>
void write_tensor(std::ostream& os, const Tensor<Scalar>& t);
template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream& is);

template <typename Scalar>
struct NamedTensors {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor<Scalar>>> entries;

  const Tensor<Scalar>* find(const std::string& name) const;
};

template <typename Scalar>
void save_container(const std::filesystem::path& path, const NamedTensors<Scalar>& container);
template <typename Scalar>
NamedTensors<Scalar> load_container(const std::filesystem::path& path);

}  // namespace edgeseg
