#pragma once

#include <string>

#include "xts/tensor.hpp"

namespace xts {

// .xts container: magic "XTSR", u16 format version, u8 kind (0 = dense
// tensor, 1 = factor triple), u64 dims (3 values, plus u64 rank for factors),
// u8 scalar width (8), then column-major IEEE-754 doubles; factor payloads
// are A, then B, then C. All fields little-endian.

struct TensorFile {
  enum class Kind { tensor, factors };
  Kind kind = Kind::tensor;
  Tensor3 tensor;
  FactorTriple factors;
};

void write_tensor_file(const std::string& path, const Tensor3& t);
void write_factor_file(const std::string& path, const FactorTriple& f);
TensorFile read_tensor_file(const std::string& path);

}  // namespace xts
