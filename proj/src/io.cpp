#include "xts/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "xts/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "the .xts format is little-endian");

namespace xts {

namespace {

constexpr char kMagic[4] = {'X', 'T', 'S', 'R'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kKindTensor = 0;
constexpr std::uint8_t kKindFactors = 1;
constexpr std::uint8_t kScalarWidth = 8;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("read_tensor_file: truncated file");
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw DataError("read_tensor_file: truncated payload");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

}  // namespace

void write_tensor_file(const std::string& path, const Tensor3& t) {
  std::ofstream out = open_out(path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, kKindTensor);
  write_pod(out, static_cast<std::uint64_t>(t.n1));
  write_pod(out, static_cast<std::uint64_t>(t.n2));
  write_pod(out, static_cast<std::uint64_t>(t.n3));
  write_pod(out, kScalarWidth);
  write_doubles(out, t.values);
  if (!out) throw DataError("write failed: " + path);
}

void write_factor_file(const std::string& path, const FactorTriple& f) {
  std::ofstream out = open_out(path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, kKindFactors);
  write_pod(out, static_cast<std::uint64_t>(f.a.rows));
  write_pod(out, static_cast<std::uint64_t>(f.b.rows));
  write_pod(out, static_cast<std::uint64_t>(f.c.rows));
  write_pod(out, static_cast<std::uint64_t>(f.rank()));
  write_pod(out, kScalarWidth);
  write_doubles(out, f.a.values);
  write_doubles(out, f.b.values);
  write_doubles(out, f.c.values);
  if (!out) throw DataError("write failed: " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a .xts file: " + path);
  if (read_pod<std::uint16_t>(in) != kVersion)
    throw DataError("unsupported .xts version: " + path);
  const std::uint8_t kind = read_pod<std::uint8_t>(in);

  TensorFile file;
  if (kind == kKindTensor) {
    file.kind = TensorFile::Kind::tensor;
    const auto n1 = read_pod<std::uint64_t>(in);
    const auto n2 = read_pod<std::uint64_t>(in);
    const auto n3 = read_pod<std::uint64_t>(in);
    if (read_pod<std::uint8_t>(in) != kScalarWidth)
      throw DataError("unsupported scalar width: " + path);
    file.tensor = Tensor3(static_cast<index_t>(n1), static_cast<index_t>(n2),
                          static_cast<index_t>(n3));
    read_doubles(in, file.tensor.values);
  } else if (kind == kKindFactors) {
    file.kind = TensorFile::Kind::factors;
    const auto n1 = read_pod<std::uint64_t>(in);
    const auto n2 = read_pod<std::uint64_t>(in);
    const auto n3 = read_pod<std::uint64_t>(in);
    const auto rank = read_pod<std::uint64_t>(in);
    if (read_pod<std::uint8_t>(in) != kScalarWidth)
      throw DataError("unsupported scalar width: " + path);
    Matrix a(static_cast<index_t>(n1), static_cast<index_t>(rank));
    Matrix b(static_cast<index_t>(n2), static_cast<index_t>(rank));
    Matrix c(static_cast<index_t>(n3), static_cast<index_t>(rank));
    read_doubles(in, a.values);
    read_doubles(in, b.values);
    read_doubles(in, c.values);
    file.factors = FactorTriple(std::move(a), std::move(b), std::move(c));
  } else {
    throw DataError("unknown .xts kind: " + path);
  }
  return file;
}

}  // namespace xts
