#include "edgeseg/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "edgeseg/errors.hpp"

namespace edgeseg {

namespace {

constexpr std::array<char, 8> kCheckpointMagic{'E', 'S', 'C', 'K', 'P', 'T', '0', '1'};

template <typename Scalar>
constexpr std::array<char, 8> tensor_magic() {
  if constexpr (sizeof(Scalar) == 4) return {'E', 'S', 'T', 'N', 'S', 'F', '3', '2'};
  else return {'E', 'S', 'T', 'N', 'S', 'F', '6', '4'};
}

template <typename Word>
void put_le(std::ostream& os, Word value) {
  std::array<unsigned char, sizeof(Word)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(Word));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(Word));
}

template <typename Word>
Word get_le(std::istream& is) {
  std::array<unsigned char, sizeof(Word)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(Word))) {
    throw IoError("unexpected end of tensor stream");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  Word value;
  std::memcpy(&value, bytes.data(), sizeof(Word));
  return value;
}

void put_u32(std::ostream& os, std::size_t v) {
  if (v > 0xFFFFFFFFu) throw IoError("value exceeds u32 range in tensor stream");
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
}

}  // namespace

template <typename Scalar>
void write_tensor(std::ostream& os, const Tensor<Scalar>& t) {
  const auto magic = tensor_magic<Scalar>();
  os.write(magic.data(), magic.size());
  put_u32(os, t.rank());
  for (std::size_t extent : t.shape()) put_u32(os, extent);
  using Word = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
  for (Scalar v : t.data()) put_le<Word>(os, std::bit_cast<Word>(v));
}

template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size())) throw IoError("unexpected end of tensor stream");
  if (magic != tensor_magic<Scalar>()) throw IoError("tensor record has wrong magic or scalar width");
  const std::uint32_t rank = get_le<std::uint32_t>(is);
  if (rank == 0 || rank > 8) throw IoError("tensor record has invalid rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& extent : shape) {
    extent = get_le<std::uint32_t>(is);
    if (extent == 0) throw IoError("tensor record has a zero extent");
  }
  using Word = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
  std::vector<Scalar> values(numel(shape));
  for (auto& v : values) v = std::bit_cast<Scalar>(get_le<Word>(is));
  return Tensor<Scalar>(std::move(shape), std::move(values));
}

template <typename Scalar>
const Tensor<Scalar>* NamedTensors<Scalar>::find(const std::string& name) const {
  for (const auto& [key, tensor] : entries) {
    if (key == name) return &tensor;
  }
  return nullptr;
}

template <typename Scalar>
void save_container(const std::filesystem::path& path, const NamedTensors<Scalar>& container) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_u32(os, container.metadata.size());
  os.write(container.metadata.data(), static_cast<std::streamsize>(container.metadata.size()));
  put_u32(os, container.entries.size());
  for (const auto& [name, tensor] : container.entries) {
    put_u32(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, tensor);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

template <typename Scalar>
NamedTensors<Scalar> load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  try {
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
      throw IoError("not a checkpoint container");
    }
    NamedTensors<Scalar> out;
    out.metadata.resize(get_le<std::uint32_t>(is));
    if (!is.read(out.metadata.data(), static_cast<std::streamsize>(out.metadata.size()))) {
      throw IoError("truncated metadata");
    }
    const std::uint32_t count = get_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name(get_le<std::uint32_t>(is), '\0');
      if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw IoError("truncated entry name");
      out.entries.emplace_back(std::move(name), read_tensor<Scalar>(is));
    }
    return out;
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template struct NamedTensors<float>;
template struct NamedTensors<double>;
template void save_container(const std::filesystem::path&, const NamedTensors<float>&);
template void save_container(const std::filesystem::path&, const NamedTensors<double>&);
template NamedTensors<float> load_container<float>(const std::filesystem::path&);
template NamedTensors<double> load_container<double>(const std::filesystem::path&);

}  // namespace edgeseg
