#include "mi2a/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "mi2a/errors.hpp"

namespace mi2a {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'I', '2', 'A'};
constexpr std::uint32_t kMaxRank = 16;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError(std::string("tensor file truncated while reading ") + what);
  }
  return to_little(v);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kTensorFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (double v : t.data()) put<double>(out, v);
  }
  if (!out) throw FormatError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("tensor file truncated in magic");
  if (magic != kMagic) throw FormatError("bad magic: expected MI2A");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  }
  const auto rank = get<std::uint32_t>(in, "rank");
  if (rank > kMaxRank) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto e = get<std::uint64_t>(in, "extents");
    if (e != 0 && count > std::numeric_limits<std::uint64_t>::max() / sizeof(double) / e) {
      throw FormatError("tensor extents overflow");
    }
    count *= e;
    d = static_cast<std::size_t>(e);
  }
  std::vector<double> data(static_cast<std::size_t>(count));
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
    throw FormatError("tensor payload truncated: header promises " + std::to_string(count) + " values");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : data) v = to_little(v);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  Tensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": payload longer than header extents");
  }
  return t;
}

}  // namespace mi2a
