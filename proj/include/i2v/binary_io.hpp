#pragma once

// Little-endian primitives for the weight, dataset and tensor sidecar files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "i2v/error.hpp"
#include "i2v/tensor.hpp"

namespace i2v::io {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return value;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const char* what, std::uint32_t max_len = 1u << 20) {
  const auto n = get<std::uint32_t>(is, what);
  if (n > max_len) throw FormatError(std::string("implausible length for ") + what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return s;
}

inline void put_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> get_doubles(std::istream& is, std::size_t n, const char* what) {
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

// rank (u32), extents (u64 each), values (f64 each)
inline void put_tensor(std::ostream& os, const Tensor& t) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(os, d);
  put_doubles(os, t.data());
}

inline Tensor get_tensor(std::istream& is, const char* what) {
  const auto rank = get<std::uint32_t>(is, what);
  if (rank > 8) throw FormatError(std::string("implausible rank for ") + what);
  Shape shape(rank);
  for (auto& d : shape) d = get<std::uint64_t>(is, what);
  const auto n = numel_of(shape);
  if (n > (std::size_t{1} << 32)) throw FormatError(std::string("implausible size for ") + what);
  return Tensor::from(std::move(shape), get_doubles(is, n, what));
}

}  // namespace i2v::io
