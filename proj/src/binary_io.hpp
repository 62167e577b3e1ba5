#pragma once

#include <bit>
#include <istream>
#include <ostream>

#include "dtlns/common.hpp"

namespace dtlns::detail {

static_assert(std::endian::native == std::endian::little,
              "binary artifact writers assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("truncated binary file");
  return v;
}

}  // namespace dtlns::detail
