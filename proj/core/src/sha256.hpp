#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace geolab::detail {

std::string sha256_hex(std::span<const std::byte> bytes);

}  // namespace geolab::detail
