#pragma once

#include <span>
#include <string>
#include <string_view>

namespace grogu {

// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

// SHA-256 over length-prefixed fields, so ("ab","c") and ("a","bc") differ.
std::string sha256_fields_hex(std::span<const std::string_view> fields);

}  // namespace grogu
