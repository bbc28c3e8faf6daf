#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace marspo {

// SHA-256 as lowercase hex; used for config digests and artifact comparison.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace marspo
