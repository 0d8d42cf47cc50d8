// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace lags {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Git-style content hash: SHA-256 over "blob <size>\0<content>".
std::string content_hash(std::string_view content);
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace lags
