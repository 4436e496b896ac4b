#pragma once

#include <string>
#include <string_view>

namespace fairkd {

/// Git blob object id: hex SHA-1 of "blob <size>\0" + content.
std::string git_blob_hash(std::string_view content);

/// git_blob_hash of a file's bytes. Throws kIo when unreadable.
std::string file_hash(const std::string& path);

}  // namespace fairkd
