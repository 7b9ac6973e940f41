#pragma once

#include <string>

namespace climfp {

// Writes `content` gzip-compressed to `path`.
void write_gzip(const std::string& path, const std::string& content);

}  // namespace climfp
