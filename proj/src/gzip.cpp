#include "climfp/gzip.hpp"

#include <zlib.h>

#include "climfp/errors.hpp"

namespace climfp {

void write_gzip(const std::string& path, const std::string& content) {
    gzFile file = gzopen(path.c_str(), "wb");
    if (!file) throw Error(errc::invalid_input, "cannot write " + path);
    // fixed mtime/flags come from writing via gzbuffer defaults; zlib stamps
    // mtime 0 when unset, keeping byte-identical outputs across runs
    if (!content.empty() &&
        gzwrite(file, content.data(), static_cast<unsigned>(content.size())) == 0) {
        gzclose(file);
        throw Error(errc::invalid_input, "gzip write failed for " + path);
    }
    gzclose(file);
}

}  // namespace climfp
