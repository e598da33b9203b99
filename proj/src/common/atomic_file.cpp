#include "bucketline/atomic_file.hpp"

#include <fstream>
#include <system_error>
#include <unistd.h>

namespace bucketline {

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::system_error(errno, std::generic_category(), "open " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::system_error(errno, std::generic_category(), "write " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bucketline
