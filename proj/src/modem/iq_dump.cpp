#include <bit>
#include <cstring>
#include <sstream>
#include <string>

#include "bucketline/atomic_file.hpp"
#include "bucketline/ofdm.hpp"

namespace bucketline {

namespace {
void put_f64_le(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  char b[8];
  std::memcpy(b, &u, 8);
  out.append(b, 8);
}
}  // namespace

void write_iq_dump(const std::filesystem::path& path, std::span<const Complex> samples, const OfdmConfig& cfg) {
  std::string body;
  body.reserve(samples.size() * 16);
  for (const auto& s : samples) {
    put_f64_le(body, s.real());
    put_f64_le(body, s.imag());
  }
  write_file_atomic(path, body);

  std::ostringstream hdr;
  hdr.precision(17);
  hdr << "format = iq-f64le-interleaved\n"
      << "samples = " << samples.size() << "\n"
      << "sample_rate_hz = " << cfg.sampleRate << "\n"
      << "fft_size = " << cfg.fftSize << "\n"
      << "cp_samples = " << cfg.cpLength() << "\n"
      << "qam_order = " << cfg.qamOrder << "\n"
      << "units = sqrt(mW)\n";
  auto side = path;
  side += ".txt";
  write_file_atomic(side, hdr.str());
}

}  // namespace bucketline
