#include "bucketline/fec.hpp"

#include <array>
#include <bit>
#include <limits>

#include "bucketline/error.hpp"
#include "bucketline/mpdu.hpp"

namespace bucketline {
namespace conv {
namespace {

// Register layout: bit 6 = current input, bits 5..0 = previous inputs (state).
inline std::array<std::uint8_t, 2> outputs(unsigned reg) {
  return {static_cast<std::uint8_t>(std::popcount(reg & kG0) & 1u),
          static_cast<std::uint8_t>(std::popcount(reg & kG1) & 1u)};
}

struct Branch {
  std::uint8_t out0[kStates][2];
  std::uint8_t out1[kStates][2];
  constexpr Branch() : out0{}, out1{} {}
};

Branch make_branches() {
  Branch br;
  for (unsigned s = 0; s < kStates; ++s) {
    auto o0 = outputs(s);
    auto o1 = outputs((1u << 6) | s);
    br.out0[s][0] = o0[0];
    br.out0[s][1] = o0[1];
    br.out1[s][0] = o1[0];
    br.out1[s][1] = o1[1];
  }
  return br;
}

const Branch& branches() {
  static const Branch br = make_branches();
  return br;
}

}  // namespace

Bits encode(std::span<const std::uint8_t> bits) {
  Bits out;
  out.reserve(bits.size() * 2);
  unsigned state = 0;
  for (std::uint8_t b : bits) {
    const unsigned reg = (static_cast<unsigned>(b & 1u) << 6) | state;
    auto o = outputs(reg);
    out.push_back(o[0]);
    out.push_back(o[1]);
    state = reg >> 1;
  }
  return out;
}

Bits viterbi_decode(std::span<const std::uint8_t> coded) {
  const std::size_t steps = coded.size() / 2;
  const Branch& br = branches();
  constexpr unsigned kInf = std::numeric_limits<unsigned>::max() / 2;

  std::array<unsigned, kStates> metric{};
  metric.fill(kInf);
  metric[0] = 0;
  // survivor[t][next] = predecessor state (the input bit is next >> 5).
  std::vector<std::array<std::uint8_t, kStates>> survivor(steps);

  for (std::size_t t = 0; t < steps; ++t) {
    const std::uint8_t r0 = coded[2 * t] & 1u;
    const std::uint8_t r1 = coded[2 * t + 1] & 1u;
    std::array<unsigned, kStates> next;
    next.fill(kInf);
    for (unsigned s = 0; s < kStates; ++s) {
      if (metric[s] >= kInf) continue;
      for (unsigned input = 0; input < 2; ++input) {
        const std::uint8_t* o = input ? br.out1[s] : br.out0[s];
        const unsigned cost = metric[s] + (o[0] != r0) + (o[1] != r1);
        const unsigned ns = (input << 5) | (s >> 1);
        // Strict comparison keeps the lower predecessor on ties.
        if (cost < next[ns]) {
          next[ns] = cost;
          survivor[t][ns] = static_cast<std::uint8_t>(s);
        }
      }
    }
    metric = next;
  }

  unsigned best = 0;
  for (unsigned s = 1; s < kStates; ++s) {
    if (metric[s] < metric[best]) best = s;
  }

  Bits out(steps);
  unsigned s = best;
  for (std::size_t t = steps; t-- > 0;) {
    out[t] = static_cast<std::uint8_t>(s >> 5);
    s = survivor[t][s];
  }
  return out;
}

}  // namespace conv

Bits interleave(std::span<const std::uint8_t> bits, std::size_t rows) {
  const std::size_t len = bits.size();
  if (rows == 0 || len == 0) return {bits.begin(), bits.end()};
  const std::size_t cols = (len + rows - 1) / rows;
  Bits out;
  out.reserve(len);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t p = r * cols + c;
      if (p < len) out.push_back(bits[p]);
    }
  }
  return out;
}

Bits deinterleave(std::span<const std::uint8_t> bits, std::size_t rows) {
  const std::size_t len = bits.size();
  if (rows == 0 || len == 0) return {bits.begin(), bits.end()};
  const std::size_t cols = (len + rows - 1) / rows;
  Bits out(len);
  std::size_t i = 0;
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t p = r * cols + c;
      if (p < len) out[p] = bits[i++];
    }
  }
  return out;
}

namespace {
void require_half_rate(const CodecConfig& cfg) {
  if (cfg.codeRate.k * 2 != cfg.codeRate.m) {
    throw Error(ErrorCode::UnsupportedRate, "only code rate 1/2 is implemented, got " +
                                                std::to_string(cfg.codeRate.k) + "/" +
                                                std::to_string(cfg.codeRate.m));
  }
}
}  // namespace

Bits fec_encode(std::span<const std::uint8_t> bits, const CodecConfig& cfg) {
  require_half_rate(cfg);
  return interleave(conv::encode(bits), cfg.interleaverRows);
}

Bits fec_decode(std::span<const std::uint8_t> coded, const CodecConfig& cfg) {
  if (coded.size() % 2 != 0) {
    throw Error(ErrorCode::BadLength, "coded length must be even");
  }
  return conv::viterbi_decode(deinterleave(coded, cfg.interleaverRows));
}

}  // namespace bucketline
