#include "coalflow/noise.hpp"

#include <cmath>
#include <numbers>

#include "coalflow/errors.hpp"

namespace coalflow {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform strictly inside (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Counter Philox4x32::apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMulA, ctr[0], hi0, lo0);
        mulhilo(kMulB, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

NoiseStream::NoiseStream(std::uint64_t seed, StreamId id, std::uint64_t position) noexcept
    : seed_(seed), id_(id), position_(position) {}

NoiseStream NoiseStream::silent() noexcept {
    NoiseStream s;
    s.silent_ = true;
    return s;
}

Philox4x32::Counter NoiseStream::block(std::uint64_t block_index) const noexcept {
    const auto tag = static_cast<std::uint32_t>((id_.replicate & 0xFFFFFFu) |
                                                (static_cast<std::uint32_t>(id_.purpose) << 24));
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_index), tag,
                                  static_cast<std::uint32_t>(id_.particle),
                                  static_cast<std::uint32_t>(id_.particle >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                              static_cast<std::uint32_t>(seed_ >> 32)};
    return Philox4x32::apply(ctr, key);
}

void NoiseStream::load(std::uint64_t block_index) noexcept {
    if (block_index == cached_block_) return;
    const auto w = block(block_index);
    uniforms_[0] = to_open_unit(w[0], w[1]);
    uniforms_[1] = to_open_unit(w[2], w[3]);
    gaussians_ready_ = false;
    cached_block_ = block_index;
}

double NoiseStream::gaussian_at(std::uint64_t position) noexcept {
    if (silent_) return 0.0;
    load(position >> 1);
    if (!gaussians_ready_) {
        const double r = std::sqrt(-2.0 * std::log(uniforms_[0]));
        const double theta = 2.0 * std::numbers::pi * uniforms_[1];
        gaussians_[0] = r * std::cos(theta);
        gaussians_[1] = r * std::sin(theta);
        gaussians_ready_ = true;
    }
    return gaussians_[position & 1u];
}

double NoiseStream::uniform_at(std::uint64_t position) noexcept {
    if (silent_) return 0.5;
    load(position >> 1);
    return uniforms_[position & 1u];
}

double NoiseStream::gaussian() noexcept { return gaussian_at(position_++); }

double NoiseStream::uniform() noexcept { return uniform_at(position_++); }

std::vector<double> gaussian_increments(NoiseStream& noise, std::size_t n, double variance) {
    if (!(variance >= 0.0)) throw InputError("gaussian_increments: variance must be >= 0");
    std::vector<double> out(n);
    const double sd = std::sqrt(variance);
    for (auto& v : out) v = sd * noise.gaussian();
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(seed ^ splitmix64(index + 1));
}

}  // namespace coalflow
