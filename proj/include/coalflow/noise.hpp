#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace coalflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter apply(Counter ctr, Key key) noexcept;
};

/// What a stream is used for. Distinct purposes never share variates.
enum class Purpose : std::uint8_t {
    Motion = 1,
    Bridge = 2,
    Injection = 3,
    Arrows = 4,
    Dither = 5,
    Test = 6,
};

struct StreamId {
    std::uint64_t replicate = 0;  // low 24 bits are used
    std::uint64_t particle = 0;
    Purpose purpose = Purpose::Motion;

    friend bool operator==(const StreamId&, const StreamId&) = default;
};

/// Reproducible stream of variates keyed by (seed, stream id).
///
/// Variate number `position` is a pure function of (seed, id, position), so a
/// stream can be re-created or seeked anywhere without replaying it. Each
/// Philox block yields two variates; Gaussian pairs come from Box-Muller on the
/// block's two 64-bit uniforms.
class NoiseStream {
public:
    NoiseStream() = default;
    NoiseStream(std::uint64_t seed, StreamId id, std::uint64_t position = 0) noexcept;

    /// A stream that returns 0 for every Gaussian and 0.5 for every uniform.
    static NoiseStream silent() noexcept;

    double gaussian() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;

    double gaussian_at(std::uint64_t position) noexcept;
    double uniform_at(std::uint64_t position) noexcept;

    void seek(std::uint64_t position) noexcept { position_ = position; }
    std::uint64_t position() const noexcept { return position_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const StreamId& id() const noexcept { return id_; }
    bool is_silent() const noexcept { return silent_; }

    /// Raw Philox block for this stream (used by lattice code that wants bits).
    Philox4x32::Counter block(std::uint64_t block_index) const noexcept;

private:
    void load(std::uint64_t block_index) noexcept;

    std::uint64_t seed_ = 0;
    StreamId id_{};
    std::uint64_t position_ = 0;
    bool silent_ = false;

    std::uint64_t cached_block_ = ~std::uint64_t{0};
    std::array<double, 2> uniforms_{};
    std::array<double, 2> gaussians_{};
    bool gaussians_ready_ = false;
};

/// n independent N(0, variance) draws taken from the stream's current position.
std::vector<double> gaussian_increments(NoiseStream& noise, std::size_t n, double variance);

/// Independent child seed for sub-experiment `index` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace coalflow
