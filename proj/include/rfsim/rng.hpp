#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace rfsim {

//---------------------------------------------------------------------------//
/*!
 * \brief Philox4x32-10 counter-based generator.
 *
 * The output block is a pure function of (key, counter), so independent
 * streams are obtained by choosing distinct keys rather than by advancing a
 * shared state. See Salmon et al., "Parallel random numbers: as easy as
 * 1, 2, 3" (SC11) for the construction.
 */
struct Philox4x32
{
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t mult0 = 0xD2511F53u;
    static constexpr std::uint32_t mult1 = 0xCD9E8D57u;
    static constexpr std::uint32_t weyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t weyl1 = 0xBB67AE85u;

    static constexpr Counter block(Counter ctr, Key key)
    {
        for (int round = 0; round < 10; ++round)
        {
            std::uint64_t p0 = std::uint64_t(mult0) * ctr[0];
            std::uint64_t p1 = std::uint64_t(mult1) * ctr[2];
            Counter next{std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0],
                         std::uint32_t(p1),
                         std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1],
                         std::uint32_t(p0)};
            ctr = next;
            key[0] += weyl0;
            key[1] += weyl1;
        }
        return ctr;
    }
};

/// SplitMix64 finalizer, used to hash (seed, stage, shard) into a Philox key.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Pipeline stage identifiers; each stage draws from its own sub-stream.
enum class Stage : std::uint32_t
{
    emission = 1,
    blinking = 2,
    background = 3,
    detection = 4,
    beamsplitter = 5,
    analysis = 6,
    test = 99,
};

//---------------------------------------------------------------------------//
/*!
 * \brief UniformRandomBitGenerator over one Philox sub-stream.
 *
 * The stream is addressed by (seed, stage, shard). The counter's upper words
 * hold the shard index so that streams never overlap even if two keys were
 * to collide.
 */
class StreamRng
{
  public:
    using result_type = std::uint64_t;

    StreamRng(std::uint64_t seed, Stage stage, std::uint64_t shard = 0)
    {
        std::uint64_t k = splitmix64(seed ^ splitmix64(std::uint64_t(stage) + 0x632be59bd9b4e019ull));
        key_ = {std::uint32_t(k), std::uint32_t(k >> 32)};
        shard_ = shard;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        if (used_ == 2)
        {
            refill();
        }
        auto w = used_++ * 2;
        return (std::uint64_t(out_[w]) << 32) | out_[w + 1];
    }

    /// Jump to the start of another shard of the same (seed, stage) key.
    void reseat(std::uint64_t shard)
    {
        shard_ = shard;
        counter_ = 0;
        used_ = 2;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as the argument of log().
    double uniform_pos() { return double(((*this)() >> 11) + 1) * 0x1.0p-53; }

  private:
    void refill()
    {
        Philox4x32::Counter ctr{std::uint32_t(counter_), std::uint32_t(counter_ >> 32),
                                std::uint32_t(shard_), std::uint32_t(shard_ >> 32)};
        out_ = Philox4x32::block(ctr, key_);
        ++counter_;
        used_ = 0;
    }

    Philox4x32::Key key_{};
    std::uint64_t shard_ = 0;
    std::uint64_t counter_ = 0;
    Philox4x32::Counter out_{};
    unsigned used_ = 2;
};

}  // namespace rfsim
