#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rfsim/errors.hpp"

namespace rfsim {

using Picoseconds = std::int64_t;

inline constexpr double ps_per_s = 1e12;

inline Picoseconds seconds_to_ps(double s) { return Picoseconds(std::llround(s * ps_per_s)); }
inline double ps_to_seconds(Picoseconds ps) { return double(ps) / ps_per_s; }

/// Photon arrival times of one channel, strictly increasing, all in [0, duration).
struct TimeTagSeries
{
    std::uint16_t channel = 0;
    std::vector<Picoseconds> timestamps;
    Picoseconds duration = 0;

    std::size_t size() const { return timestamps.size(); }
    bool empty() const { return timestamps.empty(); }

    /// counts per second
    double rate() const { return duration > 0 ? double(size()) / ps_to_seconds(duration) : 0.0; }

    bool is_valid() const
    {
        for (std::size_t i = 0; i < timestamps.size(); ++i)
        {
            if (timestamps[i] < 0 || timestamps[i] >= duration)
                return false;
            if (i > 0 && timestamps[i] <= timestamps[i - 1])
                return false;
        }
        return true;
    }

    void require_valid(const char* where) const
    {
        if (!is_valid())
            throw ContractError(std::string(where) + ": time tags must be strictly increasing within [0, duration)");
    }

    /// Sort, drop exact duplicates and anything outside [0, duration).
    void normalize()
    {
        std::sort(timestamps.begin(), timestamps.end());
        timestamps.erase(std::unique(timestamps.begin(), timestamps.end()), timestamps.end());
        auto lo = std::lower_bound(timestamps.begin(), timestamps.end(), Picoseconds(0));
        auto hi = std::lower_bound(timestamps.begin(), timestamps.end(), duration);
        timestamps.erase(hi, timestamps.end());
        timestamps.erase(timestamps.begin(), lo);
    }

    friend bool operator==(const TimeTagSeries&, const TimeTagSeries&) = default;
};

//---------------------------------------------------------------------------//
// Binary format, all little-endian:
//   "TTAG" | version u16 | channel u16 | count u64 | duration_ps u64 | count x u64
//---------------------------------------------------------------------------//

inline constexpr std::uint16_t timetag_format_version = 1;

namespace detail {

template<class T>
void put_le(std::ostream& os, T v)
{
    std::array<char, sizeof(T)> buf;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = char((std::uint64_t(v) >> (8 * i)) & 0xff);
    os.write(buf.data(), buf.size());
}

template<class T>
T get_le(std::istream& is)
{
    std::array<unsigned char, sizeof(T)> buf;
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size()))
        throw FormatError("time tag file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= std::uint64_t(buf[i]) << (8 * i);
    return T(v);
}

}  // namespace detail

inline void write_timetags(std::ostream& os, const TimeTagSeries& s)
{
    os.write("TTAG", 4);
    detail::put_le<std::uint16_t>(os, timetag_format_version);
    detail::put_le<std::uint16_t>(os, s.channel);
    detail::put_le<std::uint64_t>(os, s.timestamps.size());
    detail::put_le<std::uint64_t>(os, std::uint64_t(s.duration));
    for (auto t : s.timestamps)
        detail::put_le<std::uint64_t>(os, std::uint64_t(t));
}

inline TimeTagSeries read_timetags(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TTAG", 4) != 0)
        throw FormatError("not a TTAG time tag file");
    auto version = detail::get_le<std::uint16_t>(is);
    if (version != timetag_format_version)
        throw FormatError("unsupported TTAG version " + std::to_string(version));
    TimeTagSeries s;
    s.channel = detail::get_le<std::uint16_t>(is);
    auto count = detail::get_le<std::uint64_t>(is);
    s.duration = Picoseconds(detail::get_le<std::uint64_t>(is));
    s.timestamps.resize(count);
    for (auto& t : s.timestamps)
        t = Picoseconds(detail::get_le<std::uint64_t>(is));
    return s;
}

inline void write_timetags_file(const std::string& path, const TimeTagSeries& s)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("cannot open " + path + " for writing");
    write_timetags(os, s);
}

inline TimeTagSeries read_timetags_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open " + path);
    return read_timetags(is);
}

/// CSV export with header `channel,timestamp_ps`; several channels may be concatenated.
inline void write_timetags_csv(std::ostream& os, const std::vector<const TimeTagSeries*>& series)
{
    os << "channel,timestamp_ps\n";
    for (const auto* s : series)
        for (auto t : s->timestamps)
            os << s->channel << ',' << t << '\n';
}

}  // namespace rfsim
