#pragma once

// Integer PCM decoding (RIFF/WAVE and headerless raw), 16-bit WAV output,
// silence trimming and per-channel peak helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mesdr/error.hpp"
#include "mesdr/power_metrics.hpp"
#include "mesdr/signal.hpp"

namespace mesdr {

struct PcmLayout {
  std::uint32_t sample_rate = 44100;
  std::uint16_t bits = 16;
  std::uint16_t channels = 1;

  [[nodiscard]] std::size_t frame_bytes() const { return std::size_t{channels} * (bits / 8); }
};

/// Interleaved PCM decoded to one amplitude sequence per channel.
struct PcmData {
  PcmLayout layout;
  std::vector<std::vector<double>> channels;

  [[nodiscard]] std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

inline void check_width(std::uint16_t bits, const std::string& where) {
  if (bits != 16 && bits != 24 && bits != 32)
    throw DecodeError(where + ": unsupported sample width " + std::to_string(bits) +
                      " bits (integer PCM 16/24/32 only)");
}

// Little-endian signed integer sample scaled by 1/2^(bits-1).
inline double decode_sample(const std::uint8_t* p, std::uint16_t bits) {
  switch (bits) {
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
  }
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline PcmData deinterleave(std::span<const std::uint8_t> data, const PcmLayout& layout,
                            std::size_t data_offset, const std::string& where) {
  const std::size_t fb = layout.frame_bytes();
  if (data.size() % fb != 0) {
    const std::size_t at = data_offset + (data.size() / fb) * fb;
    throw DecodeError(where + ": truncated sample frame at byte offset " + std::to_string(at) +
                      " (" + std::to_string(data.size() % fb) + " of " + std::to_string(fb) +
                      " bytes present)");
  }
  const std::size_t frames = data.size() / fb;
  PcmData out;
  out.layout = layout;
  out.channels.assign(layout.channels, std::vector<double>(frames));
  const std::size_t sb = layout.bits / 8;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::uint8_t* frame = data.data() + f * fb;
    for (std::size_t c = 0; c < layout.channels; ++c)
      out.channels[c][f] = decode_sample(frame + c * sb, layout.bits);
  }
  return out;
}

}  // namespace detail

/// Decodes a RIFF/WAVE image holding integer PCM (format tag 1, or
/// WAVE_FORMAT_EXTENSIBLE with the PCM sub-format).
[[nodiscard]] inline PcmData decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE")
    throw DecodeError("RIFF header: not a RIFF/WAVE container");

  std::optional<PcmLayout> layout;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::uint32_t size = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    const std::string where = "'" + id + "' chunk";

    if (id == "fmt ") {
      if (size < 16 || body + 16 > bytes.size())
        throw DecodeError(where + ": too short at byte offset " + std::to_string(body));
      std::uint16_t tag = read_u16(bytes.data() + body);
      PcmLayout l;
      l.channels = read_u16(bytes.data() + body + 2);
      l.sample_rate = read_u32(bytes.data() + body + 4);
      const std::uint16_t block_align = read_u16(bytes.data() + body + 12);
      l.bits = read_u16(bytes.data() + body + 14);
      if (tag == 0xFFFE) {
        if (size < 40 || body + 26 > bytes.size())
          throw DecodeError(where + ": extensible format block too short");
        tag = read_u16(bytes.data() + body + 24);  // first two bytes of the sub-format GUID
      }
      if (tag != 1)
        throw DecodeError(where + ": unsupported codec (format tag " + std::to_string(tag) +
                          "); only integer PCM is supported");
      detail::check_width(l.bits, where);
      if (l.channels == 0) throw DecodeError(where + ": zero channels");
      if (l.sample_rate == 0) throw DecodeError(where + ": zero sample rate");
      if (block_align != l.frame_bytes())
        throw DecodeError(where + ": block align " + std::to_string(block_align) +
                          " inconsistent with " + std::to_string(l.channels) + " x " +
                          std::to_string(l.bits) + "-bit frames");
      layout = l;
    } else if (id == "data") {
      if (!layout) throw DecodeError("'data' chunk: appears before the 'fmt ' chunk");
      if (body + size > bytes.size())
        throw DecodeError(where + ": truncated; declares " + std::to_string(size) +
                          " bytes but the file ends at byte offset " + std::to_string(bytes.size()) +
                          " (data starts at " + std::to_string(body) + ")");
      return detail::deinterleave(bytes.subspan(body, size), *layout, body, where);
    }
    pos = body + size + (size & 1u);
  }
  if (!layout) throw DecodeError("'fmt ' chunk: missing");
  throw DecodeError("'data' chunk: missing");
}

/// Headerless little-endian signed PCM with an explicit layout.
[[nodiscard]] inline PcmData decode_raw(std::span<const std::uint8_t> bytes, const PcmLayout& layout) {
  detail::check_width(layout.bits, "raw PCM");
  detail::require(layout.channels > 0, "raw PCM: channel count must be positive");
  detail::require(layout.sample_rate > 0, "raw PCM: sample rate must be positive");
  return detail::deinterleave(bytes, layout, 0, "raw PCM");
}

/// Reads a WAV file, or a raw PCM file when `raw` is given.
[[nodiscard]] inline PcmData read_pcm(const std::filesystem::path& path,
                                      const std::optional<PcmLayout>& raw = std::nullopt) {
  const auto bytes = detail::read_bytes(path);
  PcmData d = raw ? decode_raw(bytes, *raw) : decode_wav(bytes);
  if (d.frames() == 0) throw DecodeError("'" + path.string() + "': no sample frames");
  return d;
}

[[nodiscard]] inline Signal select_channel(PcmData pcm, std::size_t channel, const std::string& source) {
  if (channel >= pcm.channels.size())
    throw ArgumentError("channel " + std::to_string(channel) + " out of range (file has " +
                        std::to_string(pcm.channels.size()) + " channel(s))");
  return Signal(std::move(pcm.channels[channel]), pcm.layout.sample_rate,
                source + "#ch" + std::to_string(channel));
}

/// Loads one zero-based channel as amplitudes in [-1, 1).
[[nodiscard]] inline Signal load_pcm(const std::filesystem::path& path, std::size_t channel = 0,
                                     const std::optional<PcmLayout>& raw = std::nullopt) {
  return select_channel(read_pcm(path, raw), channel, path.filename().string());
}

/// Peak amplitude of every channel, and the index of the largest.
struct ChannelPeaks {
  std::vector<double> peaks;
  std::size_t loudest = 0;
};

[[nodiscard]] inline ChannelPeaks channel_peaks(const PcmData& pcm) {
  ChannelPeaks out;
  for (const auto& ch : pcm.channels) out.peaks.push_back(peak(ch));
  out.loudest = static_cast<std::size_t>(
      std::distance(out.peaks.begin(), std::max_element(out.peaks.begin(), out.peaks.end())));
  return out;
}

/// Quantizes to 16-bit (round to nearest, clamped to [-32768, 32767]).
[[nodiscard]] inline std::int16_t quantize16(double x) {
  const double v = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

[[nodiscard]] inline std::vector<std::uint8_t> encode_wav16(const Signal& signal) {
  const auto x = signal.samples();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(x.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  auto put = [&](std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  };
  auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
  tag("RIFF");
  put(36 + data_bytes, 4);
  tag("WAVE");
  tag("fmt ");
  put(16, 4);
  put(1, 2);  // PCM
  put(1, 2);  // mono
  put(signal.sample_rate(), 4);
  put(signal.sample_rate() * 2, 4);
  put(2, 2);
  put(16, 2);
  tag("data");
  put(data_bytes, 4);
  for (double v : x) put(static_cast<std::uint16_t>(quantize16(v)), 2);
  return out;
}

inline void write_wav16(const std::filesystem::path& path, const Signal& signal) {
  const auto bytes = encode_wav16(signal);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DecodeError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DecodeError("write failed for '" + path.string() + "'");
}

inline constexpr double kDefaultTrimDb = -60.0;

/// Drops leading and trailing 10 ms frames whose RMS level does not exceed
/// `threshold_db`. Frames are aligned to the start of the signal, so trimming
/// an already trimmed signal is the identity.
[[nodiscard]] inline Signal trim_silence(const Signal& signal, double threshold_db = kDefaultTrimDb) {
  detail::require(threshold_db <= 0.0, "trim_silence: threshold must be <= 0 dBFS");
  const auto x = signal.samples();
  const std::size_t frame =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.01 * signal.sample_rate())));
  const std::size_t nframes = (x.size() + frame - 1) / frame;

  auto loud = [&](std::size_t f) {
    const auto seg = x.subspan(f * frame, std::min(frame, x.size() - f * frame));
    return dbfs(rms_power(seg)) > threshold_db;
  };
  std::size_t first = 0;
  while (first < nframes && !loud(first)) ++first;
  if (first == nframes)
    throw EstimationError("trim_silence: every 10 ms frame is at or below " +
                          format_dbfs(threshold_db) + " (all-silent input)");
  std::size_t last = nframes - 1;
  while (!loud(last)) --last;

  const std::size_t begin = first * frame;
  const std::size_t end = std::min(x.size(), (last + 1) * frame);
  if (begin == 0 && end == x.size()) return signal;
  return signal.derive(std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(begin),
                                           x.begin() + static_cast<std::ptrdiff_t>(end)),
                       "trim(" + format_dbfs(threshold_db, 1) + ")");
}

}  // namespace mesdr
