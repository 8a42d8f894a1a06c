#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/traffic.hpp"

namespace wflab {

// WFDS file, little-endian:
//   magic "WFDS", u16 version=1, u32 sample_count, u16 window_len,
//   then per sample: u16 site_label, u16 env_id,
//   window_len*2 float32 interleaved (jitter_us, size_bytes).
inline constexpr std::uint16_t kDatasetVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool read_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) return false;
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

}  // namespace detail

inline void write_dataset(std::ostream& out, const std::vector<SampleVector>& samples) {
  std::uint16_t window_len =
      samples.empty() ? static_cast<std::uint16_t>(kWindowLen)
                      : static_cast<std::uint16_t>(samples.front().window_len());
  out.write("WFDS", 4);
  detail::write_le(out, kDatasetVersion);
  detail::write_le(out, static_cast<std::uint32_t>(samples.size()));
  detail::write_le(out, window_len);
  for (const auto& s : samples) {
    if (s.window_len() != window_len)
      throw DataError("write_dataset: inconsistent window length");
    detail::write_le(out, static_cast<std::uint16_t>(s.site_label));
    detail::write_le(out, static_cast<std::uint16_t>(s.env_id));
    for (float v : s.values) detail::write_le(out, v);
  }
}

inline void write_dataset_file(const std::string& path, const std::vector<SampleVector>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_dataset: cannot open " + path);
  write_dataset(out, samples);
  if (!out) throw DataError("write_dataset: write failed for " + path);
}

inline std::vector<SampleVector> read_dataset(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "WFDS", 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "read_dataset: bad magic");
  std::uint16_t version = 0;
  if (!detail::read_le(in, version))
    throw FormatError(FormatError::Kind::Truncated, "read_dataset: truncated header");
  if (version != kDatasetVersion)
    throw FormatError(FormatError::Kind::VersionMismatch,
                      "read_dataset: unsupported version " + std::to_string(version));
  std::uint32_t count = 0;
  std::uint16_t window_len = 0;
  if (!detail::read_le(in, count) || !detail::read_le(in, window_len))
    throw FormatError(FormatError::Kind::Truncated, "read_dataset: truncated header");
  std::vector<SampleVector> samples;
  samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SampleVector s;
    std::uint16_t site = 0, env = 0;
    if (!detail::read_le(in, site) || !detail::read_le(in, env))
      throw FormatError(FormatError::Kind::Truncated,
                        "read_dataset: truncated at sample " + std::to_string(i));
    s.site_label = site;
    s.env_id = env;
    s.values.resize(static_cast<size_t>(window_len) * 2);
    for (auto& v : s.values) {
      if (!detail::read_le(in, v))
        throw FormatError(FormatError::Kind::Truncated,
                          "read_dataset: truncated at sample " + std::to_string(i));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::vector<SampleVector> read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_dataset: cannot open " + path);
  return read_dataset(in);
}

}  // namespace wflab
