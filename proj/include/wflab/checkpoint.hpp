#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/dataset_io.hpp"
#include "wflab/error.hpp"
#include "wflab/model.hpp"

namespace wflab {

// WFCK checkpoint, little-endian:
//   magic "WFCK", u16 version=1, u64 architecture fingerprint,
//   u32 section count, then sections of (4-char tag, u64 length, payload).
// Sections: ARCH (config text), PRMS (named float32 blobs incl BN running
// stats), NORM, LABL, MASK, MANI; OPTS is optional.
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline ArchitectureConfig parse_architecture_text(const std::string& text) {
  ArchitectureConfig cfg;
  cfg.blocks.clear();
  cfg.fc_hidden.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, line.find_last_not_of(" \t", eq - 1) + 1);
    auto vstart = line.find_first_not_of(" \t", eq + 1);
    std::string value = vstart == std::string::npos ? "" : line.substr(vstart);
    auto parse_ints = [](const std::string& v, char sep) {
      std::vector<long> out;
      std::istringstream items(v);
      std::string item;
      while (std::getline(items, item, sep))
        if (!item.empty() && item.find_first_not_of(" \t") != std::string::npos)
          out.push_back(std::stol(item));
      return out;
    };
    if (key == "preset")
      cfg.preset = preset_from_string(value);
    else if (key == "in_channels")
      cfg.in_channels = std::stoi(value);
    else if (key == "input_len")
      cfg.input_len = std::stoi(value);
    else if (key == "class_count")
      cfg.class_count = std::stoi(value);
    else if (key == "domain_count")
      cfg.domain_count = std::stoi(value);
    else if (key == "stem") {
      auto t = parse_ints(value, ':');
      if (t.size() != 3) throw FormatError(FormatError::Kind::Corrupt, "checkpoint: bad stem");
      cfg.stem_channels = static_cast<int>(t[0]);
      cfg.stem_kernel = static_cast<int>(t[1]);
      cfg.stem_stride = static_cast<int>(t[2]);
    } else if (key == "kernel")
      cfg.kernel = std::stoi(value);
    else if (key == "blocks") {
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        auto t = parse_ints(item, ':');
        if (t.size() != 3) throw FormatError(FormatError::Kind::Corrupt, "checkpoint: bad block");
        cfg.blocks.push_back({static_cast<int>(t[0]), static_cast<int>(t[1]),
                              static_cast<int>(t[2])});
      }
    } else if (key == "fc_hidden") {
      for (long v : parse_ints(value, ',')) cfg.fc_hidden.push_back(static_cast<int>(v));
    } else if (key == "domain_hidden")
      cfg.domain_hidden = std::stoi(value);
    else
      throw FormatError(FormatError::Kind::Corrupt, "checkpoint: unknown arch key " + key);
  }
  cfg.validate();
  return cfg;
}

namespace detail {

inline void write_section(std::ostream& out, const char tag[4], const std::string& payload) {
  out.write(tag, 4);
  write_le(out, static_cast<std::uint64_t>(payload.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

template <class T>
std::string params_payload(Network<T>& net) {
  std::ostringstream out(std::ios::binary);
  auto params = net.params();
  write_le(out, static_cast<std::uint32_t>(params.size()));
  for (auto* p : params) {
    write_le(out, static_cast<std::uint16_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_le(out, static_cast<std::uint8_t>(p->shape.size()));
    for (int d : p->shape) write_le(out, static_cast<std::uint32_t>(d));
    for (T v : p->value) write_le(out, static_cast<float>(v));
  }
  return out.str();
}

}  // namespace detail

inline void save_model(std::ostream& out, const TrainedModel& model) {
  out.write("WFCK", 4);
  detail::write_le(out, kCheckpointVersion);
  detail::write_le(out, model.arch.fingerprint());
  detail::write_le(out, static_cast<std::uint32_t>(6));
  detail::write_section(out, "ARCH", model.arch.to_text());
  detail::write_section(out, "PRMS", detail::params_payload(*model.net));
  {
    std::ostringstream p(std::ios::binary);
    detail::write_le(p, model.norm.jitter_mean);
    detail::write_le(p, model.norm.jitter_std);
    detail::write_le(p, model.norm.size_mean);
    detail::write_le(p, model.norm.size_std);
    detail::write_le(p, model.norm.epsilon);
    detail::write_section(out, "NORM", p.str());
  }
  {
    std::ostringstream p(std::ios::binary);
    detail::write_le(p, static_cast<std::uint32_t>(model.label_table.size()));
    for (int l : model.label_table) detail::write_le(p, static_cast<std::int32_t>(l));
    detail::write_section(out, "LABL", p.str());
  }
  {
    std::ostringstream p(std::ios::binary);
    detail::write_le(p, static_cast<std::uint8_t>(model.mask));
    detail::write_section(out, "MASK", p.str());
  }
  detail::write_section(out, "MANI", model.manifest);
}

inline void save_model_file(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_model: cannot open " + path);
  save_model(out, model);
  if (!out) throw DataError("save_model: write failed for " + path);
}

inline TrainedModel load_model(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "WFCK", 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "load_model: bad magic");
  std::uint16_t version = 0;
  std::uint64_t fingerprint = 0;
  std::uint32_t n_sections = 0;
  if (!detail::read_le(in, version))
    throw FormatError(FormatError::Kind::Truncated, "load_model: truncated header");
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::VersionMismatch,
                      "load_model: unsupported version " + std::to_string(version));
  if (!detail::read_le(in, fingerprint) || !detail::read_le(in, n_sections))
    throw FormatError(FormatError::Kind::Truncated, "load_model: truncated header");
  std::map<std::string, std::string> sections;
  for (std::uint32_t i = 0; i < n_sections; ++i) {
    char tag[5] = {0};
    in.read(tag, 4);
    std::uint64_t len = 0;
    if (in.gcount() != 4 || !detail::read_le(in, len))
      throw FormatError(FormatError::Kind::Truncated, "load_model: truncated section table");
    std::string payload(len, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len))
      throw FormatError(FormatError::Kind::Truncated,
                        "load_model: truncated section " + std::string(tag));
    sections[tag] = std::move(payload);
  }
  for (const char* required : {"ARCH", "PRMS", "NORM", "LABL", "MASK"})
    if (!sections.count(required))
      throw FormatError(FormatError::Kind::Corrupt,
                        "load_model: missing section " + std::string(required));

  TrainedModel model;
  model.arch = parse_architecture_text(sections["ARCH"]);
  if (model.arch.fingerprint() != fingerprint)
    throw FormatError(FormatError::Kind::Corrupt,
                      "load_model: architecture fingerprint mismatch");
  model.net = std::make_shared<Network<float>>(model.arch);

  {
    std::istringstream p(sections["PRMS"], std::ios::binary);
    std::uint32_t n_params = 0;
    if (!detail::read_le(p, n_params))
      throw FormatError(FormatError::Kind::Truncated, "load_model: truncated params");
    auto params = model.net->params();
    if (n_params != params.size())
      throw FormatError(FormatError::Kind::Corrupt,
                        "load_model: parameter count does not match architecture");
    for (auto* param : params) {
      std::uint16_t name_len = 0;
      if (!detail::read_le(p, name_len))
        throw FormatError(FormatError::Kind::Truncated, "load_model: truncated params");
      std::string name(name_len, '\0');
      p.read(name.data(), name_len);
      if (p.gcount() != name_len || name != param->name)
        throw FormatError(FormatError::Kind::Corrupt,
                          "load_model: parameter name mismatch: expected " + param->name);
      std::uint8_t ndim = 0;
      if (!detail::read_le(p, ndim) || ndim != param->shape.size())
        throw FormatError(FormatError::Kind::Corrupt,
                          "load_model: parameter shape mismatch for " + param->name);
      for (size_t d = 0; d < ndim; ++d) {
        std::uint32_t dim = 0;
        if (!detail::read_le(p, dim) || static_cast<int>(dim) != param->shape[d])
          throw FormatError(FormatError::Kind::Corrupt,
                            "load_model: parameter shape mismatch for " + param->name);
      }
      for (auto& v : param->value) {
        float f;
        if (!detail::read_le(p, f))
          throw FormatError(FormatError::Kind::Truncated,
                            "load_model: truncated data for " + param->name);
        v = f;
      }
    }
  }
  {
    std::istringstream p(sections["NORM"], std::ios::binary);
    if (!detail::read_le(p, model.norm.jitter_mean) || !detail::read_le(p, model.norm.jitter_std) ||
        !detail::read_le(p, model.norm.size_mean) || !detail::read_le(p, model.norm.size_std) ||
        !detail::read_le(p, model.norm.epsilon))
      throw FormatError(FormatError::Kind::Truncated, "load_model: truncated NORM section");
  }
  {
    std::istringstream p(sections["LABL"], std::ios::binary);
    std::uint32_t n = 0;
    if (!detail::read_le(p, n))
      throw FormatError(FormatError::Kind::Truncated, "load_model: truncated LABL section");
    model.label_table.resize(n);
    for (auto& l : model.label_table) {
      std::int32_t v = 0;
      if (!detail::read_le(p, v))
        throw FormatError(FormatError::Kind::Truncated, "load_model: truncated LABL section");
      l = v;
    }
  }
  {
    std::istringstream p(sections["MASK"], std::ios::binary);
    std::uint8_t m = 0;
    if (!detail::read_le(p, m) || m > 2)
      throw FormatError(FormatError::Kind::Corrupt, "load_model: bad MASK section");
    model.mask = static_cast<ChannelMask>(m);
  }
  model.manifest = sections.count("MANI") ? sections["MANI"] : "";
  model.net->mark_bn_stats_loaded();
  return model;
}

inline TrainedModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_model: cannot open " + path);
  return load_model(in);
}

}  // namespace wflab
