#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "curriculum.hpp"
#include "policy.hpp"

namespace crowdmapf {

// File layout:
//   line 1: "crowdmapf-checkpoint 1"
//   line 2: one-line JSON header (layout descriptor, curriculum state, run metadata)
//   rest:   param_count IEEE-754 doubles, little-endian

inline constexpr const char* kCheckpointMagic = "crowdmapf-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PolicyParams params;
  std::optional<CurriculumState> curriculum;
  nlohmann::json meta = nlohmann::json::object();  // episodes done, RNG states, config snapshot

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.curriculum == b.curriculum && a.meta == b.meta;
  }
};

inline nlohmann::json layout_descriptor() {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : net::kLayout)
    blocks.push_back({{"name", std::string(b.name)}, {"offset", b.offset}, {"size", b.size}});
  return blocks;
}

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  nlohmann::json header = {{"layout", layout_descriptor()},
                           {"param_count", net::kParamCount},
                           {"curriculum", ck.curriculum ? to_json(*ck.curriculum) : nlohmann::json(nullptr)},
                           {"meta", ck.meta}};
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  std::vector<char> raw(ck.params.size() * sizeof(std::uint64_t));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    std::uint64_t bits = detail::to_little(std::bit_cast<std::uint64_t>(ck.params[i]));
    std::memcpy(raw.data() + i * sizeof bits, &bits, sizeof bits);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string magic_line, header_line;
  if (!std::getline(in, magic_line)) throw std::runtime_error("checkpoint: empty file");
  std::istringstream ms(magic_line);
  std::string magic;
  int version = 0;
  ms >> magic >> version;
  if (magic != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic '" + magic + "'");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  if (!std::getline(in, header_line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.at("param_count").get<std::size_t>() != net::kParamCount || header.at("layout") != layout_descriptor())
    throw std::runtime_error("checkpoint: parameter layout mismatch");

  Checkpoint ck;
  std::vector<char> raw(net::kParamCount * sizeof(std::uint64_t));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error("checkpoint: truncated values");
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");
  for (std::size_t i = 0; i < net::kParamCount; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, raw.data() + i * sizeof bits, sizeof bits);
    ck.params[i] = std::bit_cast<double>(detail::to_little(bits));
  }
  if (!ck.params.all_finite()) throw std::runtime_error("checkpoint: non-finite parameter values");
  if (!header.at("curriculum").is_null()) ck.curriculum = curriculum_from_json(header.at("curriculum"));
  ck.meta = header.at("meta");
  return ck;
}

/// Writes to a sibling temp file and renames, so a failed write never clobbers the last good file.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp);
    write_checkpoint(out, ck);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace crowdmapf
