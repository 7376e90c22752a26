#pragma once

// Checkpoint container for ParamSet and the key=value run manifest.
// Byte layout is described in docs/formats.md.

#include "metahdr/unet.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace metahdr {

inline constexpr char kCheckpointMagic[8] = {'M', 'H', 'D', 'R', 'P', 'R', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Values are stored as 32-bit floats regardless of T.
template <class T>
void write_checkpoint(std::ostream& os, const ParamSet<T>& params);
template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params);

/// Throws ParseError on malformed or truncated input.
ParamSet<float> read_checkpoint(std::istream& is);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError naming every tensor whose name or shape differs from
/// the schema of `expected`.
void check_schema(const UNetConfig& expected, const ParamSet<float>& params);

using Manifest = std::vector<std::pair<std::string, std::string>>;

/// One `key=value` line per entry, in order.
void write_manifest(const std::filesystem::path& path, const Manifest& entries);
/// Blank lines and lines starting with '#' are ignored.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace metahdr
