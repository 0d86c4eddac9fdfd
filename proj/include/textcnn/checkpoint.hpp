#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "textcnn/model.hpp"

namespace textcnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Container layout (all integers little-endian):
//   8 bytes   magic "TXTCNNCK"
//   u32       format version
//   u64       header length L
//   L bytes   JSON header: config, epoch, bn tracked-batch counts, and a
//             tensor table [{name, shape, offset}] (offset in doubles)
//   doubles   every tensor's data, IEEE-754 binary64 little-endian
//   u64       FNV-1a hash over all preceding bytes
void write_checkpoint(const Model& model, std::ostream& out);
Model read_checkpoint(std::istream& in);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace textcnn
