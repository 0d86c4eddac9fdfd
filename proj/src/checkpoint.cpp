#include "textcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "json.hpp"
#include "model_json.hpp"

#include "textcnn/error.hpp"

namespace textcnn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'X', 'T', 'C', 'N', 'N', 'C', 'K'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const Model& model, std::ostream& out) {
  Model copy = model;
  const std::vector<NamedTensor> tensors = all_tensors(copy);
  json header;
  header["config"] = model_config_to_json(model.config);
  header["epoch"] = model.epoch;
  json tracked = json::array();
  for (const Tower& t : model.towers) tracked.push_back({t.bn1.tracked_batches, t.bn2.tracked_batches});
  header["bn_tracked_batches"] = tracked;
  json table = json::array();
  std::size_t offset = 0;
  for (const NamedTensor& t : tensors) {
    table.push_back({{"name", t.name}, {"shape", t.tensor->shape()}, {"offset", offset}});
    offset += t.tensor->size();
  }
  header["tensors"] = table;
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u32(bytes, kCheckpointVersion);
  put_u64(bytes, header_text.size());
  bytes += header_text;
  for (const NamedTensor& t : tensors)
    for (double v : t.tensor->values()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  put_u64(bytes, fnv1a(bytes));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed to write checkpoint");
}

Model read_checkpoint(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("corrupt checkpoint: bad magic or truncated file");
  }
  const std::uint32_t version = get_u32(bytes, sizeof kMagic);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::size_t pos = sizeof kMagic + 4;
  if (bytes.size() < pos + 8 + 8) throw CheckpointError("corrupt checkpoint: truncated header");
  const std::uint64_t header_len = get_u64(bytes, pos);
  pos += 8;
  if (header_len > bytes.size() - pos - 8) throw CheckpointError("corrupt checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: bad header: ") + e.what());
  }
  pos += header_len;

  Model model;
  try {
    model = build_model(model_config_from_json(header.at("config")), header.at("config").at("seed"));
    model.epoch = header.at("epoch");
    const json& tracked = header.at("bn_tracked_batches");
    if (tracked.size() != model.towers.size()) throw CheckpointError("corrupt checkpoint: tower count");
    for (std::size_t i = 0; i < model.towers.size(); ++i) {
      model.towers[i].bn1.tracked_batches = tracked[i][0];
      model.towers[i].bn2.tracked_batches = tracked[i][1];
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }

  const std::vector<NamedTensor> tensors = all_tensors(model);
  const json& table = header.at("tensors");
  if (table.size() != tensors.size()) throw CheckpointError("corrupt checkpoint: tensor table size");
  std::size_t total = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (table[i].at("name") != tensors[i].name ||
        table[i].at("shape").get<std::vector<std::size_t>>() != tensors[i].tensor->shape() ||
        table[i].at("offset").get<std::size_t>() != total) {
      throw CheckpointError("corrupt checkpoint: tensor table mismatch at " + tensors[i].name);
    }
    total += tensors[i].tensor->size();
  }
  if (bytes.size() != pos + total * 8 + 8) throw CheckpointError("corrupt checkpoint: truncated tensor data");
  if (get_u64(bytes, bytes.size() - 8) != fnv1a(bytes.substr(0, bytes.size() - 8))) {
    throw CheckpointError("corrupt checkpoint: checksum mismatch");
  }
  for (const NamedTensor& t : tensors) {
    for (double& v : t.tensor->values()) {
      v = std::bit_cast<double>(get_u64(bytes, pos));
      pos += 8;
    }
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(model, out);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace textcnn
