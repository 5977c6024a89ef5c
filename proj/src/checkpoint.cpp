#include "relx/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "relx/error.hpp"

namespace relx {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'X', 'C', 'K', '0', '1'};

void write_u64(std::ostream& os, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw FormatError("checkpoint truncated", 0);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

std::string read_manifest_text(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw FormatError("not a checkpoint file (bad magic)", 0);
  uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("checkpoint truncated in manifest", 0);
  return text;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const nlohmann::ordered_json& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  std::string text = manifest.dump();
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_u64(os, store.size());
  for (const auto& e : store.entries()) {
    write_u64(os, e.name.size());
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u64(os, e.value.rows());
    write_u64(os, e.value.cols());
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!os) throw ConfigError("write failed for checkpoint: " + path);
}

nlohmann::ordered_json read_checkpoint_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read checkpoint: " + path);
  std::string text = read_manifest_text(is);
  auto parsed = nlohmann::ordered_json::parse(text, nullptr, false);
  if (parsed.is_discarded()) throw FormatError("checkpoint manifest is not valid JSON", 0);
  return parsed;
}

nlohmann::ordered_json load_checkpoint(const std::string& path, ParameterStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read checkpoint: " + path);
  std::string text = read_manifest_text(is);
  auto manifest = nlohmann::ordered_json::parse(text, nullptr, false);
  if (manifest.is_discarded()) throw FormatError("checkpoint manifest is not valid JSON", 0);

  uint64_t n = read_u64(is);
  if (n != store.size())
    throw ValidationError("checkpoint holds " + std::to_string(n) + " tensors, model expects " +
                          std::to_string(store.size()));
  for (auto& e : store.entries()) {
    uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t rows = read_u64(is);
    uint64_t cols = read_u64(is);
    if (!is) throw FormatError("checkpoint truncated in tensor header", 0);
    if (name != e.name)
      throw ValidationError("checkpoint tensor '" + name + "' does not match expected '" +
                            e.name + "'");
    if (rows != e.value.rows() || cols != e.value.cols())
      throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            ", model expects " + std::to_string(e.value.rows()) + "x" +
                            std::to_string(e.value.cols()));
    is.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    if (!is) throw FormatError("checkpoint truncated in tensor data", 0);
  }
  return manifest;
}

}  // namespace relx
