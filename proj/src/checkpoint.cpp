#include "msp/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "msp/errors.hpp"

namespace msp {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'P', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json layout_to_json(const ParamLayout& layout) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : layout.blocks()) {
    rows.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
  }
  return rows;
}

ParamLayout layout_from_json(const nlohmann::json& j) {
  ParamLayout layout;
  for (const auto& row : j) {
    const auto b = layout.add(row.at("name").get<std::string>(), row.at("rows").get<std::size_t>(),
                              row.at("cols").get<std::size_t>());
    if (b.offset != row.at("offset").get<std::size_t>()) throw ParseError("checkpoint layout offsets are inconsistent");
  }
  return layout;
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector& theta, nlohmann::json meta) {
  meta["layout"] = layout_to_json(theta.layout());
  meta["layout_hash"] = hash_hex(theta.layout().hash());
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, Checkpoint::kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_le<std::uint64_t>(out, theta.size());
  for (Eigen::Index i = 0; i < theta.values().size(); ++i) put_le<double>(out, theta.values()(i));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != Checkpoint::kVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto meta_len = get_le<std::uint64_t>(in, "metadata length");
  if (meta_len > (1ULL << 30)) throw ParseError("checkpoint metadata length is implausible");
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(meta_len))) throw ParseError("checkpoint metadata truncated");
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  ParamLayout layout = layout_from_json(ck.meta.at("layout"));
  if (hash_hex(layout.hash()) != ck.meta.value("layout_hash", "")) throw ParseError("checkpoint layout hash mismatch");
  const auto count = get_le<std::uint64_t>(in, "parameter count");
  if (count != layout.size()) {
    throw ParseError("checkpoint holds " + std::to_string(count) + " parameters, layout declares " +
                     std::to_string(layout.size()));
  }
  Vec values(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = get_le<double>(in, "parameters");
  ck.theta = ParamVector(std::move(layout), std::move(values));
  return ck;
}

}  // namespace msp
