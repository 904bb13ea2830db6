#include "candfuse/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace candfuse {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', '0', '0', '0', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

const Mat* LoadedCheckpoint::find(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return &m;
  return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const ad::ParamStore& store) {
  nlohmann::json j;
  j["format_version"] = header.format_version;
  j["kind"] = header.kind;
  j["vocab_hash"] = header.vocab_hash;
  j["config"] = header.config;
  nlohmann::json arrays = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : store.entries()) {
    nlohmann::json a;
    a["name"] = e.name;
    a["rows"] = e.value.rows();
    a["cols"] = e.value.cols();
    a["offset"] = offset;
    arrays.push_back(std::move(a));
    offset += static_cast<uint64_t>(e.value.size()) * sizeof(double);
  }
  j["arrays"] = std::move(arrays);
  std::string head = j.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp);
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, head.size());
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& e : store.entries()) {
      // Row-major scalar order so the header's (rows, cols) fully fixes layout.
      for (int r = 0; r < e.value.rows(); ++r)
        for (int c = 0; c < e.value.cols(); ++c) {
          double v = e.value(r, c);
          out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    }
    if (!out) throw std::runtime_error("short write to checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t head_len = read_u64(in);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header: " + path + ": " + e.what());
  }
  LoadedCheckpoint ckpt;
  ckpt.header.format_version = j.at("format_version").get<int>();
  if (ckpt.header.format_version != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  ckpt.header.kind = j.at("kind").get<std::string>();
  ckpt.header.vocab_hash = j.at("vocab_hash").get<uint64_t>();
  ckpt.header.config =
      j.at("config").get<std::map<std::string, std::string>>();
  std::streampos payload_start = in.tellg();
  for (const auto& a : j.at("arrays")) {
    std::string name = a.at("name").get<std::string>();
    long rows = a.at("rows").get<long>();
    long cols = a.at("cols").get<long>();
    uint64_t offset = a.at("offset").get<uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(r, c) = v;
      }
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
    ckpt.arrays.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void restore_params(const LoadedCheckpoint& ckpt, ad::ParamStore& store) {
  for (auto& e : store.entries()) {
    const Mat* m = ckpt.find(e.name);
    if (!m)
      throw std::runtime_error("checkpoint missing parameter: " + e.name);
    if (m->rows() != e.value.rows() || m->cols() != e.value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + e.name);
    e.value = *m;
  }
  if (ckpt.arrays.size() != store.entries().size())
    throw std::runtime_error("checkpoint has extra parameter arrays");
}

}  // namespace candfuse
