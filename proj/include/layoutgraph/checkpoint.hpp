#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iterator>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "layoutgraph/autograd.hpp"
#include "layoutgraph/error.hpp"
#include "layoutgraph/nn.hpp"

// Versioned binary checkpoint container: a JSON metadata block followed by
// named float64 arrays (row-major, little-endian), closed by a checksum of
// everything before it. Both training stages and the visual encoder share
// this format; they differ only in metadata and array names.
namespace layoutgraph::ckpt {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'L', 'G', 'C', 'K', 'P', 'T', '0', '\n'};

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Content hash used to tie a Stage-II checkpoint to the exact Stage-I
// checkpoint it was trained against.
inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(reinterpret_cast<const unsigned char*>(buf),
              static_cast<std::size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, ad::Matrix>> arrays;

  void add(const std::string& name, const ad::Matrix& m) {
    if (find(name)) throw CheckpointError("duplicate checkpoint array: " + name);
    arrays.emplace_back(name, m);
  }

  const ad::Matrix* find(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return &m;
    return nullptr;
  }

  const ad::Matrix& at(const std::string& name) const {
    const auto* m = find(name);
    if (!m) throw CheckpointError("checkpoint is missing array: " + name);
    return *m;
  }
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::vector<unsigned char>& out, double d) {
  std::uint64_t v;
  static_assert(sizeof(v) == sizeof(d));
  std::memcpy(&v, &d, sizeof(v));
  put_u64(out, v);
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n, std::string path)
      : data_(data), n_(n), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, sizeof(d));
    return d;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > n_) throw CheckpointError("truncated checkpoint: " + path_);
  }

  const unsigned char* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::vector<unsigned char> serialize(const Checkpoint& c) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  const std::string meta = c.metadata.dump();
  put_u64(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());
  put_u64(out, c.arrays.size());
  for (const auto& [name, m] : c.arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 8);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
  }
  put_u64(out, fnv1a(out.data(), out.size()));
  return out;
}

}  // namespace detail

// Atomic write: serialize to a sibling temp file, then rename over the
// target, so an interrupted save never clobbers the previous checkpoint.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const auto bytes = detail::serialize(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace checkpoint " + path + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kCheckpointMagic) + 4 + 8)
    throw CheckpointError("truncated checkpoint: " + path);

  detail::Reader r(bytes.data(), bytes.size(), path);
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw CheckpointError("not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + ": " +
                          path);

  const std::uint64_t stored = fnv1a(bytes.data(), bytes.size() - 8);
  detail::Reader tail(bytes.data() + bytes.size() - 8, 8, path);
  if (tail.u64() != stored) throw CheckpointError("corrupt checkpoint (checksum mismatch): " + path);

  Checkpoint c;
  const std::uint64_t meta_len = r.u64();
  const std::string meta = r.bytes(meta_len);
  c.metadata = nlohmann::json::parse(meta, nullptr, false);
  if (c.metadata.is_discarded())
    throw CheckpointError("corrupt checkpoint metadata: " + path);

  const std::uint64_t count = r.u64();
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    if (rows < 0 || cols < 0 || r.remaining() < static_cast<std::size_t>(rows) * cols * 8)
      throw CheckpointError("truncated checkpoint: " + path);
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    c.add(name, m);
  }
  if (r.remaining() != 8) throw CheckpointError("trailing bytes in checkpoint: " + path);
  return c;
}

inline constexpr const char* kParamPrefix = "param.";
inline constexpr const char* kAdamPrefix = "adam.";

inline void pack_params(const nn::ParamStore& store, Checkpoint* c,
                        const std::string& prefix = kParamPrefix) {
  for (std::size_t i = 0; i < store.size(); ++i)
    c->add(prefix + store.names()[i], store.params()[i]->value);
}

// Strict: every parameter in the store must be present with its exact shape.
inline void unpack_params(const Checkpoint& c, nn::ParamStore* store,
                          const std::string& prefix = kParamPrefix) {
  for (std::size_t i = 0; i < store->size(); ++i) {
    const std::string& name = store->names()[i];
    const auto& m = c.at(prefix + name);
    auto& p = store->params()[i];
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw CheckpointError("checkpoint array " + prefix + name + " has shape " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    p->value = m;
  }
}

// Optimizer state rides along so a resumed run continues the exact
// trajectory instead of restarting the moment estimates from zero.
inline void pack_adam(const nn::Adam& adam, const nn::ParamStore& store, Checkpoint* c,
                      const std::string& prefix = kAdamPrefix) {
  ad::Matrix step(1, 1);
  step(0, 0) = static_cast<double>(adam.step_count());
  c->add(prefix + "step", step);
  for (std::size_t i = 0; i < store.size(); ++i) {
    c->add(prefix + "m." + store.names()[i], adam.first_moments()[i]);
    c->add(prefix + "v." + store.names()[i], adam.second_moments()[i]);
  }
}

inline void unpack_adam(const Checkpoint& c, nn::Adam* adam, const nn::ParamStore& store,
                        const std::string& prefix = kAdamPrefix) {
  const auto& step = c.at(prefix + "step");
  if (step.size() != 1) throw CheckpointError("checkpoint array " + prefix + "step must be 1x1");
  adam->set_step_count(static_cast<std::int64_t>(step(0, 0)));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.names()[i];
    const auto& m = c.at(prefix + "m." + name);
    const auto& v = c.at(prefix + "v." + name);
    auto& mi = adam->first_moments()[i];
    auto& vi = adam->second_moments()[i];
    if (m.rows() != mi.rows() || m.cols() != mi.cols() || v.rows() != vi.rows() ||
        v.cols() != vi.cols())
      throw CheckpointError("optimizer state shape mismatch for " + name);
    mi = m;
    vi = v;
  }
}

inline bool has_adam(const Checkpoint& c, const std::string& prefix = kAdamPrefix) {
  return c.find(prefix + "step") != nullptr;
}

}  // namespace layoutgraph::ckpt
