#include "cada/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cada {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
public:
  explicit Writer(const std::filesystem::path& p) : out_(p, std::ios::binary) {
    if (!out_) throw TensorError("checkpoint: cannot open " + p.string() + " for writing");
  }
  template <typename T>
  void put(T v) {
    v = to_le(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish(const std::filesystem::path& p) {
    out_.flush();
    if (!out_) throw TensorError("checkpoint: write failed for " + p.string());
  }

private:
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p.string()) {
    if (!in_) throw TensorError("checkpoint: cannot open " + path_);
  }
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw TensorError("checkpoint: truncated file " + path_);
    return to_le(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw TensorError("checkpoint: truncated string in " + path_);
    return s;
  }

private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     std::span<const Parameter* const> params) {
  Writer w(path);
  w.raw("CADA", 4);
  w.put(header.version);
  w.put(header.seed);
  w.put_string(header.config_text);
  w.put_string(header.vocabulary_text);
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.put_string(p->name);
    w.put(std::uint32_t{2});
    w.put(static_cast<std::uint64_t>(p->value.rows()));
    w.put(static_cast<std::uint64_t>(p->value.cols()));
    for (Index i = 0; i < p->value.size(); ++i) w.put(p->value.data()[i]);
  }
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, "CADA", 4) != 0) throw TensorError("checkpoint: bad magic in " + path.string());
  Checkpoint ck;
  ck.header.version = r.get<std::uint32_t>();
  if (ck.header.version != kCheckpointVersion) {
    throw TensorError("checkpoint: unsupported version " + std::to_string(ck.header.version));
  }
  ck.header.seed = r.get<std::uint64_t>();
  ck.header.config_text = r.get_string();
  ck.header.vocabulary_text = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 2) throw TensorError("checkpoint: tensor '" + name + "' has unsupported rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) dims[d] = r.get<std::uint64_t>();
    const Index rows = rank == 2 ? static_cast<Index>(dims[0]) : 1;
    const Index cols = rank == 2 ? static_cast<Index>(dims[1]) : static_cast<Index>(dims[0]);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    ck.tensors.emplace(std::move(name), std::move(m));
  }
  return ck;
}

void restore_parameters(const Checkpoint& ckpt, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw TensorError("checkpoint: missing tensor '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw TensorError("checkpoint: shape mismatch for '" + p->name + "'");
    }
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace cada
