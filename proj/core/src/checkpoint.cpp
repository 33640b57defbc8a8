#include "grasplearn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "grasplearn/errors.hpp"

namespace grasp::nn {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'T', 'C', '0', '0', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw StateError("corrupt tensor file (truncated): " + path);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

const Tensor& TensorFile::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("tensor '" + name + "' not found in container");
  return it->second;
}

void TensorFile::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw StateError("write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open tensor file: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw StateError("corrupt tensor file (bad magic): " + path);
  }
  TensorFile file;
  const uint32_t count = read_u32(is, path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is, path);
    if (name_len > 4096) throw StateError("corrupt tensor file (name length): " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_u32(is, path);
    if (ndim > 8) throw StateError("corrupt tensor file (rank): " + path);
    std::vector<int> shape(ndim);
    int64_t total = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(read_u32(is, path));
      if (shape[d] <= 0 || total > (1ll << 33)) throw StateError("corrupt tensor file (dims): " + path);
      total *= shape[d];
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw StateError("corrupt tensor file (truncated data): " + path);
    file.entries_[name] = std::move(t);
  }
  return file;
}

void pack_network(TensorFile& file, const Network& net, const std::string& prefix) {
  for (const auto& p : net.params()) file.put(prefix + p.name, *p.tensor);
}

void unpack_network(const TensorFile& file, Network& net, const std::string& prefix) {
  for (auto& p : net.params()) {
    const Tensor& stored = file.get(prefix + p.name);
    if (stored.shape != p.tensor->shape) {
      throw StateError("checkpoint tensor '" + prefix + p.name + "' has shape " + shape_str(stored.shape) +
                       ", network expects " + shape_str(p.tensor->shape));
    }
    p.tensor->data = stored.data;
    p.tensor->grad.clear();
  }
  net.bump_version();
}

void save_network(const Network& net, const std::string& path) {
  TensorFile file;
  pack_network(file, net);
  file.save(path);
}

void load_network(Network& net, const std::string& path) {
  unpack_network(TensorFile::load(path), net);
}

}  // namespace grasp::nn
