#include "ecgi/checkpoint.hpp"

#include <map>

#include "ecgi/io_util.hpp"

namespace ecgi {

namespace {
constexpr char kMagic[4] = {'E', 'C', 'G', 'I'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::string serialize_checkpoint(const std::vector<Param>& tensors) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Param& p : tensors) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.str(p.name);
    const Shape& s = p.value.shape();
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (int d : s) w.u32(static_cast<std::uint32_t>(d));
    const Arr& a = p.value.data();
    for (long i = 0; i < a.size(); ++i) w.f64(a[i]);
  }
  return w.bytes();
}

std::vector<Param> deserialize_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) {
    throw FormatError("checkpoint: bad magic, expected ECGI");
  }
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::uint32_t count = r.u32();
  std::vector<Param> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    std::uint32_t rank = r.u32();
    Shape shape(rank);
    long total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(r.u32());
      total *= shape[d];
    }
    Arr data(total);
    r.f64_block(data.data(), static_cast<size_t>(total));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!r.exhausted()) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

void save_checkpoint(const std::vector<Param>& tensors, const std::string& path) {
  write_file(path, serialize_checkpoint(tensors));
}

std::vector<Param> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

void restore_params(std::vector<Param>& dst, const std::vector<Param>& loaded) {
  std::map<std::string, const Param*> by_name;
  for (const Param& p : loaded) by_name[p.name] = &p;
  for (Param& d : dst) {
    auto it = by_name.find(d.name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: missing tensor '" + d.name + "'");
    }
    if (it->second->value.shape() != d.value.shape()) {
      throw DimensionError("checkpoint: tensor '" + d.name + "' has shape " +
                           shape_str(it->second->value.shape()) + ", expected " +
                           shape_str(d.value.shape()));
    }
    d.value.mutable_data() = it->second->value.data();
  }
}

const Param& find_param(const std::vector<Param>& tensors, const std::string& name) {
  for (const Param& p : tensors) {
    if (p.name == name) return p;
  }
  throw FormatError("checkpoint: no tensor named '" + name + "'");
}

}  // namespace ecgi
