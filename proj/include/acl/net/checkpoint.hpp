#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "acl/error.hpp"
#include "acl/net/mlp.hpp"

namespace acl::net {

/// Portable flat file of named parameter arrays plus string metadata.
///
/// Layout (little-endian):
///   "ACLCKPT\0" | u32 version | u32 n_meta | n_meta x (str key, str value)
///   | u32 n_arrays | n_arrays x (str name, u32 rank, rank x u64 dim, prod(dims) x f64)
/// where str = u32 length followed by raw bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Array {
    std::vector<std::size_t> dims;
    std::vector<double> values;

    friend bool operator==(const Array&, const Array&) = default;
  };

  std::map<std::string, std::string> meta;
  std::map<std::string, Array> arrays;

  void add(const NamedArray& a) { arrays[a.name] = Array{a.dims, {a.values.begin(), a.values.end()}}; }

  void add_net(const Mlp& net, const std::string& prefix) {
    for (const auto& a : net.named_arrays(prefix)) add(a);
  }

  void add_vector(const std::string& name, const std::vector<double>& v) { arrays[name] = Array{{v.size()}, v}; }

  const Array& at(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IoError("checkpoint has no array '" + name + "'");
    return it->second;
  }

  /// Copies every named array of `net` back from the checkpoint; shapes must match.
  void load_net(Mlp& net, const std::string& prefix) const {
    auto params = net.params();
    for (const auto& a : net.named_arrays(prefix)) {
      const auto& src = at(a.name);
      if (src.dims != a.dims) throw IoError("checkpoint shape mismatch for '" + a.name + "'");
      const auto offset = static_cast<std::size_t>(a.values.data() - params.data());
      std::copy(src.values.begin(), src.values.end(), params.begin() + static_cast<std::ptrdiff_t>(offset));
    }
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint");
  return v;
}

inline std::string get_str(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw IoError("corrupt checkpoint string");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("ACLCKPT", 8);
  detail::put<std::uint32_t>(os, Checkpoint::kVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    detail::put_str(os, k);
    detail::put_str(os, v);
  }
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& [name, a] : ck.arrays) {
    detail::put_str(os, name);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) detail::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "ACLCKPT", 8) != 0) throw IoError(path + " is not a checkpoint");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != Checkpoint::kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto n_meta = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = detail::get_str(is);
    ck.meta[k] = detail::get_str(is);
  }
  const auto n_arrays = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    auto name = detail::get_str(is);
    Checkpoint::Array a;
    const auto rank = detail::get<std::uint32_t>(is);
    if (rank > 8) throw IoError("corrupt checkpoint rank");
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims.push_back(detail::get<std::uint64_t>(is));
      count *= a.dims.back();
    }
    if (count > (std::size_t{1} << 32)) throw IoError("corrupt checkpoint array size");
    a.values.resize(count);
    is.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint");
    ck.arrays[std::move(name)] = std::move(a);
  }
  return ck;
}

}  // namespace acl::net
