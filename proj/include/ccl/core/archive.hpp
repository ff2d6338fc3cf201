#ifndef CCL_CORE_ARCHIVE_HPP
#define CCL_CORE_ARCHIVE_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccl/core/layers.hpp"

// Tensor archive: a flat little-endian binary file of named float32 tensors.
//
//   "CCLTENS1"                       8-byte magic
//   u32 count
//   count x { u32 name_len, name bytes, i32 n, c, h, w, f32 data[n*c*h*w] }

namespace ccl {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TensorArchive = std::map<std::string, Tensor<float>>;

inline constexpr char kArchiveMagic[8] = {'C', 'C', 'L', 'T', 'E', 'N', 'S', '1'};

inline void write_archive(const std::filesystem::path& path, const TensorArchive& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ArchiveError("cannot open " + path.string() + " for writing");
  auto put_u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_i32 = [&](std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  os.write(kArchiveMagic, sizeof kArchiveMagic);
  put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_i32(t.n());
    put_i32(t.c());
    put_i32(t.h());
    put_i32(t.w());
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw ArchiveError("write failed for " + path.string());
}

inline TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArchiveError("cannot open tensor archive " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kArchiveMagic, sizeof magic) != 0)
    throw ArchiveError(path.string() + " is not a tensor archive");
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto get_i32 = [&] {
    std::int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  TensorArchive out;
  const std::uint32_t count = get_u32();
  for (std::uint32_t i = 0; i < count && is; ++i) {
    const std::uint32_t len = get_u32();
    if (len > 4096) throw ArchiveError("corrupt tensor name in " + path.string());
    std::string name(len, '\0');
    is.read(name.data(), len);
    Shape s{get_i32(), get_i32(), get_i32(), get_i32()};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ArchiveError("corrupt tensor extent in " + path.string());
    Tensor<float> t(s);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    out.emplace(std::move(name), std::move(t));
  }
  if (!is) throw ArchiveError("truncated tensor archive " + path.string());
  return out;
}

template <class T>
TensorArchive to_archive(const ParameterList<T>& params) {
  TensorArchive out;
  for (const auto& p : params) out.emplace(p.name, p.var.value().template cast<float>());
  return out;
}

/// Copies archive tensors into the parameters by name. Every parameter must
/// be present with a matching extent; extra archive entries are an error too.
template <class T>
void load_into(ParameterList<T>& params, const TensorArchive& archive) {
  if (archive.size() != params.size())
    throw ValidationError("archive holds " + std::to_string(archive.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  for (auto& p : params) {
    auto it = archive.find(p.name);
    if (it == archive.end()) throw ValidationError("archive is missing parameter " + p.name);
    if (it->second.shape() != p.var.shape())
      throw ValidationError("parameter " + p.name + " has extent " + it->second.shape().str() + ", model expects " +
                            p.var.shape().str());
    p.var.mutable_value() = it->second.template cast<T>();
  }
}

}  // namespace ccl

#endif  // CCL_CORE_ARCHIVE_HPP
