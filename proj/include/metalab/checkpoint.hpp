#pragma once

// Binary checkpoint format (all integers little-endian):
//
//   "MLAB1"            5-byte magic
//   u8                 version (1)
//   repeated until EOF:
//     u32              name length
//     bytes            name (UTF-8, no terminator)
//     u8               dtype code (0 = float32, 1 = int64)
//     u8               rank
//     u32 x rank       dims
//     payload          prod(dims) little-endian elements of dtype
//
// Parameters are stored under their ParamStore names; Adam state under
// "optim.adam.step", "optim.adam.m/<name>" and "optim.adam.v/<name>".

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "metalab/param_store.hpp"

namespace metalab {

enum class DType : std::uint8_t { kFloat32 = 0, kInt64 = 1 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::kFloat32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::int64_t> i64;

  std::size_t element_count() const;
};

inline constexpr char kCheckpointMagic[] = "MLAB1";
inline constexpr std::uint8_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records);
// Throws ConfigError on a bad magic/version or truncated record.
std::vector<CheckpointRecord> read_checkpoint(std::istream& in);

template <typename T>
std::vector<CheckpointRecord> collect_records(const ParamStore<T>& store,
                                              const Adam<T>* optimizer = nullptr);
// Every parameter of `store` must be present with the same shape; extra
// records are ignored. Throws ConfigError otherwise.
template <typename T>
void restore_records(const std::vector<CheckpointRecord>& records, ParamStore<T>& store,
                     Adam<T>* optimizer = nullptr);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store,
                     const Adam<T>* optimizer = nullptr);
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParamStore<T>& store,
                     Adam<T>* optimizer = nullptr);

}  // namespace metalab
