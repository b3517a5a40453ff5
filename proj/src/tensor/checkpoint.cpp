#include "metalab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "metalab/errors.hpp"

namespace metalab {
namespace {

constexpr std::size_t kMagicSize = 5;
const std::string kStepName = "optim.adam.step";
const std::string kFirstMomentPrefix = "optim.adam.m/";
const std::string kSecondMomentPrefix = "optim.adam.v/";

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(out, static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) put_u8(out, static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint8_t get_u8(std::istream& in, const char* what) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) {
    throw ConfigError(std::string("checkpoint truncated while reading ") + what);
  }
  return static_cast<std::uint8_t>(c);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(in, what)) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(in, what)) << (8 * i);
  return v;
}

template <typename T>
CheckpointRecord float_record(const std::string& name, const Shape& shape,
                              std::span<const T> values) {
  CheckpointRecord rec;
  rec.name = name;
  rec.dtype = DType::kFloat32;
  for (std::size_t d : shape) rec.dims.push_back(static_cast<std::uint32_t>(d));
  rec.f32.reserve(values.size());
  for (T v : values) rec.f32.push_back(static_cast<float>(v));
  return rec;
}

const CheckpointRecord* find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

template <typename T>
void copy_float_record(const CheckpointRecord& rec, const Shape& shape, std::span<T> dst) {
  Shape rec_shape(rec.dims.begin(), rec.dims.end());
  if (rec.dtype != DType::kFloat32 || rec_shape != shape) {
    throw ConfigError("checkpoint record " + rec.name + " has shape " + shape_str(rec_shape) +
                      ", model expects " + shape_str(shape));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec.f32[i]);
}

}  // namespace

std::size_t CheckpointRecord::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  out.write(kCheckpointMagic, kMagicSize);
  put_u8(out, kCheckpointVersion);
  for (const auto& rec : records) {
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put_u8(out, static_cast<std::uint8_t>(rec.dtype));
    put_u8(out, static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) put_u32(out, d);
    const std::size_t n = rec.element_count();
    if (rec.dtype == DType::kFloat32) {
      if (rec.f32.size() != n) throw ShapeError("checkpoint record " + rec.name + ": size mismatch");
      for (float v : rec.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      if (rec.i64.size() != n) throw ShapeError("checkpoint record " + rec.name + ": size mismatch");
      for (auto v : rec.i64) put_u64(out, static_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw ConfigError("checkpoint write failed");
}

std::vector<CheckpointRecord> read_checkpoint(std::istream& in) {
  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  if (in.gcount() != static_cast<std::streamsize>(kMagicSize) ||
      std::memcmp(magic, kCheckpointMagic, kMagicSize) != 0) {
    throw ConfigError("not a checkpoint file (bad magic)");
  }
  const std::uint8_t version = get_u8(in, "version");
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    CheckpointRecord rec;
    const std::uint32_t len = get_u32(in, "name length");
    rec.name.resize(len);
    in.read(rec.name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) {
      throw ConfigError("checkpoint truncated while reading a record name");
    }
    const std::uint8_t dtype = get_u8(in, "dtype");
    if (dtype > 1) throw ConfigError("unknown dtype code " + std::to_string(dtype));
    rec.dtype = static_cast<DType>(dtype);
    const std::uint8_t rank = get_u8(in, "rank");
    for (std::uint8_t i = 0; i < rank; ++i) rec.dims.push_back(get_u32(in, "dims"));
    const std::size_t n = rec.element_count();
    if (rec.dtype == DType::kFloat32) {
      rec.f32.resize(n);
      for (auto& v : rec.f32) v = std::bit_cast<float>(get_u32(in, "payload"));
    } else {
      rec.i64.resize(n);
      for (auto& v : rec.i64) v = static_cast<std::int64_t>(get_u64(in, "payload"));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

template <typename T>
std::vector<CheckpointRecord> collect_records(const ParamStore<T>& store, const Adam<T>* optimizer) {
  std::vector<CheckpointRecord> records;
  for (const auto& name : store.names()) {
    const auto& t = store.get(name);
    records.push_back(float_record<T>(name, t.shape(), t.data()));
  }
  if (optimizer) {
    CheckpointRecord step;
    step.name = kStepName;
    step.dtype = DType::kInt64;
    step.dims = {1};
    step.i64 = {optimizer->step_count()};
    records.push_back(std::move(step));
    for (const auto& name : store.names()) {
      const auto& shape = store.get(name).shape();
      records.push_back(float_record<T>(kFirstMomentPrefix + name, shape,
                                        std::span<const T>(optimizer->first_moment(name))));
      records.push_back(float_record<T>(kSecondMomentPrefix + name, shape,
                                        std::span<const T>(optimizer->second_moment(name))));
    }
  }
  return records;
}

template <typename T>
void restore_records(const std::vector<CheckpointRecord>& records, ParamStore<T>& store,
                     Adam<T>* optimizer) {
  for (const auto& name : store.names()) {
    const CheckpointRecord* rec = find_record(records, name);
    if (!rec) throw ConfigError("checkpoint has no parameter " + name);
    auto& t = store.get(name);
    copy_float_record(*rec, t.shape(), t.mutable_data());
  }
  if (!optimizer) return;
  const CheckpointRecord* step = find_record(records, kStepName);
  if (!step || step->dtype != DType::kInt64 || step->i64.size() != 1) {
    throw ConfigError("checkpoint has no optimizer state");
  }
  optimizer->set_step_count(step->i64[0]);
  for (const auto& name : store.names()) {
    const auto& shape = store.get(name).shape();
    const CheckpointRecord* m = find_record(records, kFirstMomentPrefix + name);
    const CheckpointRecord* v = find_record(records, kSecondMomentPrefix + name);
    if (!m || !v) throw ConfigError("checkpoint has no optimizer moments for " + name);
    copy_float_record(*m, shape, std::span<T>(optimizer->first_moment(name)));
    copy_float_record(*v, shape, std::span<T>(optimizer->second_moment(name)));
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store,
                     const Adam<T>* optimizer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, collect_records(store, optimizer));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParamStore<T>& store, Adam<T>* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  restore_records(read_checkpoint(in), store, optimizer);
}

#define METALAB_INSTANTIATE_CHECKPOINT(T)                                                      \
  template std::vector<CheckpointRecord> collect_records(const ParamStore<T>&, const Adam<T>*); \
  template void restore_records(const std::vector<CheckpointRecord>&, ParamStore<T>&, Adam<T>*); \
  template void save_checkpoint(const std::filesystem::path&, const ParamStore<T>&,             \
                                const Adam<T>*);                                                \
  template void load_checkpoint(const std::filesystem::path&, ParamStore<T>&, Adam<T>*);

METALAB_INSTANTIATE_CHECKPOINT(float)
METALAB_INSTANTIATE_CHECKPOINT(double)

#undef METALAB_INSTANTIATE_CHECKPOINT

}  // namespace metalab
