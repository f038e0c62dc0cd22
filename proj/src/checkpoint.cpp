#include "vld/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "vld/errors.hpp"

namespace vld::io {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'D', 'T'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <class T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LoadError("container truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kFloat64: return 8;
    case DType::kFloat32: return 4;
    case DType::kUInt8: return 1;
  }
  throw LoadError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

Record Record::from_doubles(std::string name, const Shape& shape, std::span<const double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("record '" + name + "': shape " + shape_str(shape) + " does not match values");
  }
  Record r{std::move(name), DType::kFloat64, shape, {}};
  r.payload.reserve(values.size() * 8);
  for (double v : values) put_le(r.payload, std::bit_cast<std::uint64_t>(v));
  return r;
}

Record Record::from_bytes(std::string name, const Shape& shape, std::vector<std::uint8_t> bytes) {
  if (shape_numel(shape) != bytes.size()) {
    throw ShapeError("record '" + name + "': shape " + shape_str(shape) + " does not match bytes");
  }
  return Record{std::move(name), DType::kUInt8, shape, std::move(bytes)};
}

std::vector<double> Record::to_doubles() const {
  std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  Reader r(payload);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::kFloat64: out[i] = std::bit_cast<double>(r.get_le<std::uint64_t>()); break;
      case DType::kFloat32: out[i] = std::bit_cast<float>(r.get_le<std::uint32_t>()); break;
      case DType::kUInt8: out[i] = r.get_le<std::uint8_t>(); break;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode(const std::vector<Record>& records) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kContainerVersion);
  for (const auto& r : records) {
    if (r.shape.size() > 255) throw ShapeError("record '" + r.name + "' has too many axes");
    if (r.payload.size() != shape_numel(r.shape) * dtype_size(r.dtype)) {
      throw ShapeError("record '" + r.name + "' payload size disagrees with its shape");
    }
    put_le(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.push_back(static_cast<std::uint8_t>(r.shape.size()));
    for (auto e : r.shape) put_le(out, static_cast<std::uint64_t>(e));
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

std::vector<Record> decode(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw LoadError("bad magic: not a VLDT container");
  auto version = in.get_le<std::uint16_t>();
  if (version != kContainerVersion) {
    throw LoadError("unsupported container version " + std::to_string(version));
  }
  std::vector<Record> records;
  while (!in.done()) {
    Record r;
    auto len = in.get_le<std::uint32_t>();
    auto name = in.take(len);
    r.name.assign(name.begin(), name.end());
    r.dtype = static_cast<DType>(in.get_le<std::uint8_t>());
    auto ndim = in.get_le<std::uint8_t>();
    for (std::size_t i = 0; i < ndim; ++i) r.shape.push_back(in.get_le<std::uint64_t>());
    auto payload = in.take(shape_numel(r.shape) * dtype_size(r.dtype));
    r.payload.assign(payload.begin(), payload.end());
    records.push_back(std::move(r));
  }
  return records;
}

void write_container(const std::filesystem::path& path, const std::vector<Record>& records) {
  auto bytes = encode(records);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<Record> read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void save_parameters(const std::filesystem::path& path, const ParameterList& params) {
  std::vector<Record> records;
  records.reserve(params.size());
  for (const auto& p : params) {
    records.push_back(Record::from_doubles(p.name, p.tensor.shape(), p.tensor.values()));
  }
  write_container(path, records);
}

void load_parameters(const std::filesystem::path& path, ParameterList& params) {
  auto records = read_container(path);
  std::map<std::string, const Record*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw LoadError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw LoadError("parameter '" + p.name + "' has shape " + shape_str(it->second->shape) +
                      " in checkpoint but " + shape_str(p.tensor.shape()) + " in the model");
    }
    auto values = it->second->to_doubles();
    auto dst = p.tensor.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

}  // namespace vld::io
