#include "recnet/archive.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace recnet {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'E', 'C', 'N', 'E', 'T', 'A', 'R'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_str(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_bytes(const void* data, size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string get_str() {
    const auto n = get<uint32_t>();
    const char* p = take(n);
    return std::string(p, n);
  }
  const char* take(size_t n) {
    if (n > size_ - pos_) throw FormatError("archive payload is truncated");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const char* data_;
  size_t size_;
  size_t pos_ = 0;
};

uint32_t crc(const std::vector<char>& bytes, size_t offset, size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in slices.
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data() + offset);
  while (n > 0) {
    const auto step = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
    c = crc32(c, p, step);
    p += step;
    n -= step;
  }
  return static_cast<uint32_t>(c);
}

}  // namespace

void Archive::save(const std::filesystem::path& path) const {
  Writer payload;
  payload.put(static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    payload.put_str(k);
    payload.put_str(v);
  }
  payload.put(static_cast<uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    payload.put_str(name);
    payload.put(static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) payload.put(d);
    payload.put_bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
  }
  const std::vector<char>& body = payload.bytes();

  Writer file;
  file.put_bytes(kMagic, sizeof(kMagic));
  file.put(kVersion);
  file.put(static_cast<uint64_t>(body.size()));
  file.put_bytes(body.data(), body.size());
  file.put(crc(body, 0, body.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(file.bytes().data(), static_cast<std::streamsize>(file.bytes().size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr size_t kHeader = sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t);
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not a recnet archive");
  }
  Reader header(bytes.data() + sizeof(kMagic), kHeader - sizeof(kMagic));
  const auto version = header.get<uint32_t>();
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  const auto payload_size = header.get<uint64_t>();
  if (bytes.size() - kHeader < sizeof(uint32_t) || payload_size != bytes.size() - kHeader - sizeof(uint32_t)) {
    throw FormatError(path.string() + ": archive is truncated or has trailing data");
  }
  uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + kHeader + payload_size, sizeof(stored_crc));
  if (crc(bytes, kHeader, payload_size) != stored_crc) throw FormatError(path.string() + ": checksum mismatch");

  Archive ar;
  Reader r(bytes.data() + kHeader, payload_size);
  const auto n_meta = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_str();
    ar.meta[k] = r.get_str();
  }
  const auto n_arrays = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = r.get_str();
    const auto rank = r.get<uint32_t>();
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for array " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.get<int64_t>();
    const int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    std::memcpy(data.data(), r.take(static_cast<size_t>(n) * sizeof(double)), static_cast<size_t>(n) * sizeof(double));
    ar.arrays.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError(path.string() + ": unexpected bytes after last array");
  return ar;
}

const std::string& Archive::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("archive is missing metadata key '" + key + "'");
  return it->second;
}

const Tensor& Archive::array_at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw FormatError("archive is missing array '" + name + "'");
  return it->second;
}

}  // namespace recnet
