#include "acwg/archive.hpp"

#include "acwg/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace acwg {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'W', 'G', 'A', 'R', 'C', '\0'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& name) : buf_(buf), name_(name) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError(name_ + ": truncated archive");
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

const Eigen::MatrixXd& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw DataError("archive has no tensor named " + name);
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json header = archive.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : archive.tensors) {
    header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  const std::string header_text = header.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put(buf, kArchiveVersion);
  put(buf, static_cast<std::uint64_t>(header_text.size()));
  buf += header_text;
  for (const auto& [name, m] : archive.tensors) {
    buf.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  put(buf, fnv1a(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(name + ": not an acwg archive");
  }
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof(stored), sizeof(stored));
  if (stored != fnv1a(buf.data(), buf.size() - sizeof(stored))) throw DataError(name + ": checksum mismatch");

  Reader r(buf, name);
  r.bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) throw DataError(name + ": unsupported archive version " + std::to_string(version));
  const auto header_len = r.get<std::uint64_t>();
  TensorArchive archive;
  try {
    archive.meta = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(name + ": bad archive header: " + e.what());
  }
  if (!archive.meta.contains("tensors") || !archive.meta["tensors"].is_array()) {
    throw DataError(name + ": archive header lists no tensors");
  }
  for (const auto& t : archive.meta["tensors"]) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw DataError(name + ": negative tensor shape");
    Eigen::MatrixXd m(rows, cols);
    const std::string raw = r.bytes(sizeof(double) * static_cast<std::size_t>(rows * cols));
    std::memcpy(m.data(), raw.data(), raw.size());
    if (!m.allFinite()) throw DataError(name + ": non-finite value in tensor " + t.at("name").get<std::string>());
    archive.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  if (r.pos() + sizeof(std::uint64_t) != buf.size()) throw DataError(name + ": trailing bytes in archive");
  archive.meta.erase("tensors");
  return archive;
}

}  // namespace acwg
