#include "navtrans/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace navtrans {

static_assert(std::endian::native == std::endian::little,
              "archive encoding assumes a little-endian host");

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw ArchiveError(std::string("truncated archive while reading ") + what + " at byte " +
                         std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_archive(const TensorArchive& archive) {
  std::string out = "NVTA";
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint64_t>(out, archive.metadata.size());
  out += archive.metadata;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, t] : archive.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, t.rows());
    put<std::uint64_t>(out, t.cols());
    const auto v = t.data();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return out;
}

TensorArchive decode_archive(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != "NVTA") throw ArchiveError("not a tensor archive (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kArchiveVersion)
    throw ArchiveError("unsupported archive version " + std::to_string(version));
  TensorArchive archive;
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  archive.metadata = in.take(meta_len, "metadata");
  const auto count = in.get<std::uint32_t>("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name = in.take(name_len, "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank != 2) throw ArchiveError("entry '" + name + "': unsupported rank " + std::to_string(rank));
    const auto rows = in.get<std::uint64_t>("extent");
    const auto cols = in.get<std::uint64_t>("extent");
    if (rows == 0 || cols == 0) throw ArchiveError("entry '" + name + "': zero extent");
    const std::string raw = in.take(rows * cols * sizeof(double), "values");
    std::vector<double> values(rows * cols);
    std::memcpy(values.data(), raw.data(), raw.size());
    if (archive.tensors.contains(name)) throw ArchiveError("duplicate entry '" + name + "'");
    archive.tensors.emplace(std::move(name), ad::Tensor::from(rows, cols, std::move(values)));
  }
  if (!in.done()) throw ArchiveError("trailing bytes after last entry");
  return archive;
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_archive(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("write failed for " + path.string());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_archive(ss.str());
}

}  // namespace navtrans
