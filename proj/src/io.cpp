#include "epirecon/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace epirecon::io {

namespace fs = std::filesystem;

namespace {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void append_raw(std::string& out, T value) {
  value = to_little_endian(value);
  const char* p = reinterpret_cast<const char*>(&value);
  out.append(p, sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, fs::path path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::string header_line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) fail("missing header line");
    std::string line = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return line;
  }

  template <typename T>
  T raw() {
    if (pos_ + sizeof(T) > bytes_.size()) fail("truncated payload");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little_endian(value);
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) fail("trailing bytes after payload");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_.string() + ": " + what);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* cursor() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::string bytes_;
  fs::path path_;
  std::size_t pos_ = 0;
};

std::uint64_t parse_count(const std::string& token, const Reader& reader) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) reader.fail("bad count '" + token + "'");
  return value;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void write_csr(const fs::path& path, const CsrMatrix<double>& A) {
  std::string out = "CSR1 " + std::to_string(A.rows()) + " " + std::to_string(A.cols()) + " " +
                    std::to_string(A.nnz()) + "\n";
  out.reserve(out.size() + 8 * (A.rows() + 1 + 2 * A.nnz()));
  for (auto v : A.row_offsets()) append_raw(out, static_cast<std::uint64_t>(v));
  for (auto v : A.col_indices()) append_raw(out, static_cast<std::uint64_t>(v));
  for (double v : A.values()) append_raw(out, v);
  write_file_atomic(path, out);
}

CsrMatrix<double> read_csr(const fs::path& path) {
  Reader in(read_file(path), path);
  const auto tokens = split_ws(in.header_line());
  if (tokens.size() != 4 || tokens[0] != "CSR1") in.fail("expected 'CSR1 <rows> <cols> <nnz>' header");
  const auto rows = parse_count(tokens[1], in);
  const auto cols = parse_count(tokens[2], in);
  const auto nnz = parse_count(tokens[3], in);
  if (in.remaining() != 8 * (rows + 1 + 2 * nnz)) in.fail("payload size does not match header");
  std::vector<CsrMatrix<double>::StorageIndex> offsets(rows + 1), indices(nnz);
  std::vector<double> values(nnz);
  for (auto& v : offsets) v = static_cast<CsrMatrix<double>::StorageIndex>(in.raw<std::uint64_t>());
  for (auto& v : indices) v = static_cast<CsrMatrix<double>::StorageIndex>(in.raw<std::uint64_t>());
  for (auto& v : values) v = in.raw<double>();
  in.expect_end();
  try {
    return CsrMatrix<double>(static_cast<Index>(rows), static_cast<Index>(cols), std::move(offsets),
                             std::move(indices), std::move(values));
  } catch (const std::invalid_argument& e) {
    in.fail(std::string("corrupt matrix: ") + e.what());
  }
}

void write_vector(const fs::path& path, const Vector& v) {
  std::string out = "VEC1 " + std::to_string(v.size()) + "\n";
  out.reserve(out.size() + 8 * v.size());
  for (Index i = 0; i < v.size(); ++i) append_raw(out, v(i));
  write_file_atomic(path, out);
}

Vector read_vector(const fs::path& path) {
  Reader in(read_file(path), path);
  const auto tokens = split_ws(in.header_line());
  if (tokens.size() != 2 || tokens[0] != "VEC1") in.fail("expected 'VEC1 <n>' header");
  const auto n = parse_count(tokens[1], in);
  if (in.remaining() != 8 * n) in.fail("payload size does not match header");
  Vector v(static_cast<Index>(n));
  for (Index i = 0; i < v.size(); ++i) v(i) = in.raw<double>();
  return v;
}

void write_pgm(const fs::path& path, const Vector& image, Index height, Index width) {
  require_same_size(height * width, image.size(), "write_pgm");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    const double clamped = std::clamp(image(i), 0.0, 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::nearbyint(clamped))));
  }
  write_file_atomic(path, out);
}

GrayImage read_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  // Header: magic, width, height, maxval separated by whitespace, '#' comments allowed.
  std::size_t pos = 0;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw IoError(path.string() + ": truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stol(next_token());
    img.height = std::stol(next_token());
    const long maxval = std::stol(next_token());
    if (maxval <= 0 || maxval > 255) throw IoError(path.string() + ": only 8-bit PGM is supported");
    ++pos;  // single whitespace before raster
    const auto count = static_cast<std::size_t>(img.width * img.height);
    if (img.width <= 0 || img.height <= 0 || bytes.size() < pos + count)
      throw IoError(path.string() + ": truncated PGM raster");
    img.pixels.resize(img.width * img.height);
    for (std::size_t i = 0; i < count; ++i)
      img.pixels(i) = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) * 255.0 /
                      static_cast<double>(maxval);
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  return img;
}

void write_metadata(const fs::path& path, const Metadata& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
  write_file_atomic(path, out);
}

Metadata read_metadata(const fs::path& path) {
  std::istringstream in(read_file(path));
  Metadata meta;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(path.string() + ": malformed line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

}  // namespace epirecon::io
