#pragma once

// On-disk formats.
//
//   CSR1: ASCII header "CSR1 <rows> <cols> <nnz>\n", then row_offsets (u64),
//         col_indices (u64) and values (f64), all little-endian.
//   VEC1: ASCII header "VEC1 <n>\n", then n little-endian f64.
//   PGM:  binary "P5", 8-bit, maxval 255.
//   Metadata: "key=value" lines.
//
// Every writer goes through a temporary file and a rename.

#include "epirecon/linops.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace epirecon::io {

void write_csr(const std::filesystem::path& path, const CsrMatrix<double>& A);
CsrMatrix<double> read_csr(const std::filesystem::path& path);

void write_vector(const std::filesystem::path& path, const Vector& v);
Vector read_vector(const std::filesystem::path& path);

/// Clamps to [0, 255] and rounds half to even; the real-valued image is untouched.
void write_pgm(const std::filesystem::path& path, const Vector& image, Index height, Index width);

struct GrayImage {
  Index height = 0;
  Index width = 0;
  Vector pixels;  // row-major, values in [0, maxval] rescaled to [0, 255]
};
GrayImage read_pgm(const std::filesystem::path& path);

using Metadata = std::map<std::string, std::string>;
void write_metadata(const std::filesystem::path& path, const Metadata& meta);
Metadata read_metadata(const std::filesystem::path& path);

/// Writes bytes to path via path.tmp + rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

/// Round-trippable decimal form of a double.
std::string format_double(double x);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace epirecon::io
