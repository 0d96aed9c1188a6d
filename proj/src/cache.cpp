#include "pad/cache.hpp"

#include <cmath>
#include <string>

#include "pad/binio.hpp"
#include "pad/checksum.hpp"
#include "pad/error.hpp"
#include "pad/numerics.hpp"

namespace pad {

namespace {
constexpr char kMagic[4] = {'P', 'A', 'C', 'M'};
constexpr uint16_t kVersion = 1;
// f32 storage means stored rows are unit-norm only to single precision
constexpr double kRowNormTol = 1e-6;
}  // namespace

CacheModel build_cache(const Mat& features, const std::vector<int>& labels, int num_classes) {
  if (num_classes < 2) raise(Err::InvalidConfig, "cache needs at least 2 classes");
  if (static_cast<int>(labels.size()) != features.rows)
    raise(Err::LengthMismatch, "cache features vs labels");

  std::vector<std::vector<int>> per_class(static_cast<size_t>(num_classes));
  for (int r = 0; r < features.rows; ++r) {
    int l = labels[static_cast<size_t>(r)];
    if (l < 0 || l >= num_classes) raise(Err::IndexOutOfRange, "cache label " + std::to_string(l));
    if (std::abs(row_norm(features, r) - 1.0) > kRowNormTol)
      raise(Err::UnnormalizedFeature, "cache feature row " + std::to_string(r));
    per_class[static_cast<size_t>(l)].push_back(r);
  }
  size_t shots = per_class[0].size();
  for (int c = 0; c < num_classes; ++c)
    if (per_class[static_cast<size_t>(c)].size() != shots || shots == 0)
      raise(Err::ShotCountMismatch,
            "class " + std::to_string(c) + " has " + std::to_string(per_class[static_cast<size_t>(c)].size()) +
                " shots, expected " + std::to_string(shots));

  CacheModel cache;
  cache.classes = num_classes;
  cache.shots = static_cast<int>(shots);
  cache.learnable = false;
  cache.keys = Mat(num_classes * cache.shots, features.cols);
  std::vector<int> stacked_labels;
  stacked_labels.reserve(static_cast<size_t>(cache.keys.rows));
  int out = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int r : per_class[static_cast<size_t>(c)]) {
      std::copy(features.row(r), features.row(r) + features.cols, cache.keys.row(out++));
      stacked_labels.push_back(c);
    }
  }
  cache.values = one_hot_matrix(stacked_labels, num_classes);
  return cache;
}

Mat affinity(const Mat& queries, const CacheModel& cache, double beta) {
  if (!(beta > 0.0)) raise(Err::InvalidConfig, "beta must be positive");
  if (queries.cols != cache.keys.cols)
    raise(Err::DimensionMismatch, "affinity d=" + std::to_string(queries.cols) + " vs " +
                                      std::to_string(cache.keys.cols));
  Mat sims = matmul_nt(queries, cache.keys);
  for (double& s : sims.v) s = std::exp(-beta * (1.0 - s));
  return sims;
}

Mat cache_logits(const Mat& queries, const CacheModel& cache, double beta) {
  return matmul(affinity(queries, cache, beta), cache.values);
}

void save_cache(const CacheModel& cache, const std::string& path, uint64_t config_hash) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<uint32_t>(cache.classes));
  w.u32(static_cast<uint32_t>(cache.shots));
  w.u32(static_cast<uint32_t>(cache.keys.cols));
  w.u8(cache.learnable ? 1 : 0);
  w.u64(config_hash);
  for (double x : cache.keys.v) w.f32(static_cast<float>(x));
  for (int r = 0; r < cache.values.rows; ++r) {
    const double* row = cache.values.row(r);
    uint32_t label = 0;
    for (int c = 0; c < cache.values.cols; ++c)
      if (row[c] == 1.0) label = static_cast<uint32_t>(c);
    w.u32(label);
  }
  uint32_t crc = crc32_bytes(w.data().data(), w.data().size());
  ByteWriter out = std::move(w);
  out.u32(crc);
  write_file_bytes(path, out.data());
}

LoadedCache load_cache(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 4 + 2 + 4 * 3 + 1 + 8 + 4) raise(Err::FormatError, "cache file too short");

  uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  uint32_t actual_crc = crc32_bytes(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc) raise(Err::ChecksumMismatch, "cache crc");

  ByteReader r(bytes.data(), bytes.size() - 4);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) raise(Err::FormatError, "bad cache magic");
  if (r.u16() != kVersion) raise(Err::FormatError, "unsupported cache version");

  LoadedCache out;
  out.cache.classes = static_cast<int>(r.u32());
  out.cache.shots = static_cast<int>(r.u32());
  int dim = static_cast<int>(r.u32());
  out.cache.learnable = r.u8() != 0;
  out.config_hash = r.u64();
  if (out.cache.classes < 1 || out.cache.shots < 1 || dim < 1)
    raise(Err::FormatError, "bad cache header");

  int rows = out.cache.classes * out.cache.shots;
  size_t need = static_cast<size_t>(rows) * dim * 4 + static_cast<size_t>(rows) * 4;
  if (r.remaining() != need) raise(Err::FormatError, "cache payload size");

  out.cache.keys = Mat(rows, dim);
  for (double& x : out.cache.keys.v) x = static_cast<double>(r.f32());
  std::vector<int> labels(static_cast<size_t>(rows));
  for (int& l : labels) {
    uint32_t raw = r.u32();
    if (raw >= static_cast<uint32_t>(out.cache.classes)) raise(Err::FormatError, "cache value label");
    l = static_cast<int>(raw);
  }
  out.cache.values = one_hot_matrix(labels, out.cache.classes);
  return out;
}

}  // namespace pad
