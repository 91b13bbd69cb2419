#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "segref/io.hpp"

namespace segref::io {

static_assert(std::endian::native == std::endian::little,
              "the byte codecs below assume a little-endian host");

namespace {

constexpr char kEmb[] = "EMB1";
constexpr char kFmp[] = "FMP1";
constexpr char kMsk[] = "MSK1";
constexpr char kMsks[] = "MSKS";
constexpr char kAsg[] = "ASG1";

class Writer {
 public:
  explicit Writer(const char* magic) { bytes_.insert(bytes_.end(), magic, magic + 4); u32(kFormatVersion); }

  void u32(std::uint32_t v) { put(&v, sizeof v); }
  void u64(std::uint64_t v) { put(&v, sizeof v); }
  void f32s(std::span<const float> v) { put(v.data(), v.size_bytes()); }
  void u32s(std::span<const std::uint32_t> v) { put(v.data(), v.size_bytes()); }

  Bytes take() { return std::move(bytes_); }

 private:
  void put(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  Bytes bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* magic, const char* what)
      : bytes_(bytes), what_(what) {
    const std::size_t head = std::min<std::size_t>(bytes_.size(), 4);
    if (head < 4 && (head == 0 || std::memcmp(bytes_.data(), magic, head) == 0)) {
      fail(ErrorCode::kTruncated, std::string(what_) + ": file ends inside the magic");
    }
    if (head < 4 || std::memcmp(bytes_.data(), magic, 4) != 0) {
      fail(ErrorCode::kBadMagic, std::string(what_) + ": expected magic " + magic);
    }
    pos_ = 4;
    const std::uint32_t version = u32();
    if (version != kFormatVersion) {
      fail(ErrorCode::kBadVersion,
           std::string(what_) + ": unsupported version " + std::to_string(version));
    }
  }

  std::uint32_t u32() { std::uint32_t v; get(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; get(&v, sizeof v); return v; }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  /// Payload must be exactly `count * elem` more bytes.
  void expect_exact(std::uint64_t count, std::size_t elem) const {
    std::uint64_t need = 0;
    if (__builtin_mul_overflow(count, static_cast<std::uint64_t>(elem), &need) ||
        need != remaining()) {
      fail(ErrorCode::kTruncated, std::string(what_) + ": header promises " +
                                      std::to_string(count) + " elements of " +
                                      std::to_string(elem) + " bytes, file has " +
                                      std::to_string(remaining()) + " payload bytes");
    }
  }

  void f32s(std::span<float> out) { get(out.data(), out.size_bytes()); }
  void u32s(std::span<std::uint32_t> out) { get(out.data(), out.size_bytes()); }

  void finish() const {
    if (pos_ != bytes_.size()) {
      fail(ErrorCode::kTruncated, std::string(what_) + ": " + std::to_string(remaining()) +
                                      " trailing bytes");
    }
  }

  const char* what() const noexcept { return what_; }

 private:
  void get(void* out, std::size_t n) {
    if (remaining() < n) fail(ErrorCode::kTruncated, std::string(what_) + ": unexpected end of file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  const char* what_;
};

std::uint64_t product(std::initializer_list<std::uint64_t> dims, const char* what) {
  std::uint64_t p = 1;
  for (std::uint64_t d : dims) {
    if (__builtin_mul_overflow(p, d, &p)) {
      fail(ErrorCode::kTruncated, std::string(what) + ": header dimensions overflow");
    }
  }
  return p;
}

void check_finite(std::span<const float> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      fail(ErrorCode::kNonFinite, std::string(what) + ": non-finite value at element " +
                                      std::to_string(i));
    }
  }
}

}  // namespace

FileKind sniff(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4) {
    const auto is = [&](const char* m) { return std::memcmp(bytes.data(), m, 4) == 0; };
    if (is(kEmb)) return FileKind::kEmbeddings;
    if (is(kFmp)) return FileKind::kFeatureMap;
    if (is(kMsk)) return FileKind::kLabelRaster;
    if (is(kMsks)) return FileKind::kMaskStack;
    if (is(kAsg)) return FileKind::kAssignments;
  }
  fail(ErrorCode::kBadMagic, "unrecognized file magic");
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIo, "error reading " + path.string());
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "error writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot rename onto " + path.string() + ": " + ec.message());
}

// ---- EMB1 -----------------------------------------------------------------

Bytes encode_embeddings(const EmbeddingMatrix& m) {
  Writer w(kEmb);
  w.u32(0);
  w.u64(m.rows());
  w.u64(m.dim());
  w.f32s(m.values());
  return w.take();
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, kEmb, "EMB1");
  const std::uint32_t dtype = r.u32();
  const std::uint64_t rows = r.u64();
  const std::uint64_t dim = r.u64();
  if (dtype != 0) fail(ErrorCode::kMalformed, "EMB1: unsupported dtype " + std::to_string(dtype));
  r.expect_exact(product({rows, dim}, "EMB1"), sizeof(float));
  std::vector<float> data(rows * dim);
  r.f32s(data);
  r.finish();
  check_finite(data, "EMB1");
  return EmbeddingMatrix(rows, dim, std::move(data));
}

void write_embeddings(const fs::path& path, const EmbeddingMatrix& m) {
  write_file(path, encode_embeddings(m));
}

EmbeddingMatrix read_embeddings(const fs::path& path) {
  try {
    return decode_embeddings(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

// ---- FMP1 -----------------------------------------------------------------

Bytes encode_feature_map(const FeatureMap& f) {
  f.validate();
  Writer w(kFmp);
  w.u64(f.grid_h);
  w.u64(f.grid_w);
  w.u64(f.dim);
  w.f32s(f.data);
  return w.take();
}

FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, kFmp, "FMP1");
  FeatureMap f;
  f.grid_h = r.u64();
  f.grid_w = r.u64();
  f.dim = r.u64();
  r.expect_exact(product({f.grid_h, f.grid_w, f.dim}, "FMP1"), sizeof(float));
  f.data.resize(f.grid_h * f.grid_w * f.dim);
  r.f32s(f.data);
  r.finish();
  check_finite(f.data, "FMP1");
  return f;
}

void write_feature_map(const fs::path& path, const FeatureMap& f) {
  write_file(path, encode_feature_map(f));
}

FeatureMap read_feature_map(const fs::path& path) {
  try {
    return decode_feature_map(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

// ---- MSK1 / MSKS ------------------------------------------------------------

Bytes encode_label_raster(const LabelRaster& raster) {
  raster.validate();
  Writer w(kMsk);
  w.u64(raster.height);
  w.u64(raster.width);
  w.u64(raster.classes);
  w.u32s(raster.ids);
  return w.take();
}

LabelRaster decode_label_raster(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, kMsk, "MSK1");
  LabelRaster raster;
  raster.height = r.u64();
  raster.width = r.u64();
  raster.classes = r.u64();
  if (raster.classes > kIgnoreLabel) {
    fail(ErrorCode::kMalformed, "MSK1: class count " + std::to_string(raster.classes) +
                                    " exceeds the 32-bit id space");
  }
  r.expect_exact(product({raster.height, raster.width}, "MSK1"), sizeof(std::uint32_t));
  raster.ids.resize(raster.height * raster.width);
  r.u32s(raster.ids);
  r.finish();
  raster.validate();
  return raster;
}

void write_label_raster(const fs::path& path, const LabelRaster& r) {
  write_file(path, encode_label_raster(r));
}

LabelRaster read_label_raster(const fs::path& path) {
  try {
    return decode_label_raster(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

Bytes encode_mask_stack(const SegmentMaskSet& masks) {
  Writer w(kMsks);
  w.u64(masks.height());
  w.u64(masks.width());
  w.u64(masks.size());
  std::vector<std::uint32_t> runs;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    runs.clear();
    std::uint8_t current = 0;
    std::uint32_t length = 0;
    for (std::size_t p = 0; p < masks.pixels(); ++p) {
      const std::uint8_t v = masks.covers(i, p) ? 1 : 0;
      if (v != current) {
        runs.push_back(length);
        current = v;
        length = 0;
      }
      ++length;
    }
    runs.push_back(length);
    w.u32(static_cast<std::uint32_t>(runs.size()));
    w.u32s(runs);
  }
  return w.take();
}

SegmentMaskSet decode_mask_stack(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, kMsks, "MSKS");
  const std::uint64_t h = r.u64();
  const std::uint64_t w = r.u64();
  const std::uint64_t k = r.u64();
  const std::uint64_t pixels = product({h, w}, "MSKS");
  // each mask needs at least its run count and one run
  if (k > r.remaining() / 8 || (k > 0 && pixels == 0)) {
    fail(ErrorCode::kTruncated, "MSKS: header promises more masks than the file holds");
  }
  if (k > 0 && pixels > std::numeric_limits<std::uint32_t>::max() * std::uint64_t{1}) {
    fail(ErrorCode::kMalformed, "MSKS: raster too large for u32 run lengths");
  }
  if (product({k, pixels}, "MSKS") > (std::uint64_t{1} << 34)) {
    fail(ErrorCode::kMalformed, "MSKS: decoded stack would exceed 16 GiB");
  }
  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint32_t count = r.u32();
    if (count == 0 || count > r.remaining() / 4) {
      fail(ErrorCode::kTruncated, "MSKS: mask " + std::to_string(i) + " run count " +
                                      std::to_string(count) + " exceeds the file");
    }
    std::vector<std::uint32_t> runs(count);
    r.u32s(runs);
    std::uint64_t total = 0;
    for (std::uint32_t run : runs) total += run;
    if (total != pixels) {
      fail(ErrorCode::kMalformed, "MSKS: mask " + std::to_string(i) + " runs cover " +
                                      std::to_string(total) + " of " +
                                      std::to_string(pixels) + " pixels");
    }
    std::vector<std::uint8_t> mask;
    mask.reserve(pixels);
    for (std::size_t j = 0; j < runs.size(); ++j) {
      mask.insert(mask.end(), runs[j], static_cast<std::uint8_t>(j % 2));
    }
    masks.push_back(std::move(mask));
  }
  r.finish();
  return SegmentMaskSet::stack(h, w, std::move(masks));
}

Bytes encode_masks(const SegmentMaskSet& masks) {
  if (masks.form() == SegmentMaskSet::Form::kStack) return encode_mask_stack(masks);
  const auto ids = masks.ids();
  return encode_label_raster(LabelRaster{masks.height(), masks.width(), masks.size(),
                                         std::vector<std::uint32_t>(ids.begin(), ids.end())});
}

SegmentMaskSet decode_masks(std::span<const std::uint8_t> bytes) {
  if (sniff(bytes) == FileKind::kMaskStack) return decode_mask_stack(bytes);
  const LabelRaster raster = decode_label_raster(bytes);
  return SegmentMaskSet::partition(raster);
}

void write_masks(const fs::path& path, const SegmentMaskSet& masks) {
  write_file(path, encode_masks(masks));
}

SegmentMaskSet read_masks(const fs::path& path) {
  try {
    return decode_masks(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

// ---- ASG1 -------------------------------------------------------------------

Bytes encode_assignments(const SparseAssignment& a) {
  Writer w(kAsg);
  w.u64(a.rows());
  w.u64(a.cols());
  w.u64(a.nnz());
  for (const auto& [row, col] : a.entries()) {
    w.u64(row);
    w.u64(col);
  }
  return w.take();
}

SparseAssignment decode_assignments(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, kAsg, "ASG1");
  const std::uint64_t m = r.u64();
  const std::uint64_t n = r.u64();
  const std::uint64_t nnz = r.u64();
  r.expect_exact(nnz, 2 * sizeof(std::uint64_t));
  if (m > r.remaining() / 16 + (std::uint64_t{1} << 24)) {
    fail(ErrorCode::kMalformed, "ASG1: row count " + std::to_string(m) +
                                    " is implausible for " + std::to_string(nnz) + " entries");
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries(nnz);
  for (auto& e : entries) {
    e.first = r.u64();
    e.second = r.u64();
  }
  r.finish();
  return SparseAssignment::from_sorted(m, n, entries);
}

void write_assignments(const fs::path& path, const SparseAssignment& a) {
  write_file(path, encode_assignments(a));
}

SparseAssignment read_assignments(const fs::path& path) {
  try {
    return decode_assignments(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace segref::io
