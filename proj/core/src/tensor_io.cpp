#include "iqtcfm/tensor_io.hpp"

#include <png.h>
#include <zlib.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "iqtcfm/errors.hpp"

namespace iqtcfm {
namespace {

constexpr char kMagic[12] = {'I', 'Q', 'T', 'C', 'F', 'M', 'T', 'E', 'N', 'S', 'O', 'R'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF), char((v >> 24) & 0xFF)};
  out.append(b, 4);
}

uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

bool is_little_endian_host() {
  const uint32_t x = 1;
  return *reinterpret_cast<const unsigned char*>(&x) == 1;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads a possibly gzip-compressed file; gzread passes plain files through.
std::vector<unsigned char> read_maybe_gz(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw IoError("decompression failed for " + path.string());
  return out;
}

}  // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  if (t.rank() == 0) throw IoError("refusing to write rank-0 tensor");
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, uint32_t(t.rank()));
  for (uint32_t d : t.dims) put_u32(out, d);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), std::streamsize(out.size()));
  static_assert(sizeof(float) == 4);
  if (is_little_endian_host()) {
    f.write(reinterpret_cast<const char*>(t.data.data()), std::streamsize(t.data.size() * 4));
  } else {
    for (float v : t.data) {
      unsigned char b[4];
      std::memcpy(b, &v, 4);
      std::swap(b[0], b[3]);
      std::swap(b[1], b[2]);
      f.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!f) throw IoError("short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError(path.string() + ": not a raw tensor file");
  if (get_u32(bytes.data() + 12) != kVersion)
    throw IoError(path.string() + ": unsupported raw tensor version");
  uint32_t rank = get_u32(bytes.data() + 16);
  if (rank == 0 || rank > 8) throw IoError(path.string() + ": bad tensor rank");
  size_t off = 20;
  if (bytes.size() < off + 4 * rank) throw IoError(path.string() + ": truncated header");
  std::vector<uint32_t> dims(rank);
  size_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    dims[i] = get_u32(bytes.data() + off);
    off += 4;
    n *= dims[i];
  }
  if (bytes.size() != off + 4 * n)
    throw IoError(path.string() + ": header/payload size mismatch (" +
                  std::to_string(bytes.size() - off) + " payload bytes, expected " +
                  std::to_string(4 * n) + ")");
  Tensor t;
  t.dims = std::move(dims);
  t.data.resize(n);
  if (is_little_endian_host()) {
    std::memcpy(t.data.data(), bytes.data() + off, 4 * n);
  } else {
    for (size_t i = 0; i < n; ++i) {
      unsigned char b[4] = {bytes[off + 4 * i + 3], bytes[off + 4 * i + 2],
                            bytes[off + 4 * i + 1], bytes[off + 4 * i]};
      std::memcpy(&t.data[i], b, 4);
    }
  }
  return t;
}

namespace {

// Minimal NIfTI-1 reader: single-file (.nii/.nii.gz), scalar single-frame.
Tensor read_nifti(const std::filesystem::path& path) {
  auto bytes = read_maybe_gz(path);
  if (bytes.size() < 352) throw IoError(path.string() + ": too short for a NIfTI-1 header");

  bool swap = false;
  auto rd_i32 = [&](size_t off) {
    uint32_t v = get_u32(bytes.data() + off);
    if (swap) v = __builtin_bswap32(v);
    return int32_t(v);
  };
  auto rd_i16 = [&](size_t off) {
    uint16_t v = uint16_t(bytes[off]) | uint16_t(bytes[off + 1]) << 8;
    if (swap) v = uint16_t((v >> 8) | (v << 8));
    return int16_t(v);
  };
  auto rd_f32 = [&](size_t off) {
    uint32_t v = get_u32(bytes.data() + off);
    if (swap) v = __builtin_bswap32(v);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  };

  if (rd_i32(0) != 348) {
    swap = true;
    if (rd_i32(0) != 348) throw IoError(path.string() + ": bad NIfTI sizeof_hdr");
  }
  const char* magic = reinterpret_cast<const char*>(bytes.data() + 344);
  if (std::memcmp(magic, "n+1", 4) != 0) {
    if (std::memcmp(magic, "ni1", 4) == 0)
      throw IoError(path.string() + ": two-file NIfTI (.hdr/.img) is not supported");
    throw IoError(path.string() + ": missing NIfTI magic");
  }

  int16_t ndim = rd_i16(40);
  if (ndim < 2 || ndim > 7) throw IoError(path.string() + ": unsupported dim[0]=" + std::to_string(ndim));
  int64_t nx = rd_i16(42), ny = rd_i16(44);
  int64_t nz = ndim >= 3 ? rd_i16(46) : 1;
  for (int d = 4; d <= ndim; ++d) {
    int16_t extra = rd_i16(size_t(40 + 2 * d));
    if (extra > 1)
      throw IoError(path.string() + ": only scalar single-frame images are supported (dim[" +
                    std::to_string(d) + "]=" + std::to_string(extra) + ")");
  }
  if (nx < 1 || ny < 1 || nz < 1) throw IoError(path.string() + ": bad NIfTI dimensions");

  int16_t datatype = rd_i16(70);
  float vox_offset = rd_f32(108);
  float scl_slope = rd_f32(112);
  float scl_inter = rd_f32(116);
  size_t off = size_t(vox_offset);
  if (off < 348 || off > bytes.size()) throw IoError(path.string() + ": bad vox_offset");

  size_t n = size_t(nx) * size_t(ny) * size_t(nz);
  size_t esize;
  switch (datatype) {
    case 2: esize = 1; break;     // uint8
    case 4: esize = 2; break;     // int16
    case 8: esize = 4; break;     // int32
    case 16: esize = 4; break;    // float32
    case 64: esize = 8; break;    // float64
    case 256: esize = 1; break;   // int8
    case 512: esize = 2; break;   // uint16
    default:
      throw IoError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  if (bytes.size() < off + n * esize)
    throw IoError(path.string() + ": payload shorter than header promises (" +
                  std::to_string(bytes.size() - off) + " bytes, need " + std::to_string(n * esize) + ")");

  // NIfTI stores x fastest, so a straight copy lands in (z,y,x) row-major.
  Tensor t;
  t.dims = {uint32_t(nz), uint32_t(ny), uint32_t(nx)};
  t.data.resize(n);
  const unsigned char* p = bytes.data() + off;
  auto fetch_u16 = [&](size_t i) {
    uint16_t v = uint16_t(p[2 * i]) | uint16_t(p[2 * i + 1]) << 8;
    return swap ? uint16_t((v >> 8) | (v << 8)) : v;
  };
  auto fetch_u32 = [&](size_t i) {
    uint32_t v = get_u32(p + 4 * i);
    return swap ? __builtin_bswap32(v) : v;
  };
  for (size_t i = 0; i < n; ++i) {
    double v;
    switch (datatype) {
      case 2: v = p[i]; break;
      case 256: v = int8_t(p[i]); break;
      case 4: v = int16_t(fetch_u16(i)); break;
      case 512: v = fetch_u16(i); break;
      case 8: v = int32_t(fetch_u32(i)); break;
      case 16: {
        uint32_t u = fetch_u32(i);
        float f;
        std::memcpy(&f, &u, 4);
        v = f;
        break;
      }
      case 64: {
        uint64_t u;
        std::memcpy(&u, p + 8 * i, 8);
        if (swap) u = __builtin_bswap64(u);
        double d;
        std::memcpy(&d, &u, 8);
        v = d;
        break;
      }
      default: v = 0;
    }
    if (scl_slope != 0.0f) v = double(scl_slope) * v + double(scl_inter);
    t.data[i] = float(v);
  }
  return t;
}

Tensor normalize_min_max(Tensor t, const std::filesystem::path& path, double* out_min, double* out_max) {
  if (!t.all_finite()) throw IoError(path.string() + ": volume contains non-finite voxels");
  float lo = min_value(t), hi = max_value(t);
  *out_min = lo;
  *out_max = hi;
  if (hi > lo) {
    float range = hi - lo;
    for (float& v : t.data) v = (v - lo) / range;
  } else {
    // Constant volume: map to all zeros instead of dividing by zero.
    for (float& v : t.data) v = 0.0f;
  }
  return t;
}

bool has_ext(const std::filesystem::path& p, const char* e1, const char* e2 = nullptr) {
  std::string s = p.filename().string();
  for (char& c : s) c = char(std::tolower(c));
  auto ends = [&](const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  return ends(e1) || (e2 && ends(e2));
}

}  // namespace

LoadedVolume load_volume(const std::filesystem::path& path) {
  Tensor raw;
  if (has_ext(path, ".nii", ".nii.gz")) {
    raw = read_nifti(path);
  } else {
    raw = read_tensor(path);
    if (raw.rank() != 3) throw IoError(path.string() + ": expected a rank-3 tensor volume");
  }
  LoadedVolume out;
  out.tensor = normalize_min_max(std::move(raw), path, &out.orig_min, &out.orig_max);
  return out;
}

void save_volume(const Tensor& t, const std::filesystem::path& path) {
  if (!t.all_finite()) throw IoError("refusing to save non-finite tensor to " + path.string());
  if (has_ext(path, ".png"))
    write_png_gray16(t, path);
  else
    write_tensor(t, path);
}

std::vector<Tensor> slice_volume(const Tensor& volume) {
  if (volume.rank() != 3) throw std::invalid_argument("slice_volume: rank-3 tensor required");
  std::vector<Tensor> slices;
  slices.reserve(volume.dims[0]);
  size_t hw = size_t(volume.dims[1]) * volume.dims[2];
  for (uint32_t z = 0; z < volume.dims[0]; ++z) {
    Tensor s({1, volume.dims[1], volume.dims[2]});
    std::copy_n(volume.data.begin() + std::ptrdiff_t(z * hw), hw, s.data.begin());
    slices.push_back(std::move(s));
  }
  return slices;
}

uint16_t quantize16(float v) {
  v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  double q = std::floor(double(v) * 65535.0 + 0.5);  // round half up
  return uint16_t(q);
}

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* f = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, &info);
    if (f) fclose(f);
  }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* f = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    if (f) fclose(f);
  }
};

}  // namespace

void write_png_gray16(const Tensor& t, const std::filesystem::path& path) {
  if (t.rank() != 3 || t.c() != 1)
    throw std::invalid_argument("write_png_gray16: (1,H,W) tensor required, got " + shape_str(t.dims));
  PngWriter w;
  w.f = fopen(path.string().c_str(), "wb");
  if (!w.f) throw IoError("cannot write " + path.string());
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (setjmp(png_jmpbuf(w.png))) throw IoError("libpng failure writing " + path.string());
  png_init_io(w.png, w.f);
  png_set_IHDR(w.png, w.info, t.w(), t.h(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<unsigned char> row(size_t(t.w()) * 2);
  for (uint32_t y = 0; y < t.h(); ++y) {
    for (uint32_t x = 0; x < t.w(); ++x) {
      uint16_t q = quantize16(t(0, y, x));
      row[2 * x] = (unsigned char)(q >> 8);  // PNG samples are big-endian
      row[2 * x + 1] = (unsigned char)(q & 0xFF);
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

Tensor read_png_gray16(const std::filesystem::path& path) {
  PngReader r;
  r.f = fopen(path.string().c_str(), "rb");
  if (!r.f) throw IoError("cannot open " + path.string());
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (setjmp(png_jmpbuf(r.png))) throw IoError("libpng failure reading " + path.string());
  png_init_io(r.png, r.f);
  png_read_info(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 16)
    throw IoError(path.string() + ": expected 16-bit grayscale PNG");
  uint32_t w = png_get_image_width(r.png, r.info);
  uint32_t h = png_get_image_height(r.png, r.info);
  Tensor t({1, h, w});
  std::vector<unsigned char> row(size_t(w) * 2);
  for (uint32_t y = 0; y < h; ++y) {
    png_read_row(r.png, row.data(), nullptr);
    for (uint32_t x = 0; x < w; ++x) {
      uint16_t q = uint16_t(row[2 * x]) << 8 | row[2 * x + 1];
      t(0, y, x) = float(q) / 65535.0f;
    }
  }
  return t;
}

void write_png_rgb8(const Tensor& t, const std::filesystem::path& path) {
  if (t.rank() != 3 || t.c() != 3)
    throw std::invalid_argument("write_png_rgb8: (3,H,W) tensor required, got " + shape_str(t.dims));
  PngWriter w;
  w.f = fopen(path.string().c_str(), "wb");
  if (!w.f) throw IoError("cannot write " + path.string());
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (setjmp(png_jmpbuf(w.png))) throw IoError("libpng failure writing " + path.string());
  png_init_io(w.png, w.f);
  png_set_IHDR(w.png, w.info, t.w(), t.h(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<unsigned char> row(size_t(t.w()) * 3);
  for (uint32_t y = 0; y < t.h(); ++y) {
    for (uint32_t x = 0; x < t.w(); ++x)
      for (uint32_t ch = 0; ch < 3; ++ch) {
        float v = t(ch, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        row[3 * x + ch] = (unsigned char)std::lround(v * 255.0);
      }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

}  // namespace iqtcfm
