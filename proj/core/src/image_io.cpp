#include "sgglc/image.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#ifdef SGGLC_HAVE_PNG
#include <png.h>
#endif

namespace sgglc {

namespace {

// Binary PPM (P6) / PGM (P5) with maxval 255.
void skip_pnm_space(std::istream& is) {
  for (;;) {
    int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      return;
    }
  }
}

ImageBuffer load_pnm(std::istream& is, const std::string& path) {
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw FormatError("not a binary PPM/PGM file: " + path);
  const i64 channels = m1 == '6' ? 3 : 1;
  skip_pnm_space(is);
  i64 w = 0, h = 0, maxval = 0;
  is >> w;
  skip_pnm_space(is);
  is >> h;
  skip_pnm_space(is);
  is >> maxval;
  if (!is || w <= 0 || h <= 0) throw FormatError("bad PNM header: " + path);
  if (maxval != 255) throw FormatError("only maxval 255 PNM supported: " + path);
  is.get();  // single whitespace before payload
  ImageBuffer img(w, h, channels);
  if (!is.read(reinterpret_cast<char*>(img.data.data()),
               static_cast<std::streamsize>(img.data.size())))
    throw FormatError("truncated PNM payload: " + path);
  return img;
}

void save_pnm(const ImageBuffer& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << (img.channels == 3 ? "P6" : "P5") << "\n"
     << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data.data()),
           static_cast<std::streamsize>(img.data.size()));
  if (!os) throw IoError("short write: " + path);
}

#ifdef SGGLC_HAVE_PNG

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

ImageBuffer load_png(const std::string& path) {
  PngReadCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw IoError("cannot open: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw IoError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw IoError("libpng info init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw FormatError("corrupt PNG: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const png_byte color = png_get_color_type(ctx.png, ctx.info);
  const png_byte depth = png_get_bit_depth(ctx.png, ctx.info);

  if (depth == 16) png_set_strip_16(ctx.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
    png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const png_byte updated = png_get_color_type(ctx.png, ctx.info);
  const i64 channels = (updated == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  if (updated != PNG_COLOR_TYPE_GRAY && updated != PNG_COLOR_TYPE_RGB)
    throw FormatError("unsupported PNG color type: " + path);

  ImageBuffer img(static_cast<i64>(w), static_cast<i64>(h), channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
  return img;
}

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void save_png(const ImageBuffer& img, const std::string& path) {
  PngWriteCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw IoError("cannot open for write: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw IoError("libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw IoError("libpng info init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw IoError("PNG write failed: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_const_bytep> rows(static_cast<size_t>(img.height));
  for (i64 y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        img.data.data() + static_cast<size_t>(y * img.width * img.channels);
  png_write_rows(ctx.png, const_cast<png_bytepp>(rows.data()),
                 static_cast<png_uint_32>(img.height));
  png_write_end(ctx.png, nullptr);
}

#endif  // SGGLC_HAVE_PNG

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

bool png_supported() {
#ifdef SGGLC_HAVE_PNG
  return true;
#else
  return false;
#endif
}

ImageBuffer load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  unsigned char magic[8] = {0};
  is.read(reinterpret_cast<char*>(magic), 8);
  if (!is || is.gcount() < 2) throw FormatError("file too short: " + path);
  is.seekg(0);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return load_pnm(is, path);
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') {
#ifdef SGGLC_HAVE_PNG
    is.close();
    return load_png(path);
#else
    throw FormatError("PNG support not built in: " + path);
#endif
  }
  throw FormatError("unsupported image format (expected PNG, PPM or PGM): " + path);
}

void save_image(const ImageBuffer& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("save_image: 1 or 3 channels required");
  if (static_cast<i64>(img.data.size()) != img.width * img.height * img.channels)
    throw ShapeError("save_image: data length does not match dims");
  if (has_suffix(path, ".png")) {
#ifdef SGGLC_HAVE_PNG
    save_png(img, path);
    return;
#else
    throw FormatError("PNG support not built in; use .ppm/.pgm: " + path);
#endif
  }
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) {
    save_pnm(img, path);
    return;
  }
  throw FormatError("unsupported output extension (use .png/.ppm/.pgm): " + path);
}

}  // namespace sgglc
