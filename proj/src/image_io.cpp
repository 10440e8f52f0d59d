#include "mrb/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "mrb/weights.hpp"

namespace mrb {

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

int next_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns a nonnegative integer.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  if (!in || v < 0) throw IoError("malformed PNM header");
  return v;
}

Image load_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[2] = {0, 0};
  f.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '6' && magic[1] != '5')) {
    throw IoError(path + ": not a P6/P5 PNM file");
  }
  const int channels = (magic[1] == '6') ? 3 : 1;
  const int w = next_pnm_token(f);
  const int h = next_pnm_token(f);
  const int maxval = next_pnm_token(f);
  if (maxval != 255) throw IoError(path + ": only 8-bit PNM supported");
  f.get();  // single whitespace after header
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError(path + ": truncated pixel data");
  }
  Image img({h, w, channels});
  for (size_t i = 0; i < raw.size(); ++i) {
    img.array()[static_cast<Eigen::Index>(i)] = raw[i] / 255.0;
  }
  return img;
}

Image load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  std::vector<uint8_t> data;
  std::vector<png_bytep> rows;
  int w = 0, h = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path + ": PNG decode failed");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path + ": unsupported PNG channel count");
  }
  const size_t row_bytes = png_get_rowbytes(png, info);
  data.resize(row_bytes * static_cast<size_t>(h));
  rows.resize(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = data.data() + row_bytes * static_cast<size_t>(y);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Image img({h, w, channels});
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = data.data() + row_bytes * static_cast<size_t>(y);
    for (int x = 0; x < w * channels; ++x) {
      img.array()[(static_cast<Eigen::Index>(y) * w * channels) + x] = row[x] / 255.0;
    }
  }
  return img;
}

}  // namespace

Image load_image(const std::string& path) {
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) return load_pnm(path);
  if (has_suffix(path, ".png")) return load_png(path);
  throw IoError(path + ": unsupported image format (want .ppm/.pgm/.png)");
}

void save_ppm(const std::string& path, const Image& img) {
  if (img.channels() != 3 && img.channels() != 1) {
    throw IoError("save_ppm wants 1 or 3 channels");
  }
  std::ostringstream os;
  const bool color = img.channels() == 3;
  os << (color ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n255\n";
  std::string header = os.str();
  std::string bytes;
  bytes.reserve(header.size() + static_cast<size_t>(img.numel()));
  bytes += header;
  for (Eigen::Index i = 0; i < img.numel(); ++i) {
    double v = std::min(1.0, std::max(0.0, img.array()[i]));
    bytes.push_back(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0))));
  }
  write_file_bytes(path, bytes);
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw ShapeError("to_luma wants 1 or 3 channels");
  Image out({img.height(), img.width(), 1});
  for (int h = 0; h < img.height(); ++h) {
    for (int w = 0; w < img.width(); ++w) {
      out.at(h, w, 0) =
          0.299 * img.at(h, w, 0) + 0.587 * img.at(h, w, 1) + 0.114 * img.at(h, w, 2);
    }
  }
  return out;
}

}  // namespace mrb
