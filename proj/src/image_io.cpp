#include <png.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "igan/data.hpp"

namespace igan::data {

Image8 read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  img.format = PNG_FORMAT_RGB;  // libpng strips alpha, expands palette and grey
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.rgb.size() != image.width * image.height * 3) throw DataError("write_png: raster size mismatch");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t ppm_number(std::istream& in, const std::filesystem::path& path) {
  const auto tok = ppm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(ch); })) {
    throw DataError("malformed PPM header in " + path.string());
  }
  return std::stoul(tok);
}

}  // namespace

Image8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw DataError("not a binary PPM (P6): " + path.string());
  Image8 out;
  out.width = ppm_number(in, path);
  out.height = ppm_number(in, path);
  const auto maxval = ppm_number(in, path);
  if (out.width == 0 || out.height == 0 || maxval != 255) {
    throw DataError("unsupported PPM (need nonzero size and maxval 255): " + path.string());
  }
  out.rgb.resize(out.width * out.height * 3);
  in.read(reinterpret_cast<char*>(out.rgb.data()), static_cast<std::streamsize>(out.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.rgb.size())) throw DataError("truncated PPM " + path.string());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw DataError("write to " + path.string() + " failed");
}

Image8 read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw DataError("unsupported image extension: " + path.string());
}

}  // namespace igan::data
