// IDX (MNIST-family) dataset reader.
//
// Images file: big-endian magic 0x00000803, count, rows, cols, raw u8 pixels.
// Labels file: big-endian magic 0x00000801, count, raw u8 labels.
// Pixels are scaled to [0,1] and images flattened row-major. The parser
// fails closed: any malformed header or short read raises a parse error and
// no partial dataset is returned.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eafo/dataset.hpp"
#include "eafo/errors.hpp"

namespace eafo {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& file,
                                 const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw parse_error("idx: truncated file (missing " + std::string(what) + "): " + file);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

// The payload must match the header exactly; a short file is truncated and a
// long one carries trailing garbage. Checking sizes up front also keeps a
// corrupted header from requesting an absurd allocation.
inline void expect_file_size(const std::string& file, std::uint64_t expected) {
  std::error_code ec;
  const auto actual = std::filesystem::file_size(file, ec);
  if (ec) throw parse_error("idx: cannot stat file: " + file);
  if (actual < expected) throw parse_error("idx: truncated file (payload short): " + file);
  if (actual > expected) throw parse_error("idx: oversized file (trailing bytes): " + file);
}

}  // namespace detail

inline Dataset load_idx_dataset(const std::string& images_path,
                                const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw parse_error("idx: cannot open images file: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw parse_error("idx: cannot open labels file: " + labels_path);

  const std::uint32_t img_magic = detail::read_be_u32(img, images_path, "magic");
  if (img_magic != 0x00000803u)
    throw parse_error("idx: bad magic in images file (expected 0x00000803): " + images_path);
  const std::uint32_t lab_magic = detail::read_be_u32(lab, labels_path, "magic");
  if (lab_magic != 0x00000801u)
    throw parse_error("idx: bad magic in labels file (expected 0x00000801): " + labels_path);

  const std::uint32_t n_img = detail::read_be_u32(img, images_path, "count");
  const std::uint32_t rows = detail::read_be_u32(img, images_path, "rows");
  const std::uint32_t cols = detail::read_be_u32(img, images_path, "cols");
  const std::uint32_t n_lab = detail::read_be_u32(lab, labels_path, "count");
  if (n_img != n_lab)
    throw parse_error("idx: count mismatch: " + std::to_string(n_img) + " images vs " +
                      std::to_string(n_lab) + " labels");
  if (n_img == 0) throw parse_error("idx: empty dataset: " + images_path);
  if (rows == 0 || cols == 0) throw parse_error("idx: zero image dimensions: " + images_path);
  if (rows > 4096 || cols > 4096 || n_img > 100000000u)
    throw parse_error("idx: implausible header dimensions: " + images_path);

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  detail::expect_file_size(images_path, 16 + static_cast<std::uint64_t>(n_img) * pixels);
  detail::expect_file_size(labels_path, 8 + static_cast<std::uint64_t>(n_lab));
  std::vector<unsigned char> buf(static_cast<std::size_t>(n_img) * pixels);
  if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw parse_error("idx: truncated file (missing pixel data): " + images_path);
  std::vector<unsigned char> lab_buf(n_img);
  if (!lab.read(reinterpret_cast<char*>(lab_buf.data()),
                static_cast<std::streamsize>(lab_buf.size())))
    throw parse_error("idx: truncated file (missing label data): " + labels_path);

  Dataset data;
  data.feature_dim = static_cast<int>(pixels);
  data.features.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    data.features[i] = static_cast<float>(buf[i]) / 255.0f;
  data.labels.resize(n_img);
  int max_label = 0;
  for (std::size_t i = 0; i < lab_buf.size(); ++i) {
    data.labels[i] = static_cast<int>(lab_buf[i]);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = max_label + 1;
  if (data.num_classes < 2)
    throw parse_error("idx: labels contain fewer than 2 classes: " + labels_path);
  return data;
}

}  // namespace eafo
