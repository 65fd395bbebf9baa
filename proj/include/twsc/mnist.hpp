#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "twsc/config.hpp"
#include "twsc/errors.hpp"
#include "twsc/tensor.hpp"

namespace twsc {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

inline constexpr const char* kTrainImages = "train-images-idx3-ubyte";
inline constexpr const char* kTrainLabels = "train-labels-idx1-ubyte";
inline constexpr const char* kTestImages = "t10k-images-idx3-ubyte";
inline constexpr const char* kTestLabels = "t10k-labels-idx1-ubyte";

/// Grayscale images with pixels in [0,1], row-major per image.
struct ImageSet {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> pixels;

  std::size_t image_size() const { return static_cast<std::size_t>(rows) * cols; }
  const float* image(int i) const { return pixels.data() + static_cast<std::size_t>(i) * image_size(); }
};

struct Dataset {
  ImageSet train;
  ImageSet test;
  std::string checksum;  // FNV-1a over the four source files, hex
};

/// Expected set sizes; nullopt skips the check (used for synthetic fixtures).
struct MnistExpectation {
  std::optional<int> train = 60000;
  std::optional<int> test = 10000;
};

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t off) {
  return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
         (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IngestionError(p.filename().string(), "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline ImageSet parse_idx_images(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 16) throw IngestionError(name, "truncated header");
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic)
    throw IngestionError(name, "bad magic " + std::to_string(magic) + " (expected " + std::to_string(kIdxImageMagic) + ")");
  ImageSet s;
  s.count = static_cast<int>(read_be32(bytes, 4));
  s.rows = static_cast<int>(read_be32(bytes, 8));
  s.cols = static_cast<int>(read_be32(bytes, 12));
  const std::size_t need = 16 + static_cast<std::size_t>(s.count) * s.image_size();
  if (bytes.size() < need) throw IngestionError(name, "truncated: " + std::to_string(bytes.size()) + " bytes, need " + std::to_string(need));
  if (bytes.size() > need) throw IngestionError(name, "size mismatch: " + std::to_string(bytes.size() - need) + " trailing bytes");
  s.pixels.resize(need - 16);
  for (std::size_t i = 16; i < need; ++i) s.pixels[i - 16] = static_cast<float>(bytes[i]) / 255.0f;
  return s;
}

inline int parse_idx_label_count(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 8) throw IngestionError(name, "truncated header");
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic)
    throw IngestionError(name, "bad magic " + std::to_string(magic) + " (expected " + std::to_string(kIdxLabelMagic) + ")");
  const auto n = read_be32(bytes, 4);
  if (bytes.size() != 8 + static_cast<std::size_t>(n)) throw IngestionError(name, "size mismatch against header count");
  return static_cast<int>(n);
}

inline void fnv_update(std::uint64_t& h, const std::vector<unsigned char>& bytes) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace detail

/// Loads the four MNIST IDX files. Labels are validated for consistency and then dropped.
inline Dataset ingest_mnist(const std::filesystem::path& dir, MnistExpectation expect = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto load_images = [&](const char* file) {
    auto bytes = detail::read_file(dir / file);
    detail::fnv_update(h, bytes);
    return detail::parse_idx_images(bytes, file);
  };
  auto check_labels = [&](const char* file, int count) {
    auto bytes = detail::read_file(dir / file);
    detail::fnv_update(h, bytes);
    if (detail::parse_idx_label_count(bytes, file) != count)
      throw IngestionError(file, "label count does not match image count");
  };
  Dataset d;
  d.train = load_images(kTrainImages);
  check_labels(kTrainLabels, d.train.count);
  d.test = load_images(kTestImages);
  check_labels(kTestLabels, d.test.count);
  if (expect.train && d.train.count != *expect.train)
    throw IngestionError(kTrainImages, "size mismatch: " + std::to_string(d.train.count) + " images, expected " + std::to_string(*expect.train));
  if (expect.test && d.test.count != *expect.test)
    throw IngestionError(kTestImages, "size mismatch: " + std::to_string(d.test.count) + " images, expected " + std::to_string(*expect.test));
  if (d.train.rows != d.test.rows || d.train.cols != d.test.cols)
    throw IngestionError(kTestImages, "image size differs from the training set");
  d.checksum = hex64(h);
  return d;
}

/// Dataset directory: $TWSC_DATA_DIR if set, otherwise data/mnist.
inline std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("TWSC_DATA_DIR"); env && *env) return env;
  return "data/mnist";
}

/// Gathers the listed images into a [1][B][rows][cols] batch.
template <class T>
Tensor<T> gather_images(const ImageSet& set, const std::vector<int>& indices) {
  Tensor<T> out(Shape{1, static_cast<int>(indices.size()), set.rows, set.cols});
  const std::size_t n = set.image_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const float* src = set.image(indices[k]);
    T* dst = out.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(src[i]);
  }
  return out;
}

/// Writes an IDX image file; used to build fixtures.
inline void write_idx_images(const std::filesystem::path& path, int count, int rows, int cols,
                             const std::vector<unsigned char>& pixels, std::uint32_t magic = kIdxImageMagic) {
  std::ofstream f(path, std::ios::binary);
  auto be = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  be(magic);
  be(static_cast<std::uint32_t>(count));
  be(static_cast<std::uint32_t>(rows));
  be(static_cast<std::uint32_t>(cols));
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::filesystem::path& path, int count) {
  std::ofstream f(path, std::ios::binary);
  const unsigned char hdr[8] = {0, 0, 8, 1, static_cast<unsigned char>(count >> 24), static_cast<unsigned char>(count >> 16),
                                static_cast<unsigned char>(count >> 8), static_cast<unsigned char>(count)};
  f.write(reinterpret_cast<const char*>(hdr), 8);
  std::vector<char> zeros(static_cast<std::size_t>(count), 0);
  f.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
}

}  // namespace twsc
