#include "gdvm/idx.hpp"

#include <fstream>
#include <sstream>

namespace gdvm {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("IDX file " + path.string() + " truncated in header");
  }
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex_magic(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::vector<std::uint8_t> read_payload(std::istream& is, std::size_t expected,
                                       const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(expected);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  const std::size_t got = static_cast<std::size_t>(is.gcount());
  if (got != expected) {
    throw FormatError("IDX file " + path.string() + " truncated: expected " +
                      std::to_string(expected) + " payload bytes, got " + std::to_string(got));
  }
  return buf;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw FormatError("cannot open IDX image file " + images_path.string());
  const std::uint32_t img_magic = read_be32(imgs, images_path);
  if (img_magic != kImageMagic) {
    throw FormatError("bad IDX image magic " + hex_magic(img_magic) + " in " +
                      images_path.string() + " (expected " + hex_magic(kImageMagic) + ")");
  }
  const std::size_t n = read_be32(imgs, images_path);
  const std::size_t h = read_be32(imgs, images_path);
  const std::size_t w = read_be32(imgs, images_path);
  const auto pixels = read_payload(imgs, n * h * w, images_path);

  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw FormatError("cannot open IDX label file " + labels_path.string());
  const std::uint32_t lbl_magic = read_be32(lbls, labels_path);
  if (lbl_magic != kLabelMagic) {
    throw FormatError("bad IDX label magic " + hex_magic(lbl_magic) + " in " +
                      labels_path.string() + " (expected " + hex_magic(kLabelMagic) + ")");
  }
  const std::size_t n_labels = read_be32(lbls, labels_path);
  const auto label_bytes = read_payload(lbls, n_labels, labels_path);

  if (n != n_labels) {
    throw DataError("IDX image count " + std::to_string(n) + " does not match label count " +
                    std::to_string(n_labels));
  }

  int max_label = 0;
  for (std::uint8_t b : label_bytes) max_label = std::max(max_label, static_cast<int>(b));

  Dataset ds;
  ds.task = {TaskFamily::kMultiClass, static_cast<std::size_t>(max_label) + 1};
  ds.features = Tensor({n, h * w});
  ds.labels.reserve(n);
  ds.sample_shape = {1, h, w};
  ds.provenance = "idx(" + images_path.filename().string() + ")";
  double* xs = ds.features.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    xs[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  for (std::uint8_t b : label_bytes) ds.labels.push_back(static_cast<int>(b));
  return ds;
}

void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& pixels, std::size_t count,
                      std::size_t height, std::size_t width) {
  if (pixels.size() != count * height * width) {
    throw DataError("write_idx_images: payload size does not match dimensions");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_be32(os, kImageMagic);
  write_be32(os, static_cast<std::uint32_t>(count));
  write_be32(os, static_cast<std::uint32_t>(height));
  write_be32(os, static_cast<std::uint32_t>(width));
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_be32(os, kLabelMagic);
  write_be32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()),
           static_cast<std::streamsize>(labels.size()));
}

}  // namespace gdvm
