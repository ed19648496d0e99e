#include "patchdrop/dataset.hpp"

#include <cstring>
#include <fstream>
#include <unordered_set>

namespace patchdrop {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'D', '1'};

template <typename T>
T read_le(std::ifstream& is, const char* what) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) {
    throw TruncatedFile(std::string("file ends inside ") + what);
  }
  T v = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    v = static_cast<T>((v << 8) | b[i]);
  }
  return v;
}

template <typename T>
void write_le(std::ofstream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    b[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

}  // namespace

void Dataset::validate_splits() const {
  std::unordered_set<std::uint32_t> seen;
  for (const auto* split : {&train_split, &val_split, &test_split}) {
    for (std::uint32_t idx : *split) {
      if (idx >= count()) {
        throw InvalidSplit("split index " + std::to_string(idx) +
                           " exceeds image count " + std::to_string(count()));
      }
      if (!seen.insert(idx).second) {
        throw InvalidSplit("splits overlap at index " + std::to_string(idx));
      }
    }
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset: " + path.string());
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw BadMagic("not a TID dataset: " + path.string());
  }
  Dataset d;
  const std::uint32_t count = read_le<std::uint32_t>(is, "image count");
  d.height = read_le<std::uint16_t>(is, "height");
  d.width = read_le<std::uint16_t>(is, "width");
  d.channels = read_le<std::uint8_t>(is, "channels");
  d.classes = read_le<std::uint16_t>(is, "class count");
  if (d.height == 0 || d.width == 0 || d.channels == 0 || d.classes == 0) {
    throw Error("dataset header has zero extents");
  }

  const std::size_t img_bytes = d.image_bytes();
  d.pixels.resize(static_cast<std::size_t>(count) * img_bytes);
  d.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!is.read(reinterpret_cast<char*>(d.pixels.data() + i * img_bytes),
                 static_cast<std::streamsize>(img_bytes))) {
      throw TruncatedFile("file ends inside image " + std::to_string(i));
    }
    const std::uint16_t label = read_le<std::uint16_t>(is, "label");
    if (label >= d.classes) {
      throw LabelOutOfRange("label " + std::to_string(label) + " of image " +
                            std::to_string(i) + " exceeds class count " +
                            std::to_string(d.classes));
    }
    d.labels[i] = label;
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open dataset for writing: " + path.string());
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.count()));
  write_le<std::uint16_t>(os, static_cast<std::uint16_t>(data.height));
  write_le<std::uint16_t>(os, static_cast<std::uint16_t>(data.width));
  write_le<std::uint8_t>(os, static_cast<std::uint8_t>(data.channels));
  write_le<std::uint16_t>(os, static_cast<std::uint16_t>(data.classes));
  const std::size_t img_bytes = data.image_bytes();
  for (std::size_t i = 0; i < data.count(); ++i) {
    os.write(reinterpret_cast<const char*>(data.image(i)),
             static_cast<std::streamsize>(img_bytes));
    write_le<std::uint16_t>(os, data.labels[i]);
  }
  if (!os) throw Error("dataset write failed: " + path.string());
}

void load_splits(const std::filesystem::path& path, Dataset& data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open split file: " + path.string());
  const std::uint32_t nt = read_le<std::uint32_t>(is, "train count");
  const std::uint32_t nv = read_le<std::uint32_t>(is, "val count");
  const std::uint32_t ns = read_le<std::uint32_t>(is, "test count");
  auto read_split = [&is](std::uint32_t n, std::vector<std::uint32_t>& out) {
    out.resize(n);
    for (std::uint32_t& v : out) v = read_le<std::uint32_t>(is, "split index");
  };
  read_split(nt, data.train_split);
  read_split(nv, data.val_split);
  read_split(ns, data.test_split);
  data.validate_splits();
}

void save_splits(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open split file for writing: " + path.string());
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.train_split.size()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.val_split.size()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.test_split.size()));
  for (const auto* split : {&data.train_split, &data.val_split,
                            &data.test_split}) {
    for (std::uint32_t v : *split) write_le<std::uint32_t>(os, v);
  }
  if (!os) throw Error("split write failed: " + path.string());
}

Tensor make_image_tensor(const Dataset& data,
                         const std::vector<std::uint32_t>& indices) {
  const std::size_t img = data.image_bytes();
  Tensor t = Tensor::zeros({indices.size(), data.channels, data.height,
                            data.width});
  double* out = t.values_mut().data();
  constexpr double kInv255 = 1.0 / 255.0;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::uint8_t* src = data.image(indices[b]);
    double* dst = out + b * img;
    for (std::size_t i = 0; i < img; ++i) dst[i] = src[i] * kInv255;
  }
  return t;
}

}  // namespace patchdrop
