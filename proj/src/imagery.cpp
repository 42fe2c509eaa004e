#include "malis/imagery.hpp"

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <string>

namespace malis {

namespace {

constexpr char kTensorMagic[8] = {'T', 'E', 'N', 'S', 'R', 'v', '0', '1'};
constexpr char kLabelMagic[8] = {'L', 'A', 'B', 'L', 'v', '0', '1', '\0'};

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void check_shape(const std::vector<std::uint32_t>& dims) {
  if (dims.size() < 2 || dims.size() > 3)
    throw std::invalid_argument("grid must have 2 or 3 dimensions, got " +
                                std::to_string(dims.size()));
  for (auto d : dims)
    if (d == 0) throw std::invalid_argument("grid dimensions must be positive");
}

std::string os_cause() { return std::strerror(errno); }

template <typename Payload>
void write_grid(const std::filesystem::path& path, const char (&magic)[8], const Shape& shape,
                std::span<const Payload> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), os_cause());
  out.write(magic, 8);
  const auto ndim = static_cast<std::uint32_t>(shape.ndim());
  out.write(reinterpret_cast<const char*>(&ndim), sizeof ndim);
  for (auto d : shape.dims()) out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size_bytes()));
  out.close();
  if (!out) throw IoError(path.string(), os_cause());
}

template <typename Payload>
std::pair<Shape, std::vector<Payload>> read_grid(const std::filesystem::path& path,
                                                 const char (&magic)[8]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), os_cause());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), os_cause());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0)
    throw FormatError("magic", path.string());
  std::size_t pos = 8;
  auto read_u32 = [&](const char* what) {
    if (bytes.size() < pos + 4) throw FormatError("length", path.string() + ": truncated " + what);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  };
  const std::uint32_t ndim = read_u32("ndim");
  if (ndim < 2 || ndim > 3)
    throw FormatError("ndim", path.string() + ": ndim " + std::to_string(ndim));
  std::vector<std::uint32_t> dims(ndim);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = read_u32("dims");
    if (d == 0) throw FormatError("dims", path.string() + ": zero extent");
    count *= d;
  }
  const std::uint64_t remaining = bytes.size() - pos;
  if (count > remaining / sizeof(Payload) || remaining != count * sizeof(Payload))
    throw FormatError("length", path.string() + ": expected " + std::to_string(count) +
                                    " values, payload has " + std::to_string(remaining) +
                                    " bytes");
  std::vector<Payload> payload(count);
  std::memcpy(payload.data(), bytes.data() + pos, remaining);
  return {Shape(std::move(dims)), std::move(payload)};
}

}  // namespace

Shape::Shape(std::vector<std::uint32_t> dims) : dims_(std::move(dims)) {
  check_shape(dims_);
  strides_.assign(dims_.size(), 1);
  for (std::size_t d = dims_.size() - 1; d > 0; --d) strides_[d - 1] = strides_[d] * dims_[d];
  size_ = strides_[0] * dims_[0];
}

Image::Image(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_.size())
    throw std::invalid_argument("image has " + std::to_string(values_.size()) +
                                " values for a grid of " + std::to_string(shape_.size()));
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!(values_[i] >= 0.0f && values_[i] <= 1.0f)) throw RangeError(i, "outside [0,1]");
}

Segmentation::Segmentation(Shape shape, std::vector<std::uint32_t> labels)
    : shape_(std::move(shape)), labels_(std::move(labels)) {
  if (labels_.size() != shape_.size())
    throw std::invalid_argument("segmentation has " + std::to_string(labels_.size()) +
                                " labels for a grid of " + std::to_string(shape_.size()));
}

AffinityGraph::AffinityGraph(Shape shape, std::vector<std::vector<float>> maps)
    : shape_(std::move(shape)), maps_(std::move(maps)) {
  if (maps_.size() != shape_.ndim())
    throw std::invalid_argument("affinity graph needs one map per dimension");
  for (std::size_t d = 0; d < maps_.size(); ++d) {
    auto& map = maps_[d];
    if (map.size() != shape_.size())
      throw std::invalid_argument("affinity map size does not match grid");
    for (std::size_t i = 0; i < map.size(); ++i) {
      if (!shape_.has_next(i, d)) {
        map[i] = kInvalidAffinity;
      } else if (!(map[i] >= 0.0f && map[i] <= 1.0f)) {
        throw RangeError(edge_id(d, i), "outside [0,1]");
      }
    }
  }
}

std::size_t AffinityGraph::valid_edge_count() const {
  std::size_t total = 0;
  for (std::size_t d = 0; d < shape_.ndim(); ++d)
    total += shape_.size() / shape_.dim(d) * (shape_.dim(d) - 1);
  return total;
}

void write_tensor(const std::filesystem::path& path, const Image& image) {
  write_grid(path, kTensorMagic, image.shape(), image.values());
}

Image read_tensor(const std::filesystem::path& path) {
  auto [shape, values] = read_grid<float>(path, kTensorMagic);
  return Image(std::move(shape), std::move(values));
}

void write_labels(const std::filesystem::path& path, const Segmentation& seg) {
  write_grid(path, kLabelMagic, seg.shape(), seg.labels());
}

Segmentation read_labels(const std::filesystem::path& path) {
  auto [shape, labels] = read_grid<std::uint32_t>(path, kLabelMagic);
  return Segmentation(std::move(shape), std::move(labels));
}

std::vector<std::filesystem::path> write_affinities(const std::filesystem::path& stem,
                                                    const AffinityGraph& graph) {
  std::vector<std::filesystem::path> paths;
  for (std::size_t d = 0; d < graph.shape().ndim(); ++d) {
    std::vector<float> values(graph.map(d).begin(), graph.map(d).end());
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!graph.valid(d, i)) values[i] = 0.0f;
    auto path = stem;
    path += ".d" + std::to_string(d) + ".tensor";
    write_tensor(path, Image(graph.shape(), std::move(values)));
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace malis
