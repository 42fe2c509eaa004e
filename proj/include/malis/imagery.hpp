#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "malis/errors.hpp"

namespace malis {

/// Row-major grid geometry; dims[0] varies slowest.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<std::uint32_t> dims);

  std::size_t ndim() const { return dims_.size(); }
  std::uint32_t dim(std::size_t d) const { return dims_[d]; }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  std::size_t size() const { return size_; }
  std::size_t stride(std::size_t d) const { return strides_[d]; }

  /// Coordinate of pixel `index` along dimension d.
  std::uint32_t coord(std::size_t index, std::size_t d) const {
    return static_cast<std::uint32_t>((index / strides_[d]) % dims_[d]);
  }
  /// Whether pixel `index` has a +1 neighbor along d.
  bool has_next(std::size_t index, std::size_t d) const { return coord(index, d) + 1 < dims_[d]; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }

 private:
  std::vector<std::uint32_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Real-valued intensity grid with every value in [0,1].
class Image {
 public:
  Image() = default;
  Image(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const Image& other) const = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

/// Integer label grid. Label 0 marks boundary/unlabeled pixels.
class Segmentation {
 public:
  Segmentation() = default;
  Segmentation(Shape shape, std::vector<std::uint32_t> labels);

  const Shape& shape() const { return shape_; }
  std::span<const std::uint32_t> labels() const { return labels_; }
  std::uint32_t operator[](std::size_t i) const { return labels_[i]; }

  bool operator==(const Segmentation& other) const = default;

 private:
  Shape shape_;
  std::vector<std::uint32_t> labels_;
};

/// Nearest-neighbor affinity graph. maps[d][i] is the affinity between pixel i
/// and its +1 neighbor along d, or kInvalidAffinity where no neighbor exists.
class AffinityGraph {
 public:
  static constexpr float kInvalidAffinity = -1.0f;

  AffinityGraph() = default;
  AffinityGraph(Shape shape, std::vector<std::vector<float>> maps);

  const Shape& shape() const { return shape_; }
  std::size_t node_count() const { return shape_.size(); }
  std::span<const float> map(std::size_t d) const { return maps_[d]; }
  float affinity(std::size_t d, std::size_t i) const { return maps_[d][i]; }
  bool valid(std::size_t d, std::size_t i) const { return shape_.has_next(i, d); }
  std::size_t valid_edge_count() const;

  /// Edge ids are d * node_count() + i.
  std::size_t edge_id(std::size_t d, std::size_t i) const { return d * shape_.size() + i; }

  bool operator==(const AffinityGraph& other) const = default;

 private:
  Shape shape_;
  std::vector<std::vector<float>> maps_;
};

void write_tensor(const std::filesystem::path& path, const Image& image);
Image read_tensor(const std::filesystem::path& path);

void write_labels(const std::filesystem::path& path, const Segmentation& seg);
Segmentation read_labels(const std::filesystem::path& path);

/// Writes one TENSRv01 file per edge dimension, `<stem>.d<k>.tensor`, with
/// invalid entries stored as 0. Returns the written paths.
std::vector<std::filesystem::path> write_affinities(const std::filesystem::path& stem,
                                                    const AffinityGraph& graph);

}  // namespace malis
