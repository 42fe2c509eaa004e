#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "malis/imagery.hpp"
#include "malis/maximin.hpp"

namespace malis {

/// Layer layout of the convolutional affinity classifier. Layer 0 reads the
/// single intensity map, hidden layers carry `maps` feature maps and the last
/// layer emits one map per edge dimension. Every layer applies a k^ndim valid
/// convolution followed by the logistic sigmoid.
struct Architecture {
  std::uint32_t ndim = 2;
  std::uint32_t layers = 3;
  std::uint32_t maps = 4;
  std::uint32_t k = 5;

  void validate() const;

  std::uint32_t field_of_view() const { return 1 + layers * (k - 1); }
  /// Distance from the patch center to its border.
  std::uint32_t radius() const { return layers * (k - 1) / 2; }
  std::uint32_t in_maps(std::uint32_t layer) const { return layer == 0 ? 1 : maps; }
  std::uint32_t out_maps(std::uint32_t layer) const { return layer + 1 == layers ? ndim : maps; }
  std::size_t kernel_volume() const;
  std::size_t parameter_count() const;

  bool operator==(const Architecture&) const = default;
};

/// Feature maps over a (z, y, x) box; 2D data uses z extent 1.
template <typename T>
struct Volume {
  std::uint32_t maps = 0;
  std::array<std::uint32_t, 3> extent{1, 1, 1};
  std::vector<T> data;

  Volume() = default;
  Volume(std::uint32_t maps, std::array<std::uint32_t, 3> extent)
      : maps(maps), extent(extent), data(maps * plane(), T(0)) {}

  std::size_t plane() const { return std::size_t{extent[0]} * extent[1] * extent[2]; }
  T* map(std::uint32_t m) { return data.data() + m * plane(); }
  const T* map(std::uint32_t m) const { return data.data() + m * plane(); }
};

/// Trainable weights stored as one flat vector. Per layer: filters ordered
/// [out][in][z][y][x], then one bias per output map.
template <typename T>
class ClassifierParams {
 public:
  ClassifierParams() = default;
  explicit ClassifierParams(const Architecture& arch);
  ClassifierParams(const Architecture& arch, std::vector<T> flat);

  /// Uniform in [-a, a] with a = 1/sqrt(fan-in) for every weight and bias.
  static ClassifierParams random(const Architecture& arch, Rng& rng);

  const Architecture& architecture() const { return arch_; }
  std::span<const T> flat() const { return flat_; }
  std::span<T> flat() { return flat_; }
  std::size_t size() const { return flat_.size(); }

  std::size_t weight_offset(std::uint32_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::uint32_t layer) const;

  template <typename U>
  ClassifierParams<U> cast() const {
    return ClassifierParams<U>(arch_, std::vector<U>(flat_.begin(), flat_.end()));
  }

  bool operator==(const ClassifierParams&) const = default;

 private:
  Architecture arch_;
  std::vector<T> flat_;
  std::vector<std::size_t> offsets_;
};

using Params32 = ClassifierParams<float>;
using Params64 = ClassifierParams<double>;

/// An image zero-padded by the classifier radius so that windows and patches
/// near the border can be cut without bounds checks.
template <typename T>
class PaddedImage {
 public:
  PaddedImage(const Image& image, std::uint32_t radius);

  const Shape& shape() const { return shape_; }
  std::uint32_t radius() const { return radius_; }

  /// Input box for computing outputs on [origin, origin + extent) of the image grid.
  Volume<T> window(std::array<std::uint32_t, 3> origin, std::array<std::uint32_t, 3> extent) const;
  /// Field-of-view patch for the edges owned by pixel `index`.
  Volume<T> patch(std::size_t index) const;

 private:
  Shape shape_;
  std::uint32_t radius_;
  Volume<T> padded_;
};

/// Image grid coordinates as a (z, y, x) triple.
std::array<std::uint32_t, 3> spatial_extent(const Shape& shape);
std::array<std::uint32_t, 3> spatial_coords(const Shape& shape, std::size_t index);

/// Affinity of edge dimension `edge_dim` read at the center of a patch whose
/// side equals the field of view.
template <typename T>
T forward_patch(const ClassifierParams<T>& params, const Volume<T>& patch, std::uint32_t edge_dim);
template <typename T>
T forward_patch(const ClassifierParams<T>& params, const Image& patch, std::uint32_t edge_dim);

/// Dense affinities for the image grid box [origin, origin + extent).
template <typename T>
AffinityGraph forward_region(const ClassifierParams<T>& params, const PaddedImage<T>& image,
                             std::array<std::uint32_t, 3> origin,
                             std::array<std::uint32_t, 3> extent);

/// Every edge affinity of the image in one pass, zero-padding past the border.
template <typename T>
AffinityGraph forward_image(const ClassifierParams<T>& params, const Image& image);

/// Reverse-mode gradient of the patch affinity w.r.t. every parameter, scaled
/// by upstream_grad. Returns the affinity and the flat gradient.
template <typename T>
struct EdgeGradient {
  T affinity;
  std::vector<T> gradient;
};

template <typename T>
EdgeGradient<T> backward_edge(const ClassifierParams<T>& params, const Volume<T>& patch,
                              std::uint32_t edge_dim, T upstream_grad);
template <typename T>
EdgeGradient<T> backward_edge(const ClassifierParams<T>& params, const Image& patch,
                              std::uint32_t edge_dim, T upstream_grad);

enum class LossKind { SquareSquare, Square, Hinge };

/// Margin losses on a {0,1} target and a prediction in [0,1]:
///   square-square  x*max(0, 1-p-m)^2 + (1-x)*max(0, p-m)^2
///   square         (x - p)^2            (margin ignored)
///   hinge          x*max(0, 1-p-m) + (1-x)*max(0, p-m)
struct LossSpec {
  LossKind kind = LossKind::SquareSquare;
  double margin = 0.3;

  void validate() const;
};

double loss_value(const LossSpec& spec, int target, double prediction);
/// Derivative with respect to the prediction.
double loss_grad(const LossSpec& spec, int target, double prediction);

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

/// "MLWTv01\0", u32 ndim/layers/maps/k, then the flat weights as f32.
void write_checkpoint(const std::filesystem::path& path, const Params32& params);
Params32 read_checkpoint(const std::filesystem::path& path);

}  // namespace malis
