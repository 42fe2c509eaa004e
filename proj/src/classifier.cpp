#include "malis/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace malis {

namespace {

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

std::uint32_t kernel_depth(const Architecture& arch) { return arch.ndim == 3 ? arch.k : 1; }

std::array<std::uint32_t, 3> shrink(std::array<std::uint32_t, 3> extent, const Architecture& arch) {
  extent[0] -= kernel_depth(arch) - 1;
  extent[1] -= arch.k - 1;
  extent[2] -= arch.k - 1;
  return extent;
}

/// Writes sigmoid(bias + valid convolution) for output map `o` of `layer`.
/// The accumulation order per output element is fixed (bias, then input maps,
/// then kernel offsets in z/y/x order) regardless of the output size, so
/// patch-wise and dense evaluation produce identical values.
template <typename T>
void convolve_map(const ClassifierParams<T>& params, std::uint32_t layer, std::uint32_t o,
                  const Volume<T>& in, T* out, std::array<std::uint32_t, 3> out_extent) {
  const Architecture& arch = params.architecture();
  const std::uint32_t kz = kernel_depth(arch), k = arch.k;
  const std::size_t kvol = arch.kernel_volume();
  const T* w = params.flat().data() + params.weight_offset(layer) + std::size_t{o} * in.maps * kvol;
  const T bias = params.flat()[params.bias_offset(layer) + o];
  const auto [oz, oy, ox] = out_extent;
  const std::size_t in_y = in.extent[1], in_x = in.extent[2];
  const std::size_t n = std::size_t{oz} * oy * ox;
  std::fill(out, out + n, bias);
  for (std::uint32_t c = 0; c < in.maps; ++c) {
    const T* src = in.map(c);
    for (std::uint32_t dz = 0; dz < kz; ++dz)
      for (std::uint32_t dy = 0; dy < k; ++dy)
        for (std::uint32_t dx = 0; dx < k; ++dx) {
          const T wv = *w++;
          for (std::uint32_t z = 0; z < oz; ++z)
            for (std::uint32_t y = 0; y < oy; ++y) {
              const T* row = src + ((z + dz) * in_y + (y + dy)) * in_x + dx;
              T* dst = out + (std::size_t{z} * oy + y) * ox;
              for (std::uint32_t x = 0; x < ox; ++x) dst[x] += wv * row[x];
            }
        }
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid(out[i]);
}

template <typename T>
Volume<T> forward_layer(const ClassifierParams<T>& params, std::uint32_t layer, const Volume<T>& in) {
  const auto extent = shrink(in.extent, params.architecture());
  Volume<T> out(params.architecture().out_maps(layer), extent);
  for (std::uint32_t o = 0; o < out.maps; ++o) convolve_map(params, layer, o, in, out.map(o), extent);
  return out;
}

template <typename T>
void check_patch(const Architecture& arch, const Volume<T>& patch, std::uint32_t edge_dim) {
  const std::uint32_t f = arch.field_of_view();
  const std::uint32_t fz = arch.ndim == 3 ? f : 1;
  if (patch.maps != 1 || patch.extent != std::array<std::uint32_t, 3>{fz, f, f})
    throw std::invalid_argument("patch must be the field of view, " + std::to_string(f) +
                                " pixels per dimension");
  if (edge_dim >= arch.ndim) throw std::invalid_argument("edge dimension out of range");
}

template <typename T>
Volume<T> to_volume(const Image& image) {
  Volume<T> v(1, spatial_extent(image.shape()));
  std::copy(image.values().begin(), image.values().end(), v.data.begin());
  return v;
}

/// Activations of every layer for one patch; the last layer keeps only edge_dim.
template <typename T>
std::vector<Volume<T>> patch_activations(const ClassifierParams<T>& params, const Volume<T>& patch,
                                         std::uint32_t edge_dim) {
  const Architecture& arch = params.architecture();
  check_patch(arch, patch, edge_dim);
  std::vector<Volume<T>> acts;
  acts.reserve(arch.layers + 1);
  acts.push_back(patch);
  for (std::uint32_t l = 0; l + 1 < arch.layers; ++l) acts.push_back(forward_layer(params, l, acts.back()));
  const auto extent = shrink(acts.back().extent, arch);
  Volume<T> out(1, extent);
  convolve_map(params, arch.layers - 1, edge_dim, acts.back(), out.map(0), extent);
  acts.push_back(std::move(out));
  return acts;
}

constexpr char kCheckpointMagic[8] = {'M', 'L', 'W', 'T', 'v', '0', '1', '\0'};

}  // namespace

void Architecture::validate() const {
  if (ndim < 2 || ndim > 3) throw std::invalid_argument("classifier ndim must be 2 or 3");
  if (layers < 1) throw std::invalid_argument("classifier needs at least one layer");
  if (maps < 1) throw std::invalid_argument("classifier needs at least one feature map");
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("filter size must be odd");
}

std::size_t Architecture::kernel_volume() const {
  std::size_t v = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) v *= k;
  return v;
}

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  for (std::uint32_t l = 0; l < layers; ++l)
    total += std::size_t{out_maps(l)} * in_maps(l) * kernel_volume() + out_maps(l);
  return total;
}

template <typename T>
ClassifierParams<T>::ClassifierParams(const Architecture& arch)
    : ClassifierParams(arch, std::vector<T>(arch.parameter_count(), T(0))) {}

template <typename T>
ClassifierParams<T>::ClassifierParams(const Architecture& arch, std::vector<T> flat)
    : arch_(arch), flat_(std::move(flat)) {
  arch_.validate();
  if (flat_.size() != arch_.parameter_count())
    throw std::invalid_argument("expected " + std::to_string(arch_.parameter_count()) +
                                " parameters, got " + std::to_string(flat_.size()));
  std::size_t offset = 0;
  for (std::uint32_t l = 0; l < arch_.layers; ++l) {
    offsets_.push_back(offset);
    offset += std::size_t{arch_.out_maps(l)} * arch_.in_maps(l) * arch_.kernel_volume() +
              arch_.out_maps(l);
  }
}

template <typename T>
std::size_t ClassifierParams<T>::bias_offset(std::uint32_t layer) const {
  return offsets_[layer] + std::size_t{arch_.out_maps(layer)} * arch_.in_maps(layer) * arch_.kernel_volume();
}

template <typename T>
ClassifierParams<T> ClassifierParams<T>::random(const Architecture& arch, Rng& rng) {
  ClassifierParams params(arch);
  for (std::uint32_t l = 0; l < arch.layers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.in_maps(l) * arch.kernel_volume()));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    const std::size_t end = params.bias_offset(l) + arch.out_maps(l);
    for (std::size_t i = params.weight_offset(l); i < end; ++i) params.flat_[i] = static_cast<T>(uniform(rng));
  }
  return params;
}

std::array<std::uint32_t, 3> spatial_extent(const Shape& shape) {
  if (shape.ndim() == 2) return {1, shape.dim(0), shape.dim(1)};
  return {shape.dim(0), shape.dim(1), shape.dim(2)};
}

std::array<std::uint32_t, 3> spatial_coords(const Shape& shape, std::size_t index) {
  if (shape.ndim() == 2) return {0, shape.coord(index, 0), shape.coord(index, 1)};
  return {shape.coord(index, 0), shape.coord(index, 1), shape.coord(index, 2)};
}

template <typename T>
PaddedImage<T>::PaddedImage(const Image& image, std::uint32_t radius)
    : shape_(image.shape()), radius_(radius) {
  const auto extent = spatial_extent(shape_);
  const std::uint32_t rz = shape_.ndim() == 3 ? radius : 0;
  padded_ = Volume<T>(1, {extent[0] + 2 * rz, extent[1] + 2 * radius, extent[2] + 2 * radius});
  const auto values = image.values();
  for (std::uint32_t z = 0; z < extent[0]; ++z)
    for (std::uint32_t y = 0; y < extent[1]; ++y) {
      const float* src = values.data() + (std::size_t{z} * extent[1] + y) * extent[2];
      T* dst = padded_.data.data() +
               ((std::size_t{z} + rz) * padded_.extent[1] + y + radius) * padded_.extent[2] + radius;
      std::copy(src, src + extent[2], dst);
    }
}

template <typename T>
Volume<T> PaddedImage<T>::window(std::array<std::uint32_t, 3> origin,
                                 std::array<std::uint32_t, 3> extent) const {
  const std::uint32_t rz = shape_.ndim() == 3 ? radius_ : 0;
  const auto image_extent = spatial_extent(shape_);
  for (int a = 0; a < 3; ++a)
    if (origin[a] + extent[a] > image_extent[a])
      throw std::invalid_argument("window exceeds the image grid");
  Volume<T> box(1, {extent[0] + 2 * rz, extent[1] + 2 * radius_, extent[2] + 2 * radius_});
  for (std::uint32_t z = 0; z < box.extent[0]; ++z)
    for (std::uint32_t y = 0; y < box.extent[1]; ++y) {
      const T* src = padded_.data.data() +
                     ((std::size_t{z} + origin[0]) * padded_.extent[1] + y + origin[1]) * padded_.extent[2] +
                     origin[2];
      std::copy(src, src + box.extent[2], box.data.data() + (std::size_t{z} * box.extent[1] + y) * box.extent[2]);
    }
  return box;
}

template <typename T>
Volume<T> PaddedImage<T>::patch(std::size_t index) const {
  return window(spatial_coords(shape_, index), {1, 1, 1});
}

template <typename T>
T forward_patch(const ClassifierParams<T>& params, const Volume<T>& patch, std::uint32_t edge_dim) {
  return patch_activations(params, patch, edge_dim).back().data[0];
}

template <typename T>
T forward_patch(const ClassifierParams<T>& params, const Image& patch, std::uint32_t edge_dim) {
  if (patch.shape().ndim() != params.architecture().ndim)
    throw std::invalid_argument("patch dimensionality does not match the classifier");
  return forward_patch(params, to_volume<T>(patch), edge_dim);
}

template <typename T>
AffinityGraph forward_region(const ClassifierParams<T>& params, const PaddedImage<T>& image,
                             std::array<std::uint32_t, 3> origin,
                             std::array<std::uint32_t, 3> extent) {
  const Architecture& arch = params.architecture();
  if (image.shape().ndim() != arch.ndim)
    throw std::invalid_argument("image dimensionality does not match the classifier");
  if (image.radius() != arch.radius())
    throw std::invalid_argument("image padding does not match the classifier radius");
  Volume<T> act = image.window(origin, extent);
  for (std::uint32_t l = 0; l < arch.layers; ++l) act = forward_layer(params, l, act);

  const Shape shape = arch.ndim == 2 ? Shape({extent[1], extent[2]})
                                     : Shape({extent[0], extent[1], extent[2]});
  std::vector<std::vector<float>> maps(arch.ndim);
  for (std::uint32_t d = 0; d < arch.ndim; ++d)
    maps[d].assign(act.map(d), act.map(d) + act.plane());
  return AffinityGraph(shape, std::move(maps));
}

template <typename T>
AffinityGraph forward_image(const ClassifierParams<T>& params, const Image& image) {
  const Architecture& arch = params.architecture();
  if (image.shape().ndim() != arch.ndim)
    throw std::invalid_argument("image dimensionality does not match the classifier");
  for (auto d : image.shape().dims())
    if (d < arch.field_of_view())
      throw std::invalid_argument("image is smaller than the field of view " +
                                  std::to_string(arch.field_of_view()));
  const PaddedImage<T> padded(image, arch.radius());
  return forward_region(params, padded, {0, 0, 0}, spatial_extent(image.shape()));
}

template <typename T>
EdgeGradient<T> backward_edge(const ClassifierParams<T>& params, const Volume<T>& patch,
                              std::uint32_t edge_dim, T upstream_grad) {
  const Architecture& arch = params.architecture();
  const std::vector<Volume<T>> acts = patch_activations(params, patch, edge_dim);
  const T* w_all = params.flat().data();
  const std::uint32_t kz = kernel_depth(arch), k = arch.k;
  const std::size_t kvol = arch.kernel_volume();

  EdgeGradient<T> result{acts.back().data[0], std::vector<T>(params.size(), T(0))};
  T* grad = result.gradient.data();

  // delta holds dL/dz for the pre-activations of the layer being processed
  Volume<T> delta = acts.back();
  delta.data[0] = upstream_grad * delta.data[0] * (T(1) - delta.data[0]);

  for (std::uint32_t l = arch.layers; l-- > 0;) {
    const Volume<T>& in = acts[l];
    const bool last = l + 1 == arch.layers;
    const auto [oz, oy, ox] = delta.extent;
    const std::size_t in_y = in.extent[1], in_x = in.extent[2];
    Volume<T> grad_in(in.maps, in.extent);

    for (std::uint32_t m = 0; m < delta.maps; ++m) {
      const std::uint32_t o = last ? edge_dim : m;
      const T* dm = delta.map(m);
      T bias_grad = 0;
      for (std::size_t p = 0; p < delta.plane(); ++p) bias_grad += dm[p];
      grad[params.bias_offset(l) + o] += bias_grad;

      const std::size_t base = params.weight_offset(l) + std::size_t{o} * in.maps * kvol;
      for (std::uint32_t c = 0; c < in.maps; ++c) {
        const T* src = in.map(c);
        T* gsrc = grad_in.map(c);
        std::size_t widx = base + std::size_t{c} * kvol;
        for (std::uint32_t dz = 0; dz < kz; ++dz)
          for (std::uint32_t dy = 0; dy < k; ++dy)
            for (std::uint32_t dx = 0; dx < k; ++dx, ++widx) {
              const T wv = w_all[widx];
              T acc = 0;
              for (std::uint32_t z = 0; z < oz; ++z)
                for (std::uint32_t y = 0; y < oy; ++y) {
                  const std::size_t in_off = ((z + dz) * in_y + (y + dy)) * in_x + dx;
                  const T* row = src + in_off;
                  T* grow = gsrc + in_off;
                  const T* drow = dm + (std::size_t{z} * oy + y) * ox;
                  for (std::uint32_t x = 0; x < ox; ++x) {
                    acc += drow[x] * row[x];
                    grow[x] += wv * drow[x];
                  }
                }
              grad[widx] += acc;
            }
      }
    }
    if (l == 0) break;
    for (std::size_t i = 0; i < grad_in.data.size(); ++i) {
      const T a = in.data[i];
      grad_in.data[i] *= a * (T(1) - a);
    }
    delta = std::move(grad_in);
  }
  return result;
}

template <typename T>
EdgeGradient<T> backward_edge(const ClassifierParams<T>& params, const Image& patch,
                              std::uint32_t edge_dim, T upstream_grad) {
  if (patch.shape().ndim() != params.architecture().ndim)
    throw std::invalid_argument("patch dimensionality does not match the classifier");
  return backward_edge(params, to_volume<T>(patch), edge_dim, upstream_grad);
}

void LossSpec::validate() const {
  if (!(margin >= 0.0 && margin < 0.5)) throw std::invalid_argument("margin must lie in [0, 0.5)");
}

double loss_value(const LossSpec& spec, int target, double prediction) {
  const double m = spec.margin;
  switch (spec.kind) {
    case LossKind::SquareSquare: {
      const double gap = target ? std::max(0.0, 1.0 - prediction - m) : std::max(0.0, prediction - m);
      return gap * gap;
    }
    case LossKind::Square: {
      const double diff = static_cast<double>(target) - prediction;
      return diff * diff;
    }
    case LossKind::Hinge:
      return target ? std::max(0.0, 1.0 - prediction - m) : std::max(0.0, prediction - m);
  }
  return 0.0;
}

double loss_grad(const LossSpec& spec, int target, double prediction) {
  const double m = spec.margin;
  switch (spec.kind) {
    case LossKind::SquareSquare:
      return target ? -2.0 * std::max(0.0, 1.0 - prediction - m) : 2.0 * std::max(0.0, prediction - m);
    case LossKind::Square:
      return 2.0 * (prediction - static_cast<double>(target));
    case LossKind::Hinge:
      if (target) return 1.0 - prediction - m > 0.0 ? -1.0 : 0.0;
      return prediction - m > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "square-square") return LossKind::SquareSquare;
  if (name == "square") return LossKind::Square;
  if (name == "hinge") return LossKind::Hinge;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::SquareSquare: return "square-square";
    case LossKind::Square: return "square";
    case LossKind::Hinge: return "hinge";
  }
  return "?";
}

void write_checkpoint(const std::filesystem::path& path, const Params32& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), std::strerror(errno));
  const Architecture& arch = params.architecture();
  const std::uint32_t header[4] = {arch.ndim, arch.layers, arch.maps, arch.k};
  out.write(kCheckpointMagic, 8);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(params.flat().data()),
            static_cast<std::streamsize>(params.flat().size_bytes()));
  out.close();
  if (!out) throw IoError(path.string(), std::strerror(errno));
}

Params32 read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), std::strerror(errno));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("magic", path.string());
  if (bytes.size() < 8 + 16) throw FormatError("length", path.string() + ": truncated header");
  std::uint32_t header[4];
  std::memcpy(header, bytes.data() + 8, sizeof header);
  const Architecture arch{header[0], header[1], header[2], header[3]};
  try {
    arch.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError("architecture", path.string() + ": " + e.what());
  }
  if (arch.layers > 64 || arch.maps > 4096 || arch.k > 64)
    throw FormatError("architecture", path.string() + ": implausible sizes");
  const std::size_t count = arch.parameter_count();
  if (bytes.size() - 24 != count * sizeof(float))
    throw FormatError("length", path.string() + ": expected " + std::to_string(count) + " weights");
  std::vector<float> flat(count);
  std::memcpy(flat.data(), bytes.data() + 24, count * sizeof(float));
  return Params32(arch, std::move(flat));
}

#define MALIS_INSTANTIATE(T)                                                                      \
  template class ClassifierParams<T>;                                                            \
  template class PaddedImage<T>;                                                                 \
  template T forward_patch(const ClassifierParams<T>&, const Volume<T>&, std::uint32_t);         \
  template T forward_patch(const ClassifierParams<T>&, const Image&, std::uint32_t);             \
  template AffinityGraph forward_region(const ClassifierParams<T>&, const PaddedImage<T>&,       \
                                        std::array<std::uint32_t, 3>, std::array<std::uint32_t, 3>); \
  template AffinityGraph forward_image(const ClassifierParams<T>&, const Image&);                \
  template EdgeGradient<T> backward_edge(const ClassifierParams<T>&, const Volume<T>&,           \
                                         std::uint32_t, T);                                      \
  template EdgeGradient<T> backward_edge(const ClassifierParams<T>&, const Image&, std::uint32_t, T);

MALIS_INSTANTIATE(float)
MALIS_INSTANTIATE(double)

#undef MALIS_INSTANTIATE

}  // namespace malis
