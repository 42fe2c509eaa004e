#include "malis/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace malis {

namespace {

template <typename T>
GradcheckCase run_case(Rng& rng, bool first, double step) {
  GradcheckCase c;
  std::uniform_int_distribution<int> coin(0, 1);
  for (;;) {
    c.arch.ndim = coin(rng) ? 3 : 2;
    c.arch.layers = std::uniform_int_distribution<std::uint32_t>(1, 3)(rng);
    c.arch.maps = std::uniform_int_distribution<std::uint32_t>(1, 3)(rng);
    c.arch.k = coin(rng) ? 3 : 1;
    if (c.arch.ndim == 3 && c.arch.layers == 3) c.arch.layers = 2;
    c.loss = first ? LossSpec{LossKind::SquareSquare, 0.3}
                   : LossSpec{static_cast<LossKind>(std::uniform_int_distribution<int>(0, 2)(rng)),
                              std::uniform_real_distribution<double>(0.0, 0.45)(rng)};
    c.edge_dim = std::uniform_int_distribution<std::uint32_t>(0, c.arch.ndim - 1)(rng);
    c.target = coin(rng);

    // Larger-than-init weights so activations leave the linear regime.
    auto params = ClassifierParams<T>::random(c.arch, rng);
    for (auto& w : params.flat()) w *= T(3);

    const std::uint32_t f = c.arch.field_of_view();
    Volume<T> patch(1, {c.arch.ndim == 3 ? f : 1, f, f});
    std::uniform_real_distribution<double> intensity(0.0, 1.0);
    for (auto& v : patch.data) v = static_cast<T>(intensity(rng));

    const double affinity = forward_patch(params, patch, c.edge_dim);
    const double dloss = loss_grad(c.loss, c.target, affinity);
    // A zero loss gradient makes the comparison vacuous; stay clear of kinks too.
    const double kink = c.target ? 1.0 - c.loss.margin : c.loss.margin;
    if (dloss == 0.0 || std::abs(affinity - kink) < 1e-3) continue;

    const auto analytic = backward_edge(params, patch, c.edge_dim, static_cast<T>(dloss)).gradient;
    auto loss_at = [&](const ClassifierParams<T>& p) {
      return loss_value(c.loss, c.target, static_cast<double>(forward_patch(p, patch, c.edge_dim)));
    };

    double diff2 = 0, a2 = 0, n2 = 0, worst = -1;
    auto probe = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const T original = probe.flat()[k];
      probe.flat()[k] = original + static_cast<T>(step);
      const double up = loss_at(probe);
      probe.flat()[k] = original - static_cast<T>(step);
      const double down = loss_at(probe);
      probe.flat()[k] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      if (std::abs(a - numeric) > worst) {
        worst = std::abs(a - numeric);
        c.worst_index = k;
        c.worst_analytic = a;
        c.worst_numeric = numeric;
      }
    }
    const double scale = std::sqrt(std::max(a2, n2));
    c.relative_error = scale == 0.0 ? 0.0 : std::sqrt(diff2) / scale;
    return c;
  }
}

}  // namespace

std::string GradcheckCase::describe() const {
  std::ostringstream s;
  s << "ndim=" << arch.ndim << " layers=" << arch.layers << " maps=" << arch.maps << " k=" << arch.k
    << " loss=" << to_string(loss.kind) << " margin=" << loss.margin << " edge_dim=" << edge_dim
    << " target=" << target << " rel_err=" << relative_error << " worst param " << worst_index
    << " (analytic " << worst_analytic << ", numeric " << worst_numeric << ")";
  return s.str();
}

double GradcheckReport::max_relative_error() const {
  double m = 0;
  for (const auto& c : cases) m = std::max(m, c.relative_error);
  return m;
}

const GradcheckCase& GradcheckReport::worst() const {
  return *std::max_element(cases.begin(), cases.end(), [](const auto& a, const auto& b) {
    return a.relative_error < b.relative_error;
  });
}

GradcheckReport gradient_check(std::uint64_t seed, std::size_t count, int bits, double step) {
  if (bits != 32 && bits != 64) throw std::invalid_argument("bits must be 32 or 64");
  if (count == 0) throw std::invalid_argument("gradient check needs at least one case");
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Rng rng(seed);
  GradcheckReport report;
  for (std::size_t n = 0; n < count; ++n)
    report.cases.push_back(bits == 64 ? run_case<double>(rng, n == 0, step)
                                      : run_case<float>(rng, n == 0, step));
  return report;
}

}  // namespace malis
