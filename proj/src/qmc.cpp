#include "npn/qmc.hpp"

#include <cmath>
#include <mutex>
#include <random>

#include "npn/error.hpp"

namespace npn {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

const std::vector<double>& richtmyer_vector(std::size_t dim) {
  static std::mutex mu;
  static std::vector<double> q;
  std::lock_guard<std::mutex> lock(mu);
  if (q.size() < dim) {
    q.clear();
    std::uint64_t p = 1;
    while (q.size() < std::max<std::size_t>(dim, 16)) {
      ++p;
      bool prime = true;
      for (std::uint64_t d = 2; d * d <= p; ++d)
        if (p % d == 0) {
          prime = false;
          break;
        }
      if (!prime) continue;
      const double s = std::sqrt(static_cast<double>(p));
      q.push_back(s - std::floor(s));
    }
  }
  return q;
}

void fill_points(const QmcConfig& cfg, std::size_t dim, std::uint64_t stream, std::span<double> w) {
  if (cfg.M < 1) throw DomainError("QMC replicate count must be at least 1");
  if (w.size() != cfg.M * dim) throw DimensionError("point buffer has wrong size");
  if (dim == 0) return;
  std::mt19937_64 rng(derive_seed(cfg.seed, stream));
  if (cfg.lattice == PointSet::MonteCarlo) {
    for (std::size_t n = 0; n < cfg.M; ++n) {
      const bool mirror = cfg.antithetic && (n % 2 == 1);
      for (std::size_t k = 0; k < dim; ++k) {
        double u = mirror ? 1.0 - w[(n - 1) * dim + k] : to_unit(rng());
        w[n * dim + k] = u;
      }
    }
    return;
  }
  const std::vector<double>& q = richtmyer_vector(dim);
  std::vector<double> shift(dim);
  for (auto& s : shift) s = to_unit(rng());
  for (std::size_t n = 0; n < cfg.M; ++n) {
    const std::size_t base = cfg.antithetic ? n / 2 : n;
    const bool mirror = cfg.antithetic && (n % 2 == 1);
    const double idx = static_cast<double>(base + 1);
    for (std::size_t k = 0; k < dim; ++k) {
      double x = idx * q[k] + shift[k];
      x -= std::floor(x);
      double u = std::fabs(2.0 * x - 1.0);
      if (mirror) u = 1.0 - u;
      w[n * dim + k] = u;
    }
  }
}

}  // namespace npn
