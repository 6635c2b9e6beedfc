// Exact discrete optimal transport by successive shortest augmenting paths
// (Dijkstra with node potentials) on the dense bipartite residual graph.

#include "wdro/error.hpp"
#include "wdro/measures.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace wdro {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassEps = 1e-15;
}  // namespace

double optimal_transport(const Matrix& cost, std::span<const double> source,
                         std::span<const double> target, Matrix* coupling) {
  const std::size_t n = source.size();
  const std::size_t m = target.size();
  if (static_cast<std::size_t>(cost.rows()) != n || static_cast<std::size_t>(cost.cols()) != m) {
    throw ValidationError("optimal_transport: cost matrix shape mismatch");
  }
  // nodes 0..n-1 are sources, n..n+m-1 are sinks
  std::vector<double> supply(source.begin(), source.end());
  std::vector<double> demand(target.begin(), target.end());
  Matrix flow = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::vector<double> pot(n + m, 0.0);
  std::vector<double> dist(n + m);
  std::vector<long> parent(n + m);
  std::vector<char> done(n + m);

  auto c = [&](std::size_t i, std::size_t j) {
    return cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };
  auto f = [&](std::size_t i, std::size_t j) -> double& {
    return flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };

  const std::size_t max_rounds = 50 * (n + m) + 1000;
  for (std::size_t round = 0;; ++round) {
    bool any_supply = false;
    for (double s : supply) any_supply = any_supply || s > kMassEps;
    bool any_demand = false;
    for (double d : demand) any_demand = any_demand || d > kMassEps;
    if (!any_supply || !any_demand) break;
    if (round > max_rounds) throw NumericalError("optimal_transport: augmentation limit reached");

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (supply[i] > kMassEps) dist[i] = 0.0;
    }
    // dense Dijkstra on reduced costs
    for (;;) {
      std::size_t u = n + m;
      double best = kInf;
      for (std::size_t v = 0; v < n + m; ++v) {
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      }
      if (u == n + m) break;
      done[u] = 1;
      if (u < n) {
        for (std::size_t j = 0; j < m; ++j) {
          const double cij = c(u, j);
          if (std::isinf(cij)) continue;
          const double rc = std::max(0.0, cij + pot[u] - pot[n + j]);
          if (dist[u] + rc < dist[n + j]) {
            dist[n + j] = dist[u] + rc;
            parent[n + j] = static_cast<long>(u);
          }
        }
      } else {
        const std::size_t j = u - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (f(i, j) <= kMassEps) continue;
          const double rc = std::max(0.0, -c(i, j) + pot[u] - pot[i]);
          if (dist[u] + rc < dist[i]) {
            dist[i] = dist[u] + rc;
            parent[i] = static_cast<long>(u);
          }
        }
      }
    }
    // nearest sink with remaining demand
    std::size_t sink = n + m;
    double best = kInf;
    for (std::size_t j = 0; j < m; ++j) {
      if (demand[j] > kMassEps && dist[n + j] < best) {
        best = dist[n + j];
        sink = n + j;
      }
    }
    if (sink == n + m) return kInf;  // no finite-cost coupling
    const double dmax = best;
    for (std::size_t v = 0; v < n + m; ++v) pot[v] += std::min(dist[v], dmax);

    // bottleneck along the path
    double amount = demand[sink - n];
    std::size_t v = sink;
    while (parent[v] >= 0) {
      const auto u = static_cast<std::size_t>(parent[v]);
      if (u >= n) amount = std::min(amount, f(v, u - n));  // backward arc sink->source
      v = u;
    }
    amount = std::min(amount, supply[v]);
    supply[v] -= amount;
    demand[sink - n] -= amount;
    v = sink;
    while (parent[v] >= 0) {
      const auto u = static_cast<std::size_t>(parent[v]);
      if (u < n) {
        f(u, v - n) += amount;
      } else {
        f(v, u - n) -= amount;
        if (f(v, u - n) < kMassEps) f(v, u - n) = 0.0;
      }
      v = u;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (f(i, j) > 0.0) total += f(i, j) * c(i, j);
    }
  }
  if (coupling != nullptr) *coupling = std::move(flow);
  return total;
}

}  // namespace wdro
