#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>
#include <vector>

#include "subtab/error.hpp"
#include "subtab/util.hpp"

namespace subtab {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // stop once no centroid moves further than this
  std::uint64_t seed = 42;
};

namespace detail {

// Identical vectors collapse into one weighted point; `members[p]` lists the
// original indices of point p in ascending order.
struct DistinctPoints {
  std::vector<std::size_t> first;  // representative original index per point
  std::vector<std::vector<std::size_t>> members;
};

inline DistinctPoints dedupe(const std::vector<float>& flat, std::size_t count, std::size_t dim) {
  DistinctPoints d;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  const std::size_t bytes = dim * sizeof(float);
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = reinterpret_cast<const char*>(flat.data() + i * dim);
    auto& bucket = buckets[fnv1a(std::string_view(p, bytes))];
    bool found = false;
    for (auto pid : bucket) {
      if (std::memcmp(flat.data() + d.first[pid] * dim, p, bytes) == 0) {
        d.members[pid].push_back(i);
        found = true;
        break;
      }
    }
    if (!found) {
      bucket.push_back(d.first.size());
      d.first.push_back(i);
      d.members.push_back({i});
    }
  }
  return d;
}

inline double sq_dist(const float* a, const double* c, std::size_t dim) {
  // Four independent sums let the loop pipeline; the order is fixed, so
  // results stay reproducible.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t k = 0;
  for (; k + 4 <= dim; k += 4) {
    const double t0 = static_cast<double>(a[k]) - c[k];
    const double t1 = static_cast<double>(a[k + 1]) - c[k + 1];
    const double t2 = static_cast<double>(a[k + 2]) - c[k + 2];
    const double t3 = static_cast<double>(a[k + 3]) - c[k + 3];
    s0 += t0 * t0;
    s1 += t1 * t1;
    s2 += t2 * t2;
    s3 += t3 * t3;
  }
  for (; k < dim; ++k) {
    const double t = static_cast<double>(a[k]) - c[k];
    s0 += t * t;
  }
  return (s0 + s1) + (s2 + s3);
}

inline double centroid_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0;
  for (std::size_t k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace detail

// k-means (k-means++ seeding, Euclidean) over the given vectors, returning for
// each cluster the member id nearest its centroid (smallest id on ties), sorted
// ascending. With fewer distinct vectors than c, every distinct vector's
// smallest id is taken and the rest is filled with unused ids in ascending
// order.
inline std::vector<std::int64_t> centroid_representatives(const std::vector<std::int64_t>& ids,
                                                          const std::vector<float>& flat, std::size_t dim,
                                                          std::size_t c, const KMeansOptions& opt = {}) {
  if (ids.empty()) throw SelectionError("no vectors to cluster");
  if (c == 0) throw ParameterError("cluster count must be at least 1");
  if (flat.size() != ids.size() * dim) throw SelectionError("vector matrix does not match id count");
  const std::size_t n = ids.size();

  // Work in ascending-id order so every tie resolves to the smaller id.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  std::vector<float> sorted(flat.size());
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(flat.data() + order[i] * dim, dim, sorted.data() + i * dim);
  auto id_at = [&](std::size_t sorted_index) { return ids[order[sorted_index]]; };

  std::vector<std::int64_t> out;
  if (c >= n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(id_at(i));
    return out;
  }

  const auto pts = detail::dedupe(sorted, n, dim);
  const std::size_t P = pts.first.size();
  auto point = [&](std::size_t p) { return sorted.data() + pts.first[p] * dim; };
  std::vector<double> weight(P);
  for (std::size_t p = 0; p < P; ++p) weight[p] = static_cast<double>(pts.members[p].size());

  std::vector<char> used(n, 0);
  if (P <= c) {
    for (std::size_t p = 0; p < P; ++p) used[pts.first[p]] = 1;
    std::size_t need = c - P;
    for (std::size_t i = 0; i < n && need > 0; ++i)
      if (!used[i]) used[i] = 1, --need;
    for (std::size_t i = 0; i < n; ++i)
      if (used[i]) out.push_back(id_at(i));
    return out;
  }

  // k-means++ seeding over weighted distinct points.
  std::mt19937_64 rng(opt.seed);
  std::vector<double> centroids(c * dim);
  std::vector<double> best_d(P, std::numeric_limits<double>::infinity());
  auto place = [&](std::size_t slot, std::size_t p) {
    for (std::size_t k = 0; k < dim; ++k) centroids[slot * dim + k] = point(p)[k];
    for (std::size_t q = 0; q < P; ++q)
      best_d[q] = std::min(best_d[q], detail::sq_dist(point(q), centroids.data() + slot * dim, dim));
  };
  {
    std::discrete_distribution<std::size_t> first(weight.begin(), weight.end());
    place(0, first(rng));
    for (std::size_t s = 1; s < c; ++s) {
      double total = 0;
      for (std::size_t q = 0; q < P; ++q) total += weight[q] * best_d[q];
      std::size_t pick = 0;
      if (total > 0) {
        double r = std::uniform_real_distribution<double>(0, total)(rng), acc = 0;
        pick = P - 1;
        for (std::size_t q = 0; q < P; ++q) {
          acc += weight[q] * best_d[q];
          if (acc >= r && weight[q] * best_d[q] > 0) {
            pick = q;
            break;
          }
        }
      }
      place(s, pick);
    }
  }

  // Lloyd iterations with Hamerly's bounds: upper[p] bounds the distance to
  // the assigned centroid, lower[p] the distance to every other one, so most
  // points skip the full scan. Assignments match plain Lloyd.
  std::vector<std::size_t> assign(P, 0);
  std::vector<double> upper(P), lower(P);
  auto full_scan = [&](std::size_t p) {
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    std::size_t bc = 0;
    for (std::size_t s = 0; s < c; ++s) {
      const double d = detail::sq_dist(point(p), centroids.data() + s * dim, dim);
      if (d < d1) d2 = d1, d1 = d, bc = s;
      else if (d < d2) d2 = d;
    }
    assign[p] = bc;
    upper[p] = std::sqrt(d1);
    lower[p] = std::sqrt(d2);
  };
  for (std::size_t p = 0; p < P; ++p) full_scan(p);

  std::vector<double> sums(c * dim), mass(c), drift(c), half_gap(c);
  for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      mass[assign[p]] += weight[p];
      const float* x = point(p);
      double* row = sums.data() + assign[p] * dim;
      for (std::size_t k = 0; k < dim; ++k) row[k] += weight[p] * x[k];
    }
    bool any_empty = false;
    for (std::size_t s = 0; s < c; ++s) any_empty = any_empty || mass[s] == 0;
    if (any_empty)  // exact distances to pick restart points
      for (std::size_t p = 0; p < P; ++p) upper[p] = std::sqrt(detail::sq_dist(point(p), centroids.data() + assign[p] * dim, dim));
    double shift = 0;
    std::vector<char> taken(P, 0);
    for (std::size_t s = 0; s < c; ++s) {
      std::vector<double> next(dim);
      if (mass[s] > 0) {
        for (std::size_t k = 0; k < dim; ++k) next[k] = sums[s * dim + k] / mass[s];
      } else {
        // Empty cluster: restart it at the point worst served by its centroid.
        std::size_t far = 0;
        double fd = -1;
        for (std::size_t p = 0; p < P; ++p)
          if (!taken[p] && upper[p] > fd) fd = upper[p], far = p;
        taken[far] = 1;
        for (std::size_t k = 0; k < dim; ++k) next[k] = point(far)[k];
      }
      double d = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = next[k] - centroids[s * dim + k];
        d += t * t;
        centroids[s * dim + k] = next[k];
      }
      drift[s] = std::sqrt(d);
      shift = std::max(shift, drift[s]);
    }
    if (shift < opt.tolerance) break;

    std::size_t top = 0;
    for (std::size_t s = 1; s < c; ++s)
      if (drift[s] > drift[top]) top = s;
    double second = 0;
    for (std::size_t s = 0; s < c; ++s)
      if (s != top) second = std::max(second, drift[s]);
    for (std::size_t s = 0; s < c; ++s) {
      double g = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < c; ++t)
        if (t != s) g = std::min(g, detail::centroid_dist(centroids.data() + s * dim, centroids.data() + t * dim, dim));
      half_gap[s] = g / 2;
    }
    for (std::size_t p = 0; p < P; ++p) {
      upper[p] += drift[assign[p]];
      lower[p] -= assign[p] == top ? second : drift[top];
      const double bound = std::max(half_gap[assign[p]], lower[p]);
      if (upper[p] <= bound) continue;
      upper[p] = std::sqrt(detail::sq_dist(point(p), centroids.data() + assign[p] * dim, dim));
      if (upper[p] <= bound) continue;
      full_scan(p);
    }
  }

  // Final assignment against the settled centroids, then the nearest member.
  std::vector<std::size_t> rep(c, SIZE_MAX);
  std::vector<double> rep_d(c, std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < P; ++p) {
    double bd = std::numeric_limits<double>::infinity();
    std::size_t bc = 0;
    for (std::size_t s = 0; s < c; ++s) {
      const double d = detail::sq_dist(point(p), centroids.data() + s * dim, dim);
      if (d < bd) bd = d, bc = s;
    }
    if (bd < rep_d[bc] || (bd == rep_d[bc] && pts.first[p] < pts.first[rep[bc]])) rep_d[bc] = bd, rep[bc] = p;
  }
  std::size_t have = 0;
  for (auto p : rep)
    if (p != SIZE_MAX) used[pts.first[p]] = 1, ++have;
  for (std::size_t i = 0; i < n && have < c; ++i)
    if (!used[i]) used[i] = 1, ++have;
  for (std::size_t i = 0; i < n; ++i)
    if (used[i]) out.push_back(id_at(i));
  return out;
}

}  // namespace subtab
