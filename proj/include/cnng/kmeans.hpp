#pragma once

#include "cnng/error.hpp"
#include "cnng/matrix.hpp"
#include "cnng/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace cnng {

struct KMeansModel {
    Matrix centroids; // k x dim
    double inertia = 0.0;
    std::uint64_t seed = 0;
    std::size_t iterations_run = 0;

    std::size_t k() const noexcept { return centroids.rows(); }
    std::size_t dim() const noexcept { return centroids.cols(); }

    friend bool operator==(const KMeansModel&, const KMeansModel&) = default;
};

struct KMeansParams {
    std::size_t k = 2;
    std::uint64_t seed = 7;
    std::size_t max_iter = 100;
    double tol = 1e-6;
    std::size_t restarts = 5;
};

struct KMeansFit {
    KMeansModel model;
    std::vector<std::uint32_t> assignments;
    /// Objective after each assignment step, in order.
    std::vector<double> inertia_history;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace detail {

struct Nearest {
    std::uint32_t id;
    double dist2;
};

inline Nearest nearest_centroid(const Matrix& centroids, std::span<const double> x) noexcept
{
    Nearest best{0, squared_distance(centroids.row(0), x)};
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
        const double d = squared_distance(centroids.row(c), x);
        if (d < best.dist2)
            best = {static_cast<std::uint32_t>(c), d};
    }
    return best;
}

// k-means++: first centre uniform, each next one with probability
// proportional to squared distance from the nearest chosen centre.
inline Matrix kmeanspp_init(const Matrix& points, std::size_t k, Rng& rng)
{
    const std::size_t n = points.rows();
    Matrix centroids(k, points.cols());
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i)
        d2[i] = squared_distance(points.row(i), centroids.row(0));

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (auto d : d2)
            total += d;
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (target < acc && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
    }
    return centroids;
}

// Nearest-centroid assignment. Returns the objective.
inline double assign_all(const Matrix& points, const Matrix& centroids, std::vector<std::uint32_t>& assign,
                         std::vector<double>& dist2)
{
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto nn = nearest_centroid(centroids, points.row(i));
        assign[i] = nn.id;
        dist2[i] = nn.dist2;
        inertia += nn.dist2;
    }
    return inertia;
}

// Moves each empty centroid onto the point farthest from its current centre
// (taken from a cluster with more than one member). Returns true if anything
// changed.
inline bool repair_empty(const Matrix& points, Matrix& centroids, std::vector<std::uint32_t>& assign,
                         std::vector<double>& dist2)
{
    bool changed = false;
    std::vector<std::size_t> counts(centroids.rows(), 0);
    for (auto a : assign)
        ++counts[a];
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        if (counts[c] != 0)
            continue;
        std::size_t far = points.rows();
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (counts[assign[i]] < 2)
                continue;
            if (far == points.rows() || dist2[i] > dist2[far])
                far = i;
        }
        if (far == points.rows())
            break;
        std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
        --counts[assign[far]];
        ++counts[c];
        assign[far] = static_cast<std::uint32_t>(c);
        dist2[far] = 0.0;
        changed = true;
    }
    return changed;
}

inline void check_points(const Matrix& points, std::size_t k, std::size_t max_iter)
{
    require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
    require(max_iter >= 1, ErrorCode::InvalidArgument, "max_iter must be at least 1");
    require(!points.empty(), ErrorCode::EmptyInput, "no points to cluster");
    require(points.rows() >= k, ErrorCode::InvalidArgument, "fewer points than clusters");
}

} // namespace detail

/// Packs equal-length vectors into a matrix; throws on ragged input.
inline Matrix to_matrix(std::span<const std::vector<double>> rows)
{
    detail::require(!rows.empty(), ErrorCode::EmptyInput, "no points");
    const std::size_t dim = rows.front().size();
    detail::require(dim >= 1, ErrorCode::InvalidArgument, "points must have at least one coordinate");
    std::vector<double> data;
    data.reserve(rows.size() * dim);
    for (const auto& r : rows) {
        detail::require(r.size() == dim, ErrorCode::DimensionMismatch, "points have differing dimensions");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), dim, std::move(data));
}

/// k-means++ seeding followed by Lloyd iterations. Stops when the largest
/// centroid displacement is <= tol, when assignments stop changing, or after
/// max_iter updates. The returned assignments are nearest-centroid (ties to
/// the lowest id) with respect to the returned centroids.
inline KMeansFit kmeans_fit(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                            double tol)
{
    detail::check_points(points, k, max_iter);
    detail::require(tol >= 0.0, ErrorCode::InvalidArgument, "tol must be nonnegative");
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();

    Rng rng(seed);
    KMeansFit fit;
    Matrix centroids = detail::kmeanspp_init(points, k, rng);
    std::vector<std::uint32_t> assign(n);
    std::vector<double> dist2(n);

    double inertia = detail::assign_all(points, centroids, assign, dist2);
    if (detail::repair_empty(points, centroids, assign, dist2)) {
        inertia = 0.0;
        for (auto d : dist2)
            inertia += d;
    }
    fit.inertia_history.push_back(inertia);

    std::size_t iter = 0;
    std::vector<std::uint32_t> previous;
    while (iter < max_iter) {
        ++iter;
        Matrix next(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = next.row(assign[i]);
            auto src = points.row(i);
            for (std::size_t j = 0; j < dim; ++j)
                dst[j] += src[j];
            ++counts[assign[i]];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            auto row = next.row(c);
            for (auto& v : row)
                v /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(squared_distance(row, centroids.row(c))));
        }
        centroids = std::move(next);

        previous = assign;
        inertia = detail::assign_all(points, centroids, assign, dist2);
        if (detail::repair_empty(points, centroids, assign, dist2)) {
            inertia = 0.0;
            for (auto d : dist2)
                inertia += d;
            fit.inertia_history.push_back(inertia);
            continue;
        }
        fit.inertia_history.push_back(inertia);
        if (shift <= tol || assign == previous)
            break;
    }

    fit.model = KMeansModel{std::move(centroids), inertia, seed, iter};
    fit.assignments = std::move(assign);
    return fit;
}

inline KMeansFit kmeans_fit(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                            std::size_t max_iter, double tol)
{
    detail::require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
    return kmeans_fit(to_matrix(points), k, seed, max_iter, tol);
}

/// Runs `restarts` fits with seeds derived from params.seed and keeps the one
/// with the lowest inertia (earliest on ties).
inline KMeansFit kmeans_fit_best(const Matrix& points, const KMeansParams& params)
{
    detail::require(params.restarts >= 1, ErrorCode::InvalidArgument, "restarts must be at least 1");
    KMeansFit best = kmeans_fit(points, params.k, params.seed, params.max_iter, params.tol);
    for (std::size_t r = 1; r < params.restarts; ++r) {
        auto fit = kmeans_fit(points, params.k, derive_seed(params.seed, r), params.max_iter, params.tol);
        if (fit.model.inertia < best.model.inertia)
            best = std::move(fit);
    }
    return best;
}

/// Nearest centroid by squared Euclidean distance; ties to the lowest id.
inline std::uint32_t kmeans_assign(const KMeansModel& model, std::span<const double> x)
{
    detail::require(!model.centroids.empty(), ErrorCode::InvalidArgument, "model has no centroids");
    detail::require(x.size() == model.dim(), ErrorCode::DimensionMismatch,
                    "point dimension does not match centroids");
    return detail::nearest_centroid(model.centroids, x).id;
}

} // namespace cnng
