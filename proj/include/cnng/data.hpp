#pragma once

// MNIST/EMNIST IDX ingestion plus deterministic splitting and subsampling.

#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cnng {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxOptions {
    /// EMNIST stores each image transposed relative to MNIST.
    bool transpose_images = false;
    std::string name;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at)
{
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

} // namespace detail

/// Parses a big-endian IDX image file (magic 0x803, dims n x rows x cols)
/// and its label file (magic 0x801, dim n). Pixels are scaled by 1/255 and
/// the class count is 1 + the largest label present.
inline Dataset load_idx_pair(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                             const IdxOptions& options = {})
{
    const auto img = detail::read_file(images_path);
    const auto lab = detail::read_file(labels_path);

    if (img.size() < 16)
        detail::fail(ErrorCode::Truncated, "image file header is shorter than 16 bytes: " + images_path.string());
    if (detail::read_be32(img, 0) != kIdxImageMagic)
        detail::fail(ErrorCode::BadMagic, "image file does not start with 0x00000803: " + images_path.string());
    if (lab.size() < 8)
        detail::fail(ErrorCode::Truncated, "label file header is shorter than 8 bytes: " + labels_path.string());
    if (detail::read_be32(lab, 0) != kIdxLabelMagic)
        detail::fail(ErrorCode::BadMagic, "label file does not start with 0x00000801: " + labels_path.string());

    const std::size_t n = detail::read_be32(img, 4);
    const std::size_t rows = detail::read_be32(img, 8);
    const std::size_t cols = detail::read_be32(img, 12);
    const std::size_t n_labels = detail::read_be32(lab, 4);
    if (n != n_labels)
        detail::fail(ErrorCode::DimensionMismatch, "image file holds " + std::to_string(n) +
                                                       " images but label file holds " + std::to_string(n_labels) +
                                                       " labels");
    if (rows == 0 || cols == 0)
        detail::fail(ErrorCode::Malformed, "image dimensions must be positive");
    const std::size_t dim = rows * cols;
    if (img.size() < 16 + n * dim)
        detail::fail(ErrorCode::Truncated, "image payload has " + std::to_string(img.size() - 16) +
                                               " bytes, expected " + std::to_string(n * dim));
    if (lab.size() < 8 + n)
        detail::fail(ErrorCode::Truncated, "label payload has " + std::to_string(lab.size() - 8) +
                                               " bytes, expected " + std::to_string(n));
    detail::require(n > 0, ErrorCode::EmptyInput, "IDX files contain no examples");

    unsigned max_label = 0;
    for (std::size_t i = 0; i < n; ++i)
        max_label = std::max<unsigned>(max_label, lab[8 + i]);

    Dataset out(dim, max_label + 1u, options.name);
    out.reserve(n);
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* p = img.data() + 16 + i * dim;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t src = options.transpose_images ? c * rows + r : r * cols + c;
                x[r * cols + c] = static_cast<double>(p[src]) / 255.0;
            }
        out.add(x, lab[8 + i]);
    }
    return out;
}

/// Seeded shuffle, then the first round(fraction * n) rows form the first part.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed)
{
    detail::require(fraction > 0.0 && fraction < 1.0, ErrorCode::InvalidArgument, "fraction must be in (0, 1)");
    const std::size_t n = data.size();
    const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    detail::require(first > 0 && first < n, ErrorCode::InvalidArgument, "split leaves one side empty");
    const auto perm = permutation(n, seed);
    const std::span<const std::size_t> all(perm);
    return {data.subset(all.first(first)), data.subset(all.subspan(first))};
}

/// Per-class quotas for a stratified sample of size `n`: floor of the
/// proportional share, with the remainder handed out one at a time to the
/// largest classes first (ties to the lower class id).
inline std::vector<std::size_t> stratified_quotas(std::span<const std::size_t> class_counts, std::size_t n)
{
    std::size_t total = 0;
    for (auto c : class_counts)
        total += c;
    detail::require(n <= total, ErrorCode::InvalidArgument, "sample size exceeds dataset size");
    std::vector<std::size_t> quota(class_counts.size(), 0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        quota[c] = static_cast<std::size_t>((static_cast<unsigned __int128>(n) * class_counts[c]) / total);
        assigned += quota[c];
    }
    std::vector<std::size_t> by_size(class_counts.size());
    std::iota(by_size.begin(), by_size.end(), std::size_t{0});
    std::stable_sort(by_size.begin(), by_size.end(),
                     [&](std::size_t a, std::size_t b) { return class_counts[a] > class_counts[b]; });
    while (assigned < n) {
        for (auto c : by_size) {
            if (assigned == n)
                break;
            if (quota[c] < class_counts[c]) {
                ++quota[c];
                ++assigned;
            }
        }
    }
    return quota;
}

/// Seeded class-stratified sample of `n` rows, returned in original order.
inline Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed)
{
    detail::require(n <= data.size(), ErrorCode::InvalidArgument, "sample size exceeds dataset size");
    std::vector<std::vector<std::size_t>> members(data.num_classes());
    for (std::size_t i = 0; i < data.size(); ++i)
        members[data.label(i)].push_back(i);
    std::vector<std::size_t> counts;
    for (const auto& m : members)
        counts.push_back(m.size());
    const auto quota = stratified_quotas(counts, n);

    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    for (std::size_t c = 0; c < members.size(); ++c) {
        const auto perm = permutation(members[c].size(), derive_seed(seed, c));
        for (std::size_t j = 0; j < quota[c]; ++j)
            chosen.push_back(members[c][perm[j]]);
    }
    std::sort(chosen.begin(), chosen.end());
    return data.subset(chosen);
}

} // namespace cnng
