#pragma once

#include "cnng/error.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cnng {

/// Labeled examples stored as one contiguous row-major block.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t dim, std::size_t num_classes, std::string name = {})
        : dim_(dim), num_classes_(num_classes), name_(std::move(name))
    {
    }

    void reserve(std::size_t n)
    {
        pixels_.reserve(n * dim_);
        labels_.reserve(n);
    }

    void add(std::span<const double> x, std::uint32_t label)
    {
        detail::require(x.size() == dim_, ErrorCode::DimensionMismatch,
                        "example length does not match dataset dimension");
        detail::require(label < num_classes_, ErrorCode::OutOfRange, "label out of range");
        pixels_.insert(pixels_.end(), x.begin(), x.end());
        labels_.push_back(label);
    }

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    std::span<const double> input(std::size_t i) const noexcept
    {
        return {pixels_.data() + i * dim_, dim_};
    }
    std::uint32_t label(std::size_t i) const noexcept { return labels_[i]; }
    std::span<const std::uint32_t> labels() const noexcept { return labels_; }

    /// Copy of the rows at `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const
    {
        Dataset out(dim_, num_classes_, name_);
        out.reserve(indices.size());
        for (auto i : indices) {
            detail::require(i < size(), ErrorCode::OutOfRange, "subset index out of range");
            out.pixels_.insert(out.pixels_.end(), pixels_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                               pixels_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
            out.labels_.push_back(labels_[i]);
        }
        return out;
    }

    friend bool operator==(const Dataset& a, const Dataset& b)
    {
        return a.dim_ == b.dim_ && a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ &&
               a.pixels_ == b.pixels_;
    }

private:
    std::size_t dim_ = 0;
    std::size_t num_classes_ = 0;
    std::string name_;
    std::vector<double> pixels_;
    std::vector<std::uint32_t> labels_;
};

} // namespace cnng
