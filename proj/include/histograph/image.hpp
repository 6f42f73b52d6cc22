#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace histograph {

/// 8-bit RGB raster, row-major interleaved triplets.
class Image {
public:
    Image() = default;
    /// Allocates a height x width image filled with `fill`.
    Image(int height, int width, std::array<std::uint8_t, 3> fill = {0, 0, 0});
    /// Wraps row-major RGB triplets; the length must be 3 * height * width.
    static Image from_interleaved(int height, int width, std::vector<std::uint8_t> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }
    bool empty() const noexcept { return height_ == 0 || width_ == 0; }

    std::uint8_t* pixel(int row, int col) noexcept {
        return data_.data() + 3 * (static_cast<std::size_t>(row) * width_ + col);
    }
    const std::uint8_t* pixel(int row, int col) const noexcept {
        return data_.data() + 3 * (static_cast<std::size_t>(row) * width_ + col);
    }
    void set(int row, int col, std::array<std::uint8_t, 3> rgb) noexcept {
        auto* p = pixel(row, col);
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
    }

    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

/// 8-bit single-channel raster.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int height, int width, std::uint8_t fill = 0);
    GrayImage(int height, int width, std::vector<std::uint8_t> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return data_.size(); }

    std::uint8_t& at(int row, int col) noexcept {
        return data_[static_cast<std::size_t>(row) * width_ + col];
    }
    std::uint8_t at(int row, int col) const noexcept {
        return data_[static_cast<std::size_t>(row) * width_ + col];
    }

    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Integer label raster: 0 is background, k > 0 is entity k.
///
/// A valid label map uses the contiguous label set {0, 1, ..., L} with every
/// positive label present. Construction does not enforce this (intermediate
/// results may be sparse); call `validate_contiguous` where it matters.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(int height, int width, std::int32_t fill = 0);
    LabelMap(int height, int width, std::vector<std::int32_t> labels);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return labels_.size(); }

    std::int32_t& at(int row, int col) noexcept {
        return labels_[static_cast<std::size_t>(row) * width_ + col];
    }
    std::int32_t at(int row, int col) const noexcept {
        return labels_[static_cast<std::size_t>(row) * width_ + col];
    }

    std::span<const std::int32_t> labels() const noexcept { return labels_; }
    std::span<std::int32_t> labels() noexcept { return labels_; }

    /// Largest label present (0 for an all-background map).
    std::int32_t max_label() const noexcept;

    /// Throws InvalidArgument unless labels are exactly {0..L} (0 optional).
    void validate_contiguous() const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::int32_t> labels_;
};

/// Relabels the positive labels of `labels` to 1..L in first-encounter raster
/// order. Background stays 0.
LabelMap relabel_sequential(const LabelMap& labels);

struct Point {
    double row = 0.0;
    double col = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct BoundingBox {
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0;  // inclusive

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Entity {
    std::int32_t id = 0;
    Point centroid;
    BoundingBox bbox;
    std::int64_t area = 0;

    friend bool operator==(const Entity&, const Entity&) = default;
};

/// Per-entity geometry derived from a LabelMap, ordered by id.
using EntityTable = std::vector<Entity>;

/// One row per positive label 1..L. Labels absent from the map are skipped.
EntityTable entity_table(const LabelMap& labels);

}  // namespace histograph
