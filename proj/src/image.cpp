#include "histograph/image.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "histograph/error.hpp"

namespace histograph {

namespace {

void require_dims(int height, int width, const char* what) {
    if (height < 1 || width < 1) {
        throw InvalidArgument(std::string(what) + ": dimensions must be >= 1, got " +
                              std::to_string(height) + "x" + std::to_string(width));
    }
}

}  // namespace

Image::Image(int height, int width, std::array<std::uint8_t, 3> fill)
    : height_(height), width_(width) {
    require_dims(height, width, "Image");
    data_.resize(pixel_count() * 3);
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        data_[3 * i] = fill[0];
        data_[3 * i + 1] = fill[1];
        data_[3 * i + 2] = fill[2];
    }
}

Image Image::from_interleaved(int height, int width, std::vector<std::uint8_t> data) {
    require_dims(height, width, "Image");
    if (data.size() != std::size_t(height) * std::size_t(width) * 3) {
        throw InvalidArgument("Image: data length " + std::to_string(data.size()) + " != 3*height*width");
    }
    Image img;
    img.height_ = height;
    img.width_ = width;
    img.data_ = std::move(data);
    return img;
}

GrayImage::GrayImage(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
    require_dims(height, width, "GrayImage");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
}

GrayImage::GrayImage(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
    require_dims(height, width, "GrayImage");
    if (data_.size() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("GrayImage: data length mismatch");
    }
}

LabelMap::LabelMap(int height, int width, std::int32_t fill) : height_(height), width_(width) {
    require_dims(height, width, "LabelMap");
    if (fill < 0) throw InvalidArgument("LabelMap: negative label");
    labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

LabelMap::LabelMap(int height, int width, std::vector<std::int32_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    require_dims(height, width, "LabelMap");
    if (labels_.size() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("LabelMap: data length mismatch");
    }
    if (std::any_of(labels_.begin(), labels_.end(), [](std::int32_t v) { return v < 0; })) {
        throw InvalidArgument("LabelMap: negative label");
    }
}

std::int32_t LabelMap::max_label() const noexcept {
    if (labels_.empty()) return 0;
    return *std::max_element(labels_.begin(), labels_.end());
}

void LabelMap::validate_contiguous() const {
    const std::int32_t top = max_label();
    std::vector<bool> seen(static_cast<std::size_t>(top) + 1, false);
    for (auto v : labels_) seen[v] = true;
    for (std::int32_t k = 1; k <= top; ++k) {
        if (!seen[k]) {
            throw InvalidArgument("LabelMap: label " + std::to_string(k) +
                                  " missing below max label " + std::to_string(top));
        }
    }
}

LabelMap relabel_sequential(const LabelMap& labels) {
    if (labels.pixel_count() == 0) return labels;
    std::unordered_map<std::int32_t, std::int32_t> remap;
    std::vector<std::int32_t> out(labels.pixel_count(), 0);
    std::int32_t next = 1;
    auto src = labels.labels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] == 0) continue;
        auto [it, inserted] = remap.try_emplace(src[i], next);
        if (inserted) ++next;
        out[i] = it->second;
    }
    return LabelMap(labels.height(), labels.width(), std::move(out));
}

EntityTable entity_table(const LabelMap& labels) {
    const std::int32_t top = labels.max_label();
    struct Acc {
        double sum_r = 0, sum_c = 0;
        std::int64_t area = 0;
        BoundingBox box{};
    };
    std::vector<Acc> acc(static_cast<std::size_t>(top) + 1);
    for (int r = 0; r < labels.height(); ++r) {
        for (int c = 0; c < labels.width(); ++c) {
            const auto k = labels.at(r, c);
            if (k == 0) continue;
            auto& a = acc[k];
            if (a.area == 0) {
                a.box = {r, c, r, c};
            } else {
                a.box.r0 = std::min(a.box.r0, r);
                a.box.c0 = std::min(a.box.c0, c);
                a.box.r1 = std::max(a.box.r1, r);
                a.box.c1 = std::max(a.box.c1, c);
            }
            a.sum_r += r;
            a.sum_c += c;
            ++a.area;
        }
    }
    EntityTable table;
    for (std::int32_t k = 1; k <= top; ++k) {
        const auto& a = acc[k];
        if (a.area == 0) continue;
        const double n = static_cast<double>(a.area);
        table.push_back(Entity{k, {a.sum_r / n, a.sum_c / n}, a.box, a.area});
    }
    return table;
}

}  // namespace histograph
