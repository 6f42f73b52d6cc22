#pragma once

#include <filesystem>
#include <string>

#include "histograph/image.hpp"

namespace histograph {

// Binary PPM (P6) / PGM (P5) with maxval 255. Writers always emit the
// canonical header "P6\n{w} {h}\n255\n"; readers accept any whitespace and
// '#' comments between header fields.

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

/// In-memory variants used by tests and the pipeline hasher.
Image decode_ppm(const std::string& bytes);
std::string encode_ppm(const Image& img);
GrayImage decode_pgm(const std::string& bytes);
std::string encode_pgm(const GrayImage& img);

/// LabelMap as {"height","width","labels":[row-major ints]}.
std::string label_map_to_json(const LabelMap& labels);
LabelMap label_map_from_json(const std::string& text);
void write_label_map(const LabelMap& labels, const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path);

/// Binary mask (label > 0) as a 0/255 PGM.
GrayImage mask_to_gray(const LabelMap& mask);

/// entities.csv: id,centroid_row,centroid_col,area,bbox_r0,bbox_c0,bbox_r1,bbox_c1
void write_entity_csv(const EntityTable& table, const std::filesystem::path& path);
EntityTable read_entity_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace histograph
