#include "histograph/image_io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histograph/error.hpp"
#include "csv.hpp"

namespace histograph {

namespace {

using json = nlohmann::json;

struct Header {
    int width = 0;
    int height = 0;
    std::size_t payload_offset = 0;
};

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    void expect_magic(const char* magic) {
        if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1]) {
            throw ParseError(ParseError::Kind::MalformedHeader,
                             std::string("missing magic \"") + magic + "\"");
        }
        pos_ = 2;
    }

    long read_int(const char* field) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) {
            throw ParseError(ParseError::Kind::MalformedHeader,
                             std::string("header ends before ") + field);
        }
        if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            throw ParseError(ParseError::Kind::MalformedHeader,
                             std::string("non-numeric ") + field);
        }
        long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L) {
                throw ParseError(ParseError::Kind::MalformedHeader,
                                 std::string(field) + " out of range");
            }
            ++pos_;
        }
        return value;
    }

    // Exactly one whitespace byte separates maxval from the payload.
    std::size_t end_of_header() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw ParseError(ParseError::Kind::MalformedHeader,
                             "missing whitespace after maxval");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char ch = bytes_[pos_];
            if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos_;
            } else if (ch == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

Header parse_header(const std::string& bytes, const char* magic) {
    HeaderReader reader(bytes);
    reader.expect_magic(magic);
    Header h;
    const long w = reader.read_int("width");
    const long hgt = reader.read_int("height");
    const long maxval = reader.read_int("maxval");
    if (w < 1 || hgt < 1) {
        throw ParseError(ParseError::Kind::MalformedHeader, "zero image dimension");
    }
    if (maxval != 255) {
        throw ParseError(ParseError::Kind::UnsupportedMaxval,
                         "maxval must be 255, got " + std::to_string(maxval));
    }
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(hgt);
    h.payload_offset = reader.end_of_header();
    return h;
}

std::string canonical_header(const char* magic, int width, int height) {
    return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) +
           "\n255\n";
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

Image decode_ppm(const std::string& bytes) {
    const Header h = parse_header(bytes, "P6");
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
    if (bytes.size() < h.payload_offset + need) {
        throw ParseError(ParseError::Kind::Truncated,
                         "payload has " + std::to_string(bytes.size() - h.payload_offset) +
                             " bytes, expected " + std::to_string(need));
    }
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
    return Image::from_interleaved(h.height, h.width, std::move(data));
}

std::string encode_ppm(const Image& img) {
    if (img.empty()) throw InvalidArgument("write_ppm: image has a zero dimension");
    std::string out = canonical_header("P6", img.width(), img.height());
    out.append(reinterpret_cast<const char*>(img.data().data()), img.data().size());
    return out;
}

GrayImage decode_pgm(const std::string& bytes) {
    const Header h = parse_header(bytes, "P5");
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
    if (bytes.size() < h.payload_offset + need) {
        throw ParseError(ParseError::Kind::Truncated, "PGM payload truncated");
    }
    std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
    return GrayImage(h.height, h.width, std::move(data));
}

std::string encode_pgm(const GrayImage& img) {
    if (img.width() < 1 || img.height() < 1) {
        throw InvalidArgument("write_pgm: image has a zero dimension");
    }
    std::string out = canonical_header("P5", img.width(), img.height());
    out.append(reinterpret_cast<const char*>(img.data().data()), img.data().size());
    return out;
}

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const Image& img, const std::filesystem::path& path) {
    write_file(path, encode_ppm(img));
}

GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    write_file(path, encode_pgm(img));
}

std::string label_map_to_json(const LabelMap& labels) {
    json j;
    j["height"] = labels.height();
    j["width"] = labels.width();
    j["labels"] = std::vector<std::int32_t>(labels.labels().begin(), labels.labels().end());
    return j.dump();
}

LabelMap label_map_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("labels", std::string("invalid JSON: ") + e.what());
    }
    for (const char* key : {"height", "width", "labels"}) {
        if (!j.contains(key)) throw SchemaError(key, "missing");
    }
    if (!j["height"].is_number_integer()) throw SchemaError("height", "not an integer");
    if (!j["width"].is_number_integer()) throw SchemaError("width", "not an integer");
    if (!j["labels"].is_array()) throw SchemaError("labels", "not an array");
    const int h = j["height"].get<int>();
    const int w = j["width"].get<int>();
    std::vector<std::int32_t> labels;
    labels.reserve(j["labels"].size());
    for (const auto& v : j["labels"]) {
        if (!v.is_number_integer()) throw SchemaError("labels", "non-integer entry");
        labels.push_back(v.get<std::int32_t>());
    }
    if (h < 1 || w < 1 || labels.size() != static_cast<std::size_t>(h) * w) {
        throw SchemaError("labels", "length does not match height*width");
    }
    return LabelMap(h, w, std::move(labels));
}

void write_label_map(const LabelMap& labels, const std::filesystem::path& path) {
    write_file(path, label_map_to_json(labels));
}

LabelMap read_label_map(const std::filesystem::path& path) {
    return label_map_from_json(read_file(path));
}

GrayImage mask_to_gray(const LabelMap& mask) {
    GrayImage out(mask.height(), mask.width(), 0);
    auto src = mask.labels();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0 ? 255 : 0;
    return out;
}

void write_entity_csv(const EntityTable& table, const std::filesystem::path& path) {
    std::string out = "id,centroid_row,centroid_col,area,bbox_r0,bbox_c0,bbox_r1,bbox_c1\n";
    for (const auto& e : table) {
        out += std::to_string(e.id) + "," + csv::format_double(e.centroid.row) + "," +
               csv::format_double(e.centroid.col) + "," + std::to_string(e.area) + "," +
               std::to_string(e.bbox.r0) + "," + std::to_string(e.bbox.c0) + "," +
               std::to_string(e.bbox.r1) + "," + std::to_string(e.bbox.c1) + "\n";
    }
    write_file(path, out);
}

EntityTable read_entity_csv(const std::filesystem::path& path) {
    const auto rows = csv::parse(read_file(path));
    if (rows.empty() || rows[0].size() != 8 || rows[0][0] != "id") {
        throw SchemaError("header", "expected id,centroid_row,centroid_col,area,bbox_r0,...");
    }
    EntityTable table;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 8) throw SchemaError("row " + std::to_string(i), "expected 8 columns");
        Entity e;
        e.id = static_cast<std::int32_t>(csv::parse_int(r[0], "id"));
        e.centroid = {csv::parse_double(r[1], "centroid_row"), csv::parse_double(r[2], "centroid_col")};
        e.area = csv::parse_int(r[3], "area");
        e.bbox = {static_cast<int>(csv::parse_int(r[4], "bbox_r0")),
                  static_cast<int>(csv::parse_int(r[5], "bbox_c0")),
                  static_cast<int>(csv::parse_int(r[6], "bbox_r1")),
                  static_cast<int>(csv::parse_int(r[7], "bbox_c1"))};
        table.push_back(e);
    }
    return table;
}

}  // namespace histograph
