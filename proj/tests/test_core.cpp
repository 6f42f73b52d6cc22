#include <doctest.h>

#include "histograph/color.hpp"
#include "histograph/error.hpp"
#include "histograph/filters.hpp"
#include "histograph/image_io.hpp"
#include "support.hpp"

using namespace histograph;

TEST_SUITE("core") {

TEST_CASE("decode_ppm reads a 1x2 red/blue image") {
    const std::string bytes = std::string("P6\n2 1\n255\n") + std::string("\xff\x00\x00\x00\x00\xff", 6);
    const Image img = decode_ppm(bytes);
    CHECK(img.height() == 1);
    CHECK(img.width() == 2);
    CHECK(img.pixel(0, 0)[0] == 255);
    CHECK(img.pixel(0, 0)[2] == 0);
    CHECK(img.pixel(0, 1)[2] == 255);
}

TEST_CASE("decode_ppm accepts comments and a single black pixel") {
    const Image img = decode_ppm(std::string("P6 # c\n1 1\n# x\n255\n") + std::string(3, '\0'));
    CHECK(img == Image(1, 1, {0, 0, 0}));
}

TEST_CASE("encode_ppm emits the canonical header") {
    Image img(1, 2);
    img.set(0, 0, {255, 0, 0});
    img.set(0, 1, {0, 0, 255});
    const std::string bytes = encode_ppm(img);
    CHECK(bytes.size() == 11 + 6);
    CHECK(bytes.substr(0, 11) == "P6\n2 1\n255\n");
}

TEST_CASE("ppm and pgm round trips are bit exact") {
    const Image img = support::random_image(64, 64, 3);
    const auto dir = support::temp_dir("core_io");
    write_ppm(img, dir / "a.ppm");
    CHECK(read_ppm(dir / "a.ppm") == img);
    CHECK(read_file(dir / "a.ppm") == encode_ppm(img));
    const GrayImage g = to_gray(img);
    write_pgm(g, dir / "g.pgm");
    CHECK(read_pgm(dir / "g.pgm") == g);
}

TEST_CASE("ppm parse errors are distinct") {
    auto kind_of = [](const std::string& bytes) {
        try {
            decode_ppm(bytes);
        } catch (const ParseError& e) {
            return e.kind();
        }
        FAIL("expected ParseError");
        return ParseError::Kind::Io;
    };
    CHECK(kind_of("P5\n1 1\n255\n\x01") == ParseError::Kind::MalformedHeader);
    CHECK(kind_of("P6\n2 2\n255\n\x01\x02") == ParseError::Kind::Truncated);
    CHECK(kind_of("P6\n1 1\n65535\n123456") == ParseError::Kind::UnsupportedMaxval);
    CHECK_THROWS_AS(read_ppm("/nonexistent/x.ppm"), ParseError);
}

TEST_CASE("zero-width image is rejected before write") {
    const auto dir = support::temp_dir("core_zero");
    CHECK_THROWS_AS(write_ppm(Image(), dir / "z.ppm"), InvalidArgument);
    CHECK_FALSE(std::filesystem::exists(dir / "z.ppm"));
}

TEST_CASE("to_gray matches the luminance formula") {
    CHECK(to_gray(Image(1, 1, {255, 255, 255})).at(0, 0) == 255);
    CHECK(to_gray(Image(1, 1, {255, 0, 0})).at(0, 0) == 76);
    const Image img = support::random_image(8, 8, 11);
    const GrayImage g = to_gray(img);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
            const auto* p = img.pixel(r, c);
            const long expect = std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
            CHECK(g.at(r, c) == expect);
        }
    }
}

TEST_CASE("gaussian_blur keeps constant images fixed") {
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
        const GrayImage g(17, 23, 137);
        CHECK(gaussian_blur(g, sigma) == g);
    }
    CHECK_THROWS_AS(gaussian_blur(GrayImage(3, 3), 0.0), InvalidArgument);
}

TEST_CASE("gaussian_blur of an impulse matches a dense 2-D convolution") {
    GrayImage g(9, 9, 0);
    g.at(4, 4) = 255;
    const GrayImage b = gaussian_blur(g, 1.0);
    // dense oracle: 2-D kernel built directly from exp(-(x^2+y^2)/2)
    double total = 0;
    for (int y = -3; y <= 3; ++y)
        for (int x = -3; x <= 3; ++x) total += std::exp(-(x * x + y * y) / 2.0);
    for (int r = 0; r < 9; ++r) {
        for (int c = 0; c < 9; ++c) {
            const int dy = r - 4, dx = c - 4;
            const double v = std::abs(dy) <= 3 && std::abs(dx) <= 3 ? 255.0 * std::exp(-(dx * dx + dy * dy) / 2.0) / total : 0.0;
            CHECK(std::abs(double(b.at(r, c)) - v) <= 1.0);
        }
    }
    CHECK(b.at(4, 4) > b.at(4, 5));
    CHECK(b.at(4, 5) > b.at(4, 6));
    CHECK(b.at(4, 6) >= b.at(4, 7));
}

TEST_CASE("gaussian_kernel sums to one with radius ceil(3 sigma)") {
    const auto k = gaussian_kernel(1.5);
    CHECK(k.size() == 2 * 5 + 1);
    double s = 0;
    for (double v : k) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("otsu tie and degenerate rules") {
    Histogram h{};
    h[0] = 10;
    h[255] = 10;
    CHECK(otsu_threshold(h) == 0);
    Histogram one{};
    one[77] = 5;
    CHECK(otsu_threshold(one) == 0);
    CHECK_THROWS_AS(otsu_threshold(Histogram{}), InvalidArgument);
}

TEST_CASE("otsu equals the exhaustive scan on random histograms") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        Histogram h{};
        const int filled = 1 + static_cast<int>(rng.below(256));
        for (int i = 0; i < filled; ++i) h[rng.below(256)] += rng.below(1000);
        h[rng.below(256)] += 1;
        REQUIRE(otsu_threshold(h) == support::brute_otsu(h));
        const int t = static_cast<int>(rng.below(256));
        CHECK(between_class_variance(h, t) == doctest::Approx(support::brute_between_class_variance(h, t)).epsilon(1e-12));
    }
}

TEST_CASE("connected_components connectivity and oracle") {
    GrayImage diag(2, 2, 0);
    diag.at(0, 0) = diag.at(1, 1) = 1;
    CHECK(connected_components(diag, 4).max_label() == 2);
    CHECK(connected_components(diag, 8).max_label() == 1);
    CHECK(connected_components(GrayImage(5, 5, 0), 8).max_label() == 0);
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        GrayImage g(32, 32);
        for (auto& v : g.data()) v = rng.uniform() < 0.45 ? 255 : 0;
        for (int conn : {4, 8}) {
            // both number components by first raster encounter, so equal maps
            CHECK(connected_components(g, conn) == support::flood_fill_components(g, conn));
        }
    }
}

TEST_CASE("distance_transform matches brute force") {
    Rng rng(12);
    GrayImage g(20, 17);
    for (auto& v : g.data()) v = rng.uniform() < 0.8 ? 1 : 0;
    const auto d = distance_transform(g);
    for (int r = 0; r < 20; ++r) {
        for (int c = 0; c < 17; ++c) {
            double best = 1e300;
            if (!g.at(r, c)) best = 0;
            for (int y = -1; y <= 20; ++y)
                for (int x = -1; x <= 17; ++x) {
                    const bool bg = y < 0 || x < 0 || y >= 20 || x >= 17 || !g.at(y, x);
                    if (bg) best = std::min(best, std::hypot(double(y - r), double(x - c)));
                }
            CHECK(d[std::size_t(r) * 17 + c] == doctest::Approx(best).epsilon(1e-12));
        }
    }
}

TEST_CASE("relabel_sequential and entity_table") {
    LabelMap l(3, 4, std::vector<std::int32_t>{0, 7, 7, 0, 3, 3, 0, 9, 0, 0, 0, 9});
    const LabelMap s = relabel_sequential(l);
    CHECK(s.at(0, 1) == 1);
    CHECK(s.at(1, 0) == 2);
    CHECK(s.at(1, 3) == 3);
    s.validate_contiguous();
    CHECK_THROWS_AS(l.validate_contiguous(), InvalidArgument);
    const EntityTable t = entity_table(s);
    REQUIRE(t.size() == 3);
    CHECK(t[0].area == 2);
    CHECK(t[0].centroid == Point{0.0, 1.5});
    CHECK(t[2].bbox == BoundingBox{1, 3, 2, 3});
}

TEST_CASE("label map json and entity csv round trip") {
    const LabelMap l = support::voronoi(16, 12, 5, 2);
    CHECK(label_map_from_json(label_map_to_json(l)) == l);
    CHECK_THROWS_AS(label_map_from_json(R"({"height":2,"width":2,"labels":[1,2,3]})"), SchemaError);
    const auto dir = support::temp_dir("core_csv");
    const EntityTable t = entity_table(l);
    write_entity_csv(t, dir / "e.csv");
    CHECK(read_entity_csv(dir / "e.csv") == t);
}

TEST_CASE("CIELAB reference values") {
    const Lab white = rgb_to_lab(255, 255, 255);
    CHECK(white[0] == doctest::Approx(100.0).epsilon(1e-4));
    CHECK(std::abs(white[1]) < 1e-3);
    CHECK(std::abs(white[2]) < 1e-3);
    const Lab red = rgb_to_lab(255, 0, 0);
    CHECK(red[0] == doctest::Approx(53.24).epsilon(1e-3));
    CHECK(red[1] == doctest::Approx(80.09).epsilon(1e-3));
    CHECK(red[2] == doctest::Approx(67.20).epsilon(1e-3));
}

}  // TEST_SUITE
