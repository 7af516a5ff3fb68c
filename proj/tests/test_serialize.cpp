#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>

#include "upi/errors.hpp"
#include "upi/image_io.hpp"
#include "upi/network.hpp"
#include "upi/serialize.hpp"

using namespace upi;
namespace fs = std::filesystem;

namespace {

const Activation kSoftplus{ActivationKind::softplus, 20.0};

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("g17 formatting round-trips doubles exactly") {
    CHECK(format_g17(1.0) == "1");
    CHECK(format_g17(0.5) == "0.5");
    const double third = 1.0 / 3.0;
    CHECK(std::stod(format_g17(third)) == third);
    CHECK(std::stod(format_g17(0.1)) == 0.1);
    CHECK(std::stod(format_g17(-1e-300)) == -1e-300);
}

TEST_CASE("csv fields are quoted only when needed") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("eps=0.4,l2") == "\"eps=0.4,l2\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    CHECK(csv_field("") == "");
}

TEST_CASE("text files hold arbitrary bytes") {
    const std::string path = temp_path("upilab_test_bytes.bin");
    std::string payload = "header\n";
    payload.push_back('\0');
    payload += "\xff\x01tail";
    write_text_file(path, payload);
    CHECK(read_text_file(path) == payload);
    fs::remove(path);
    CHECK_THROWS_AS(read_text_file(temp_path("upilab_does_not_exist.txt")), IoError);
}

TEST_CASE("perturbation artifacts round-trip bitwise") {
    const Perturbation p(vec({0.1, -0.25, 1.0 / 3.0}), PerturbationBudget{0.5, NormKind::l2});
    const std::string text = perturbation_to_json(p, "upi_grad", 12345);
    const PerturbationArtifact back = perturbation_from_json(text);
    CHECK(back.algorithm == "upi_grad");
    CHECK(back.seed == 12345);
    CHECK(back.perturbation.budget().epsilon == 0.5);
    CHECK(back.perturbation.budget().norm == NormKind::l2);
    REQUIRE(back.perturbation.delta().shape() == p.delta().shape());
    for (std::size_t i = 0; i < p.delta().size(); ++i)
        CHECK(back.perturbation.delta().data()[i] == p.delta().data()[i]);

    const std::string path = temp_path("upilab_test_perturbation.json");
    save_perturbation(p, "upi_pca_fgm", 7, path);
    const PerturbationArtifact loaded = load_perturbation(path);
    CHECK(loaded.algorithm == "upi_pca_fgm");
    CHECK(loaded.perturbation.delta().data()[2] == p.delta().data()[2]);
    fs::remove(path);
}

TEST_CASE("perturbation artifacts reject tampered streams") {
    CHECK_THROWS_AS(perturbation_from_json("{ not json"), ParseError);
    CHECK_THROWS_AS(perturbation_from_json("{}"), ParseError);
    const std::string wrong_tag = R"({"format":"other","version":1,"algorithm":"a",
        "seed":0,"budget":{"epsilon":1.0,"norm":"l2"},"shape":[1],"values":[0.0]})";
    CHECK_THROWS_AS(perturbation_from_json(wrong_tag), ParseError);
    const std::string wrong_version = R"({"format":"upi-perturbation","version":2,
        "algorithm":"a","seed":0,"budget":{"epsilon":1.0,"norm":"l2"},
        "shape":[1],"values":[0.0]})";
    CHECK_THROWS_AS(perturbation_from_json(wrong_version), ParseError);
    const std::string count_mismatch = R"({"format":"upi-perturbation","version":1,
        "algorithm":"a","seed":0,"budget":{"epsilon":1.0,"norm":"l2"},
        "shape":[3],"values":[0.0,0.0]})";
    CHECK_THROWS_AS(perturbation_from_json(count_mismatch), ParseError);
    // Loading re-checks the ball: a stored vector outside its own budget is
    // rejected with the budget error, not a parse error.
    const std::string outside = R"({"format":"upi-perturbation","version":1,
        "algorithm":"a","seed":0,"budget":{"epsilon":0.1,"norm":"l2"},
        "shape":[2],"values":[3.0,4.0]})";
    CHECK_THROWS_AS(perturbation_from_json(outside), ValueError);
}

TEST_CASE("pgm streams round-trip and reject each defect distinctly") {
    GrayImage img;
    img.width = 2;
    img.height = 3;
    img.pixels = {0, 255, 7, 128, 33, 1};
    const std::string bytes = encode_pgm(img);
    CHECK(bytes.rfind("P5\n2 3\n255\n", 0) == 0);
    const GrayImage back = decode_pgm(bytes);
    CHECK(back.width == 2);
    CHECK(back.height == 3);
    CHECK(back.pixels == img.pixels);

    CHECK_THROWS_AS(decode_pgm("P6\n1 1\n255\nx"), BadMagicError);
    CHECK_THROWS_AS(decode_pgm("P5\n1 1\n128\nx"), UnsupportedElementError);
    CHECK_THROWS_AS(decode_pgm("P5\nab\n"), ParseError);
    CHECK_THROWS_AS(decode_pgm(std::string("P5\n2 2\n255\nxy")), TruncatedStreamError);
    CHECK_THROWS_AS(decode_pgm(std::string("P5\n1 1\n255\nxy")), ParseError);

    GrayImage bad;
    bad.width = 2;
    bad.height = 2;
    bad.pixels = {1, 2, 3};
    CHECK_THROWS_AS(encode_pgm(bad), ValueError);
}

TEST_CASE("quantization maps the value range onto 0..255") {
    const Tensor t(Shape{2, 2}, {-0.4, 0.0, 0.1, 0.4});
    AffineMap map;
    const GrayImage img = quantize_minmax(t, &map);
    CHECK(map.lo == -0.4);
    CHECK(map.hi == 0.4);
    CHECK(img.pixels[0] == 0);
    CHECK(img.pixels[1] == 128);  // midpoint rounds half-up
    CHECK(img.pixels[2] == 159);  // 255 * 0.5 / 0.8 = 159.375
    CHECK(img.pixels[3] == 255);

    const GrayImage flat = quantize_minmax(Tensor(Shape{2, 2}, {0.7, 0.7, 0.7, 0.7}));
    for (const std::uint8_t p : flat.pixels) CHECK(p == 128);

    CHECK_THROWS_AS(quantize_minmax(Tensor(Shape{4})), ShapeError);
    CHECK_THROWS_AS(quantize_minmax(Tensor(Shape{2, 2, 2})), ShapeError);
}

TEST_CASE("perturbation images survive the quantize-dequantize trip") {
    const Tensor delta(Shape{2, 2}, {-0.3, 0.2, 0.05, -0.1});
    const Perturbation p(delta, PerturbationBudget{0.4, NormKind::l2});
    const std::string path = temp_path("upilab_test_delta.pgm");
    export_perturbation_image(p, path);

    const std::string sidecar = read_text_file(path + ".map.txt");
    CHECK(sidecar.find("lo ") != std::string::npos);
    CHECK(sidecar.find("hi ") != std::string::npos);
    CHECK(sidecar.find("shape 2 2\n") != std::string::npos);

    const Tensor back = import_perturbation_image(path);
    REQUIRE(back.shape() == delta.shape());
    const double step = (0.2 - (-0.3)) / 255.0;
    for (std::size_t i = 0; i < delta.size(); ++i)
        CHECK(std::abs(back.data()[i] - delta.data()[i]) <= 0.5 * step + 1e-12);

    // Rank-3 single-channel tensors are images too.
    const Tensor chan(Shape{1, 2, 2}, {0.0, 0.1, -0.1, 0.05});
    export_perturbation_image(Perturbation(chan, PerturbationBudget{0.2, NormKind::l2}), path);
    CHECK(import_perturbation_image(path).shape() == chan.shape());

    write_text_file(path + ".map.txt", "lo 0\nshape 2 2\n");
    CHECK_THROWS_AS(import_perturbation_image(path), ParseError);
    fs::remove(path);
    fs::remove(path + ".map.txt");
    CHECK_THROWS_AS(import_perturbation_image(path), IoError);
}

TEST_CASE("interpretation panel tiles a 4-frame strip") {
    const Network net = make_fcn(Shape{4, 4}, 8, 3, kSoftplus, 2);
    Tensor x(Shape{4, 4});
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data()[i] = static_cast<double>(i) / 16.0;
    const Perturbation zero(Tensor(Shape{4, 4}), PerturbationBudget{0.1, NormKind::l2});
    Interpreter interpreter;

    const std::string path = temp_path("upilab_test_panel.pgm");
    export_interpretation_panel(net, interpreter, x, zero, path);
    const GrayImage panel = read_pgm(path);
    // margin 2, gap 2, label band 7: four 4x4 tiles in a row.
    CHECK(panel.width == 2 * 2 + 4 * 4 + 3 * 2);
    CHECK(panel.height == 2 * 2 + 7 + 4);

    // A zero perturbation leaves both the input pair and the map pair equal.
    const std::size_t top = 2 + 7;
    auto tile_left = [](std::size_t t) { return 2 + t * (4 + 2); };
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(panel.at(top + r, tile_left(0) + c) == panel.at(top + r, tile_left(1) + c));
            CHECK(panel.at(top + r, tile_left(2) + c) == panel.at(top + r, tile_left(3) + c));
        }
    }
    fs::remove(path);

    const Perturbation flat_delta(Tensor(Shape{16}), PerturbationBudget{0.1, NormKind::l2});
    CHECK_THROWS_AS(export_interpretation_panel(net, interpreter, Tensor(Shape{16}),
                                                flat_delta, path),
                    ShapeError);
}
