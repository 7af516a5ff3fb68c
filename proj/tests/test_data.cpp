#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <vector>

#include "upi/data.hpp"
#include "upi/network.hpp"
#include "upi/train.hpp"

using namespace upi;

namespace {

std::vector<std::uint8_t> image_stream_1x2x2() {
    // magic 0x00000803, dims (1,2,2), payload 00 7F FF 01.
    return {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0x00, 0x7F, 0xFF, 0x01};
}

std::vector<std::uint8_t> label_stream_3() {
    // magic 0x00000801, dims (3), payload 05 00 09.
    return {0, 0, 8, 1, 0, 0, 0, 3, 0x05, 0x00, 0x09};
}

}  // namespace

TEST_CASE("handcrafted image stream parses to the expected tensor") {
    const auto bytes = image_stream_1x2x2();
    const Tensor t = parse_idx(bytes);
    CHECK(t.shape() == Shape{1, 2, 2});
    CHECK(t.data()[0] == 0.0);
    CHECK(t.data()[1] == 127.0);
    CHECK(t.data()[2] == 255.0);
    CHECK(t.data()[3] == 1.0);
}

TEST_CASE("handcrafted label stream parses to (5,0,9)") {
    const auto bytes = label_stream_3();
    const Tensor t = parse_idx(bytes);
    CHECK(t.shape() == Shape{3});
    CHECK(t.data()[0] == 5.0);
    CHECK(t.data()[1] == 0.0);
    CHECK(t.data()[2] == 9.0);
}

TEST_CASE("parse then serialize reproduces the original bytes") {
    for (const auto& bytes : {image_stream_1x2x2(), label_stream_3()}) {
        const IdxArray a = parse_idx_raw(bytes);
        CHECK(serialize_idx(a) == bytes);
    }
}

TEST_CASE("malformed streams raise the specific error class") {
    // Unknown magic word 0x00000999.
    std::vector<std::uint8_t> bad_magic{0, 0, 0x09, 0x99, 0, 0, 0, 1};
    CHECK_THROWS_AS(parse_idx_raw(bad_magic), BadMagicError);

    // Plausible frame with a non-byte element type.
    std::vector<std::uint8_t> bad_elem{0, 0, 0x0D, 1, 0, 0, 0, 1, 42};
    CHECK_THROWS_AS(parse_idx_raw(bad_elem), UnsupportedElementError);

    // Payload shorter than the header claims.
    auto truncated = image_stream_1x2x2();
    truncated.pop_back();
    CHECK_THROWS_AS(parse_idx_raw(truncated), TruncatedStreamError);

    // Header cut off inside the dimension list.
    std::vector<std::uint8_t> short_header{0, 0, 8, 3, 0, 0, 0, 1};
    CHECK_THROWS_AS(parse_idx_raw(short_header), TruncatedStreamError);

    // Trailing garbage after the declared payload.
    auto trailing = label_stream_3();
    trailing.push_back(0xEE);
    CHECK_THROWS_AS(parse_idx_raw(trailing), ParseError);
}

TEST_CASE("gzip wrapper is detected by magic and round-trips") {
    const auto raw = read_file_bytes(std::string(UPILAB_SOURCE_DIR) +
                                     "/data/mnist/t10k-labels-idx1-ubyte.gz");
    REQUIRE(raw.size() >= 2);
    CHECK(raw[0] == 0x1f);
    CHECK(raw[1] == 0x8b);
    const std::vector<std::uint8_t> plain = gunzip(raw);
    const IdxArray from_gz = parse_idx_raw(raw);
    const IdxArray from_plain = parse_idx_raw(plain);
    CHECK(from_gz.dims == from_plain.dims);
    CHECK(from_gz.bytes == from_plain.bytes);
    CHECK(from_gz.dims.size() == 1);
    CHECK(from_gz.dims[0] == 10000);
    // Re-serialization matches the inflated bytes exactly.
    CHECK(serialize_idx(from_gz) == plain);

    auto cut = raw;
    cut.resize(raw.size() / 2);
    CHECK_THROWS_AS(gunzip(cut), TruncatedStreamError);
}

TEST_CASE("scale_pixels divides by 256 and rejects out-of-range values") {
    const Tensor raw(Shape{3}, {0.0, 128.0, 255.0});
    const Tensor s = scale_pixels(raw);
    CHECK(s.data()[0] == 0.0);
    CHECK(s.data()[1] == 0.5);
    CHECK(s.data()[2] == doctest::Approx(0.99609375).epsilon(1e-15));
    CHECK_THROWS_AS(scale_pixels(Tensor(Shape{1}, {256.0})), ValueError);
    CHECK_THROWS_AS(scale_pixels(Tensor(Shape{1}, {-1.0})), ValueError);
}

TEST_CASE("dataset invariants are enforced at construction") {
    IdxArray images;
    images.dims = {2, 2, 2};
    images.bytes = {0, 1, 2, 3, 4, 5, 6, 7};
    IdxArray labels;
    labels.dims = {2};
    labels.bytes = {0, 1};
    const Dataset d = make_image_dataset(images, labels, 2);
    CHECK(d.size() == 2);
    CHECK(d.images[0].shape() == Shape{2, 2});
    CHECK(d.images[1].data()[3] == doctest::Approx(7.0 / 256.0));

    labels.bytes = {0, 5};  // label out of range for class_count 2
    CHECK_THROWS_AS(make_image_dataset(images, labels, 2), ValueError);
    labels.dims = {3};
    labels.bytes = {0, 1, 1};  // count mismatch
    CHECK_THROWS_AS(make_image_dataset(images, labels, 2), ShapeError);
}

TEST_CASE("blobs are balanced and deterministic") {
    const Dataset d = synthetic_blobs(4, 3, 2, 0.05, 9);
    REQUIRE(d.size() == 4);
    std::size_t per_class[2] = {0, 0};
    for (std::size_t y : d.labels) ++per_class[y];
    CHECK(per_class[0] == 2);
    CHECK(per_class[1] == 2);
    for (const Tensor& x : d.images) {
        for (double v : x.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    const Dataset d2 = synthetic_blobs(4, 3, 2, 0.05, 9);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.labels[i] == d2.labels[i]);
        CHECK(dot(sub(d.images[i], d2.images[i]), sub(d.images[i], d2.images[i])) == 0.0);
    }
}

TEST_CASE("tiny spread collapses within-class samples onto their mean") {
    const Dataset d = synthetic_blobs(8, 4, 2, 1e-12, 3);
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = i + 1; j < d.size(); ++j) {
            if (d.labels[i] != d.labels[j]) continue;
            CHECK(l2_norm(sub(d.images[i], d.images[j])) < 1e-9);
        }
    }
}

TEST_CASE("well-separated blobs are linearly classifiable") {
    // separation/spread = 10: a linear model should be nearly perfect.
    const Dataset d = synthetic_blobs(200, 8, 3, 0.1, 17);
    Network net = make_linear(Shape{8}, 3, Activation{ActivationKind::softplus, 20.0}, 1);
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 16;
    tc.learning_rate = 0.5;
    tc.seed = 2;
    const TrainReport r = train_erm(net, d, tc);
    CHECK(r.train_accuracy >= 0.99);
}

TEST_CASE("subset is stratified, sized, and seeded") {
    const Dataset d = synthetic_blobs(40, 5, 4, 0.05, 1);
    const Dataset s = subset(d, 12, 5);
    REQUIRE(s.size() == 12);
    std::size_t per_class[4] = {0, 0, 0, 0};
    for (std::size_t y : s.labels) ++per_class[y];
    for (std::size_t c = 0; c < 4; ++c) CHECK(per_class[c] == 3);

    const Dataset s2 = subset(d, 12, 5);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.labels[i] == s2.labels[i]);
        CHECK(l2_norm(sub(s.images[i], s2.images[i])) == 0.0);
    }
    CHECK_THROWS_AS(subset(d, 41, 5), ValueError);

    // count = n is a permutation of the original.
    const Dataset all = subset(d, 40, 7);
    std::vector<int> seen(40, 0);
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (all.labels[i] == d.labels[j] &&
                l2_norm(sub(all.images[i], d.images[j])) == 0.0 && !seen[j]) {
                seen[j] = 1;
                break;
            }
        }
    }
    std::size_t matched = 0;
    for (int b : seen) matched += static_cast<std::size_t>(b);
    CHECK(matched == 40);
}

TEST_CASE("take picks rows by index") {
    const Dataset d = synthetic_blobs(10, 3, 2, 0.05, 2);
    const std::vector<std::size_t> idx{7, 1, 4};
    const Dataset t = take(d, idx);
    REQUIRE(t.size() == 3);
    CHECK(t.labels[0] == d.labels[7]);
    CHECK(t.labels[2] == d.labels[4]);
    CHECK(l2_norm(sub(t.images[1], d.images[1])) == 0.0);
}

TEST_CASE("blob preconditions are rejected") {
    CHECK_THROWS_AS(synthetic_blobs(4, 3, 1, 0.05, 0), ValueError);
    CHECK_THROWS_AS(synthetic_blobs(1, 3, 2, 0.05, 0), ValueError);
    CHECK_THROWS_AS(synthetic_blobs(4, 3, 2, 0.0, 0), ValueError);
}
