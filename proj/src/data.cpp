#include "upi/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "upi/rng.hpp"

namespace upi {

std::size_t IdxArray::count() const {
    std::size_t n = dims.empty() ? 0 : 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> compressed) {
    z_stream zs{};
    // 15 window bits, +16 selects the gzip container.
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("inflateInit2 failed");
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> buf(1 << 16);
    zs.next_in = const_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw TruncatedStreamError("gzip: truncated stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on " + path.string());
    return bytes;
}

IdxArray parse_idx_raw(std::span<const std::uint8_t> raw) {
    std::vector<std::uint8_t> inflated;
    if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
        inflated = gunzip(raw);
        raw = inflated;
    }
    if (raw.size() < 4) throw TruncatedStreamError("idx: shorter than the magic word");
    const std::uint32_t magic = (std::uint32_t(raw[0]) << 24) | (std::uint32_t(raw[1]) << 16) |
                                (std::uint32_t(raw[2]) << 8) | std::uint32_t(raw[3]);
    std::size_t nd = 0;
    if (magic == 0x00000801u) {
        nd = 1;
    } else if (magic == 0x00000803u) {
        nd = 3;
    } else if (raw[0] == 0 && raw[1] == 0 && raw[2] != 0x08 && (raw[3] == 1 || raw[3] == 3)) {
        // A plausible IDX frame whose only defect is the element type byte.
        throw UnsupportedElementError("idx: element type " + std::to_string(raw[2]) +
                                      ", only unsigned byte (0x08) is supported");
    } else {
        throw BadMagicError("idx: unknown magic word");
    }
    if (raw.size() < 4 + 4 * nd) throw TruncatedStreamError("idx: truncated dimension header");

    IdxArray a;
    a.dims.resize(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::size_t o = 4 + 4 * i;
        a.dims[i] = (std::size_t(raw[o]) << 24) | (std::size_t(raw[o + 1]) << 16) |
                    (std::size_t(raw[o + 2]) << 8) | std::size_t(raw[o + 3]);
        if (a.dims[i] == 0) throw ParseError("idx: zero extent in dimension header");
    }
    const std::size_t expect = a.count();
    const std::size_t have = raw.size() - 4 - 4 * nd;
    if (have < expect) throw TruncatedStreamError("idx: payload shorter than header claims");
    if (have > expect) throw ParseError("idx: trailing bytes after payload");
    a.bytes.assign(raw.begin() + 4 + 4 * nd, raw.end());
    return a;
}

Tensor parse_idx(std::span<const std::uint8_t> raw) {
    const IdxArray a = parse_idx_raw(raw);
    Tensor t(Shape(a.dims));
    for (std::size_t i = 0; i < a.bytes.size(); ++i) t[i] = static_cast<double>(a.bytes[i]);
    return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
    if (a.dims.size() != 1 && a.dims.size() != 3) {
        throw ValueError("serialize_idx: only rank-1 and rank-3 arrays have a magic word");
    }
    for (std::size_t d : a.dims) {
        if (d == 0) throw ValueError("serialize_idx: zero extent");
        if (d > 0xFFFFFFFFull) throw ValueError("serialize_idx: extent exceeds 32 bits");
    }
    if (a.bytes.size() != a.count()) {
        throw ValueError("serialize_idx: payload size does not match dimensions");
    }
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * a.dims.size() + a.bytes.size());
    out.push_back(0);
    out.push_back(0);
    out.push_back(0x08);
    out.push_back(static_cast<std::uint8_t>(a.dims.size()));
    for (std::size_t d : a.dims) {
        out.push_back(static_cast<std::uint8_t>((d >> 24) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((d >> 16) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((d >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>(d & 0xFF));
    }
    out.insert(out.end(), a.bytes.begin(), a.bytes.end());
    return out;
}

Tensor scale_pixels(const Tensor& raw) {
    Tensor out(raw.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!(raw[i] >= 0.0 && raw[i] <= 255.0)) {
            throw ValueError("scale_pixels: value " + std::to_string(raw[i]) +
                             " outside [0, 255]");
        }
        out[i] = raw[i] / 256.0;
    }
    return out;
}

void Dataset::validate() const {
    if (images.size() != labels.size()) {
        throw ValueError("dataset: image and label counts differ");
    }
    if (class_count < 2) throw ValueError("dataset: needs at least two classes");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] >= class_count) {
            throw ValueError("dataset: label " + std::to_string(labels[i]) +
                             " out of range at index " + std::to_string(i));
        }
        if (images[i].shape() != images[0].shape()) {
            throw ShapeError("dataset: mixed image shapes");
        }
        for (double v : images[i].data()) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ValueError("dataset: pixel outside [0, 1] at index " +
                                 std::to_string(i));
            }
        }
    }
}

Dataset make_image_dataset(const IdxArray& images, const IdxArray& labels,
                           std::size_t class_count) {
    if (images.dims.size() != 3) {
        throw ShapeError("image idx: expected 3 dimensions, got " +
                         std::to_string(images.dims.size()));
    }
    if (labels.dims.size() != 1) {
        throw ShapeError("label idx: expected 1 dimension, got " +
                         std::to_string(labels.dims.size()));
    }
    if (images.dims[0] != labels.dims[0]) {
        throw ShapeError("idx: image count " + std::to_string(images.dims[0]) +
                         " != label count " + std::to_string(labels.dims[0]));
    }
    const std::size_t n = images.dims[0];
    const std::size_t h = images.dims[1];
    const std::size_t w = images.dims[2];
    Dataset d;
    d.class_count = class_count;
    d.images.reserve(n);
    d.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img(Shape{h, w});
        const std::uint8_t* src = images.bytes.data() + i * h * w;
        for (std::size_t p = 0; p < h * w; ++p) img[p] = static_cast<double>(src[p]) / 256.0;
        d.images.push_back(std::move(img));
        d.labels.push_back(labels.bytes[i]);
    }
    d.validate();
    return d;
}

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path,
                         std::size_t class_count) {
    const IdxArray images = parse_idx_raw(read_file_bytes(images_path));
    const IdxArray labels = parse_idx_raw(read_file_bytes(labels_path));
    return make_image_dataset(images, labels, class_count);
}

std::vector<std::size_t> stratified_indices(const std::vector<std::size_t>& labels,
                                            std::size_t class_count, std::size_t count,
                                            std::uint64_t seed) {
    if (class_count == 0) throw ValueError("stratified_indices: zero classes");
    if (count > labels.size()) throw ValueError("stratified_indices: count exceeds dataset");
    std::vector<std::vector<std::size_t>> by_class(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) throw ValueError("stratified_indices: label out of range");
        by_class[labels[i]].push_back(i);
    }
    // count/class_count per class, the remainder spread one each over the
    // lowest class indices, so per-class counts differ by at most one.
    std::vector<std::size_t> want(class_count, count / class_count);
    for (std::size_t c = 0; c < count % class_count; ++c) want[c] += 1;
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (std::size_t c = 0; c < class_count; ++c) {
        if (by_class[c].size() < want[c]) {
            throw ValueError("stratified_indices: class " + std::to_string(c) + " has only " +
                             std::to_string(by_class[c].size()) + " examples, need " +
                             std::to_string(want[c]));
        }
        Rng rng(Rng::derive(seed, c));
        rng.shuffle(by_class[c]);
        picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + want[c]);
    }
    Rng mix(Rng::derive(seed, class_count));
    mix.shuffle(picked);
    return picked;
}

Dataset take(const Dataset& d, std::span<const std::size_t> indices) {
    Dataset out;
    out.class_count = d.class_count;
    out.images.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= d.size()) throw ValueError("take: index out of range");
        out.images.push_back(d.images[i]);
        out.labels.push_back(d.labels[i]);
    }
    return out;
}

Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed) {
    return take(d, stratified_indices(d.labels, d.class_count, count, seed));
}

Dataset synthetic_blobs(std::size_t n, std::size_t d, std::size_t k, double spread,
                        std::uint64_t seed) {
    if (k < 2) throw ValueError("synthetic_blobs: needs at least two classes");
    if (n < k) throw ValueError("synthetic_blobs: fewer samples than classes");
    if (d == 0) throw ValueError("synthetic_blobs: zero dimensions");
    if (!(spread > 0.0)) throw ValueError("synthetic_blobs: spread must be > 0");

    Rng rng(Rng::derive(seed, 0));
    std::vector<Tensor> means;
    means.reserve(k);
    for (std::size_t c = 0; c < k; ++c) means.push_back(rng.normal_tensor(Shape{d}, 1.0));
    // Rescale so the closest pair of means sits at distance exactly 1;
    // spread is then the within-cluster sigma relative to unit separation.
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            min_sep = std::min(min_sep, l2_norm(sub(means[a], means[b])));
        }
    }
    if (!(min_sep > 1e-12)) throw ValueError("synthetic_blobs: coincident seeded means");
    for (auto& m : means) m = scaled(m, 1.0 / min_sep);

    Rng noise(Rng::derive(seed, 1));
    Dataset out;
    out.class_count = k;
    out.images.reserve(n);
    out.labels.reserve(n);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % k;
        Tensor x = add(means[label], noise.normal_tensor(Shape{d}, spread));
        for (double v : x.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out.images.push_back(std::move(x));
        out.labels.push_back(label);
    }
    // One affine map for the whole cloud keeps separation/spread ratios.
    const double span = hi - lo;
    for (auto& x : out.images) {
        for (double& v : x.data()) v = span > 1e-12 ? (v - lo) / span : 0.5;
    }
    out.validate();
    return out;
}

}  // namespace upi
