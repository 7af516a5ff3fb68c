#include "upi/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "upi/serialize.hpp"

namespace upi {

std::string encode_pgm(const GrayImage& img) {
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
        throw ValueError("pgm: inconsistent image dimensions");
    }
    std::string out = "P5\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

namespace {

// Reads one whitespace-delimited unsigned token, skipping # comments.
std::size_t next_pgm_token(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        throw ParseError("pgm: malformed header");
    }
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
        ++pos;
    }
    return value;
}

}  // namespace

GrayImage decode_pgm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw BadMagicError("pgm: not a P5 stream");
    }
    std::size_t pos = 2;
    GrayImage img;
    img.width = next_pgm_token(bytes, pos);
    img.height = next_pgm_token(bytes, pos);
    const std::size_t maxval = next_pgm_token(bytes, pos);
    if (maxval != 255) throw UnsupportedElementError("pgm: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw ParseError("pgm: missing separator before pixel data");
    }
    ++pos;
    const std::size_t need = img.width * img.height;
    if (bytes.size() - pos < need) throw TruncatedStreamError("pgm: truncated pixel data");
    if (bytes.size() - pos > need) throw ParseError("pgm: trailing bytes after pixel data");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
    write_text_file(path, encode_pgm(img));
}

GrayImage read_pgm(const std::string& path) { return decode_pgm(read_text_file(path)); }

namespace {

void image_extents(const Shape& shape, std::size_t& h, std::size_t& w) {
    if (shape.rank() == 2) {
        h = shape[0];
        w = shape[1];
    } else if (shape.rank() == 3 && shape[0] == 1) {
        h = shape[1];
        w = shape[2];
    } else {
        throw ShapeError("image export: expected (H,W) or (1,H,W), got " + shape.str());
    }
}

std::uint8_t round_half_up(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, r)));
}

}  // namespace

GrayImage quantize_minmax(const Tensor& t, AffineMap* out_map) {
    GrayImage img;
    image_extents(t.shape(), img.height, img.width);
    check_finite(t, "quantize_minmax");
    double lo = t[0], hi = t[0];
    for (std::size_t i = 1; i < t.size(); ++i) {
        lo = std::min(lo, t[i]);
        hi = std::max(hi, t[i]);
    }
    img.pixels.resize(t.size());
    if (hi - lo < 1e-300) {
        std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{128});
        hi = lo;
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) {
            img.pixels[i] = round_half_up(255.0 * (t[i] - lo) / (hi - lo));
        }
    }
    if (out_map != nullptr) {
        out_map->lo = lo;
        out_map->hi = hi;
    }
    return img;
}

void export_perturbation_image(const Perturbation& delta, const std::string& path) {
    AffineMap map;
    const GrayImage img = quantize_minmax(delta.delta(), &map);
    write_pgm(img, path);
    std::string sidecar = "lo " + format_g17(map.lo) + "\nhi " + format_g17(map.hi) +
                          "\nshape";
    for (const std::size_t e : delta.delta().shape().extents()) {
        sidecar += " " + std::to_string(e);
    }
    sidecar += "\n";
    write_text_file(path + ".map.txt", sidecar);
}

Tensor import_perturbation_image(const std::string& path) {
    const GrayImage img = read_pgm(path);
    const std::string sidecar = read_text_file(path + ".map.txt");

    double lo = 0.0, hi = 0.0;
    std::vector<std::size_t> extents;
    std::size_t pos = 0;
    bool have_lo = false, have_hi = false;
    while (pos < sidecar.size()) {
        std::size_t eol = sidecar.find('\n', pos);
        if (eol == std::string::npos) eol = sidecar.size();
        const std::string line = sidecar.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.rfind("lo ", 0) == 0) {
            lo = std::stod(line.substr(3));
            have_lo = true;
        } else if (line.rfind("hi ", 0) == 0) {
            hi = std::stod(line.substr(3));
            have_hi = true;
        } else if (line.rfind("shape", 0) == 0) {
            std::size_t p = 5;
            while (p < line.size()) {
                while (p < line.size() && line[p] == ' ') ++p;
                std::size_t q = p;
                while (q < line.size() && line[q] != ' ') ++q;
                if (q > p) extents.push_back(std::stoull(line.substr(p, q - p)));
                p = q;
            }
        }
    }
    if (!have_lo || !have_hi || extents.empty()) {
        throw ParseError("perturbation image: incomplete sidecar " + path + ".map.txt");
    }
    const Shape shape{std::vector<std::size_t>(extents)};
    if (shape.count() != img.pixels.size()) {
        throw ParseError("perturbation image: sidecar shape does not match pixel count");
    }
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = lo + (static_cast<double>(img.pixels[i]) / 255.0) * (hi - lo);
    }
    return out;
}

namespace {

// 3x5 glyphs for the tile labels, rows packed as 3-bit masks.
struct Glyph {
    char c;
    std::uint8_t rows[5];
};

constexpr Glyph kGlyphs[] = {
    {'I', {0b111, 0b010, 0b010, 0b010, 0b111}},
    {'N', {0b110, 0b101, 0b101, 0b101, 0b101}},
    {'P', {0b110, 0b101, 0b110, 0b100, 0b100}},
    {'U', {0b101, 0b101, 0b101, 0b101, 0b111}},
    {'T', {0b111, 0b010, 0b010, 0b010, 0b010}},
    {'M', {0b101, 0b111, 0b111, 0b101, 0b101}},
    {'A', {0b010, 0b101, 0b111, 0b101, 0b101}},
    {'D', {0b110, 0b101, 0b101, 0b101, 0b110}},
    {'+', {0b000, 0b010, 0b111, 0b010, 0b000}},
};

void draw_label(GrayImage& canvas, std::size_t top, std::size_t left,
                const std::string& text) {
    std::size_t x = left;
    for (const char c : text) {
        for (const Glyph& g : kGlyphs) {
            if (g.c != c) continue;
            for (std::size_t r = 0; r < 5; ++r) {
                for (std::size_t col = 0; col < 3; ++col) {
                    if ((g.rows[r] >> (2 - col)) & 1) {
                        const std::size_t yy = top + r, xx = x + col;
                        if (yy < canvas.height && xx < canvas.width) {
                            canvas.at(yy, xx) = 0;
                        }
                    }
                }
            }
            break;
        }
        x += 4;
    }
}

void blit(GrayImage& canvas, std::size_t top, std::size_t left, const GrayImage& tile) {
    for (std::size_t r = 0; r < tile.height; ++r) {
        for (std::size_t c = 0; c < tile.width; ++c) {
            canvas.at(top + r, left + c) = tile.at(r, c);
        }
    }
}

}  // namespace

void export_interpretation_panel(const Network& net, const Interpreter& interpreter,
                                 const Tensor& x, const Perturbation& delta,
                                 const std::string& path) {
    if (x.shape() != net.input_shape()) {
        throw ShapeError("interpretation panel: input shape mismatch");
    }
    if (delta.delta().shape() != x.shape()) {
        throw ShapeError("interpretation panel: perturbation shape mismatch");
    }
    const Tensor xp = clamp01(add(x, delta.delta()));
    const InterpretationMap clean = interpreter.map(net, x);
    const InterpretationMap perturbed = interpreter.map(net, xp);

    const auto abs_of = [](const Tensor& t) {
        Tensor out(t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::abs(t[i]);
        return out;
    };

    const GrayImage tiles[4] = {
        quantize_minmax(x),
        quantize_minmax(xp),
        quantize_minmax(abs_of(clean.values)),
        quantize_minmax(abs_of(perturbed.values)),
    };
    const char* labels[4] = {"INPUT", "INPUT+D", "MAP", "MAP+D"};

    const std::size_t th = tiles[0].height, tw = tiles[0].width;
    const std::size_t margin = 2, gap = 2, label_h = 7;
    GrayImage canvas;
    canvas.width = 2 * margin + 4 * tw + 3 * gap;
    canvas.height = 2 * margin + label_h + th;
    canvas.pixels.assign(canvas.width * canvas.height, std::uint8_t{255});

    for (std::size_t t = 0; t < 4; ++t) {
        const std::size_t left = margin + t * (tw + gap);
        draw_label(canvas, margin + 1, left, labels[t]);
        blit(canvas, margin + label_h, left, tiles[t]);
    }
    write_pgm(canvas, path);
}

}  // namespace upi
