#include "upi/serialize.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace upi {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failed: " + path);
    return out;
}

namespace {

constexpr const char* kFormatTag = "upi-perturbation";
constexpr int kFormatVersion = 1;

}  // namespace

std::string perturbation_to_json(const Perturbation& p, const std::string& algorithm,
                                 std::uint64_t seed) {
    nlohmann::json j;
    j["format"] = kFormatTag;
    j["version"] = kFormatVersion;
    j["algorithm"] = algorithm;
    j["seed"] = seed;
    j["budget"] = {{"epsilon", p.budget().epsilon}, {"norm", to_string(p.budget().norm)}};
    j["shape"] = p.delta().shape().extents();
    j["values"] = std::vector<double>(p.delta().data().begin(), p.delta().data().end());
    return j.dump(2) + "\n";
}

PerturbationArtifact perturbation_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("perturbation artifact: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormatTag) {
            throw ParseError("perturbation artifact: unrecognized format tag");
        }
        if (j.at("version").get<int>() != kFormatVersion) {
            throw ParseError("perturbation artifact: unsupported version");
        }
        PerturbationBudget budget;
        budget.epsilon = j.at("budget").at("epsilon").get<double>();
        budget.norm = norm_kind_from_string(j.at("budget").at("norm").get<std::string>());
        const Shape shape(j.at("shape").get<std::vector<std::size_t>>());
        auto values = j.at("values").get<std::vector<double>>();
        if (values.size() != shape.count()) {
            throw ParseError("perturbation artifact: value count does not match shape");
        }
        Tensor delta(shape, std::move(values));
        PerturbationArtifact out{Perturbation(std::move(delta), budget),
                                 j.at("algorithm").get<std::string>(),
                                 j.at("seed").get<std::uint64_t>()};
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("perturbation artifact: ") + e.what());
    }
}

void save_perturbation(const Perturbation& p, const std::string& algorithm,
                       std::uint64_t seed, const std::string& path) {
    write_text_file(path, perturbation_to_json(p, algorithm, seed));
}

PerturbationArtifact load_perturbation(const std::string& path) {
    return perturbation_from_json(read_text_file(path));
}

}  // namespace upi
