#pragma once

#include <cstdint>
#include <string>

#include "upi/attack.hpp"

namespace upi {

// Shortest exact decimal for CSV cells: %.17g round-trips a double.
std::string format_g17(double v);

// Quotes a CSV field only when it needs it (comma, quote, newline).
std::string csv_field(const std::string& s);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

struct PerturbationArtifact {
    Perturbation perturbation;
    std::string algorithm;
    std::uint64_t seed = 0;
};

// JSON artifact holding the vector, its budget, and where it came from.
// Values are written with full round-trip precision; load rebuilds the
// Perturbation, re-checking the budget.
void save_perturbation(const Perturbation& p, const std::string& algorithm,
                       std::uint64_t seed, const std::string& path);
PerturbationArtifact load_perturbation(const std::string& path);

std::string perturbation_to_json(const Perturbation& p, const std::string& algorithm,
                                 std::uint64_t seed);
PerturbationArtifact perturbation_from_json(const std::string& text);

}  // namespace upi
