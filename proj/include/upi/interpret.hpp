#pragma once

#include <optional>
#include <string>

#include "upi/network.hpp"

namespace upi {

// A feature-importance map over one input. values always carries l1 norm 1;
// label is the class the map explains.
struct InterpretationMap {
    Tensor values;
    std::size_t label = 0;
};

struct IGConfig {
    std::size_t steps = 10;
    // Path reference point x0; empty means the all-zeros input.
    Tensor reference;
};

// l1-normalize or reject: vectors with ||t||_1 < 1e-12 have no direction to
// preserve and every caller treats them as a skippable sample.
Tensor l1_normalized(const Tensor& t, const char* context);

// Normalized gradient of the predicted-class score at x. When label is
// absent it is recomputed at x, which is the map's own convention; passing
// a label freezes the explained class instead.
InterpretationMap simple_gradient_map(const Network& net, const Tensor& x,
                                      std::optional<std::size_t> label = std::nullopt);

// Path-integrated attribution between cfg.reference and x before any
// normalization: (dx/M) . sum_{k=1..M} grad S_c(x0 + (k/M) dx). Its entry
// sum approaches S_c(x) - S_c(x0) as M grows.
Tensor integrated_gradients_raw(const Network& net, const Tensor& x, const IGConfig& cfg,
                                std::optional<std::size_t> label = std::nullopt);

InterpretationMap integrated_gradients_map(const Network& net, const Tensor& x,
                                           const IGConfig& cfg,
                                           std::optional<std::size_t> label = std::nullopt);

// |sum(raw) - (S_c(x) - S_c(x0))| / max(|S_c(x) - S_c(x0)|, 1e-12).
double completeness_gap(const Network& net, const Tensor& x, const IGConfig& cfg,
                        std::optional<std::size_t> label = std::nullopt);

enum class InterpretationMethod { simple_gradient, integrated_gradients };

InterpretationMethod interpretation_method_from_string(const std::string& name);
std::string to_string(InterpretationMethod method);

// Bundles a method choice with its configuration so attacks and evaluation
// can be written once over either map.
struct Interpreter {
    InterpretationMethod method = InterpretationMethod::simple_gradient;
    IGConfig ig;

    InterpretationMap map(const Network& net, const Tensor& x,
                          std::optional<std::size_t> label = std::nullopt) const;
};

}  // namespace upi
