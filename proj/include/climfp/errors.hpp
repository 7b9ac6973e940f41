#pragma once

#include <stdexcept>
#include <string>

namespace climfp {

enum class errc {
    insufficient_replicates,
    invalid_input,
    degenerate_ensemble,
    invalid_eigenvalue,
    bandwidth_too_large,
    invalid_bandwidth_exponent,
    layout_mismatch,
    degenerate_gridbox,
    singular_design,
    singular_weight,
    no_finite_solution,
    degenerate_ties,
    invalid_fit,
    calibration_failed,
    experiment_unstable,
};

const char* errc_name(errc code);

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const { return code_; }

private:
    errc code_;
};

// CLI convention: 2 for input/validation problems, 3 for numerical failures.
int exit_code_for(errc code);

}  // namespace climfp
