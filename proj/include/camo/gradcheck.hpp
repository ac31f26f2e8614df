#pragma once

#include <string>
#include <vector>

namespace camo {

struct GradcheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double worst = 0.0;
    double seconds = 0.0;

    bool pass(double tol = 1e-4) const { return worst < tol; }
};

// Analytic gradients vs central finite differences (h = 1e-5) over every
// differentiable op and a full tiny-model loss (forward + trace + probe).
GradcheckReport run_gradcheck_suite();

}  // namespace camo
