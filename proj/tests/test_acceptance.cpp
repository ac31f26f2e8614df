#include <exception>
#include <iostream>

#include "camo/harness.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: test_acceptance <config.json> <tiny-config.json>\n";
        return 2;
    }
    try {
        camo::ExperimentConfig cfg = camo::ExperimentConfig::load_file(argv[1]);
        camo::ExperimentConfig tiny = camo::ExperimentConfig::load_file(argv[2]);
        std::vector<camo::CriterionResult> res = camo::run_acceptance_criteria(cfg, tiny);
        std::cout << camo::criteria_lines(res);
        const bool ok = camo::all_pass(res);
        std::cout << (ok ? "ALL CRITERIA PASS\n" : "CRITERIA FAILED\n");
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
