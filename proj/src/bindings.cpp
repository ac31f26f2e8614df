#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "camo/gradcheck.hpp"
#include "camo/harness.hpp"

namespace py = pybind11;
using namespace camo;

namespace {

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2); }

}  // namespace

PYBIND11_MODULE(_camo, m) {
    m.doc() = "probe-evasion organism: core operations";
    m.attr("__version__") = kToolVersion;

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def(
        "auroc",
        [](const std::vector<double>& pos, const std::vector<double>& neg) {
            return auroc(pos, neg);
        },
        py::arg("positives"), py::arg("negatives"),
        "Rank-based AUROC with tie handling; exact, O(n log n).");
    m.def("calibrate_threshold", &calibrate_threshold, py::arg("negative_scores"),
          py::arg("fpr_budget"),
          "Largest threshold whose empirical FPR on the given negatives stays within budget.");
    m.def("format_double", &format_double, py::arg("value"),
          "Shortest decimal string that round-trips to the same double.");
    m.def(
        "pearson",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            PearsonResult r = pearson(x, y);
            return py::make_tuple(r.r, r.p_value, r.n);
        },
        py::arg("x"), py::arg("y"), "Pearson r with two-sided p-value; returns (r, p, n).");

    m.def(
        "gradcheck",
        []() {
            GradcheckReport rep = run_gradcheck_suite();
            py::dict out;
            out["worst"] = rep.worst;
            out["seconds"] = rep.seconds;
            out["pass"] = rep.pass();
            py::dict entries;
            for (const auto& e : rep.entries) entries[e.name.c_str()] = e.max_rel_err;
            out["entries"] = entries;
            return out;
        },
        "Analytic gradients vs central differences over every op and a full model loss.");

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_static("load_file", &ExperimentConfig::load_file, py::arg("path"))
        .def_static(
            "from_json",
            [](const std::string& text) {
                return ExperimentConfig::from_json(nlohmann::json::parse(text));
            },
            py::arg("text"))
        .def("to_json", [](const ExperimentConfig& c) { return dump_json(c.to_json()); })
        .def("config_hash", &ExperimentConfig::config_hash)
        .def("validate", &ExperimentConfig::validate)
        .def("override_seed", &ExperimentConfig::override_seed, py::arg("seed"))
        .def_property(
            "out_root",
            [](const ExperimentConfig& c) { return c.out_root.string(); },
            [](ExperimentConfig& c, const std::string& p) { c.out_root = p; })
        .def("__repr__", [](const ExperimentConfig& c) {
            return "<ExperimentConfig " + c.config_hash().substr(0, 12) + ">";
        });

    py::class_<StageRecord>(m, "StageRecord")
        .def_readonly("name", &StageRecord::name)
        .def_readonly("cached", &StageRecord::cached)
        .def_readonly("duration_s", &StageRecord::duration_s)
        .def_readonly("inputs", &StageRecord::inputs)
        .def_readonly("outputs", &StageRecord::outputs)
        .def("to_json", [](const StageRecord& r) { return dump_json(r.to_json()); });

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init<ExperimentConfig>(), py::arg("config"))
        .def("run_dir", [](const Pipeline& p) { return p.run_dir().string(); })
        .def("gen_data", &Pipeline::gen_data)
        .def("train_lm", &Pipeline::train_lm)
        .def("train_probes", &Pipeline::train_probes)
        .def("finetune", &Pipeline::tune_organism)
        .def("train_monitors", &Pipeline::train_monitors)
        .def("evaluate", &Pipeline::evaluate_stage)
        .def("analyze", &Pipeline::analyze_stage)
        .def("report", &Pipeline::report_stage)
        .def("run_all",
             [](Pipeline& p) {
                 RunManifest man = p.run_all();
                 return dump_json(man.to_json());
             })
        .def("fpr_audit", [](Pipeline& p) { return dump_json(p.fpr_audit()); })
        .def("report_json", [](const Pipeline& p) { return dump_json(p.report_json()); })
        .def("analysis_json", [](const Pipeline& p) { return dump_json(p.analysis_json()); })
        .def("designated_concept", &Pipeline::designated_concept);

    m.def(
        "run_acceptance_criteria",
        [](const ExperimentConfig& cfg, const ExperimentConfig& tiny) {
            std::vector<CriterionResult> res = run_acceptance_criteria(cfg, tiny);
            py::list out;
            for (const auto& r : res) {
                py::dict d;
                d["id"] = r.id;
                d["name"] = r.name;
                d["pass"] = r.pass;
                d["detail"] = r.detail;
                out.append(d);
            }
            return out;
        },
        py::arg("config"), py::arg("tiny_config"));
}
