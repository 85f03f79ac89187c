#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "teleplan/cli.hpp"
#include "teleplan/coverage.hpp"
#include "teleplan/error.hpp"
#include "teleplan/evaluation.hpp"
#include "teleplan/policy.hpp"
#include "teleplan/reward.hpp"
#include "teleplan/scenario.hpp"
#include "teleplan/trainer.hpp"

namespace py = pybind11;
using namespace teleplan;

namespace {

py::dict breakdown_dict(const RewardBreakdown& b) {
  py::dict d;
  d["t"] = b.terms.t;
  d["u"] = b.terms.u;
  d["m"] = b.terms.m;
  d["e"] = b.terms.e;
  d["k"] = b.terms.k;
  d["stage"] = static_cast<int>(b.stage);
  d["r"] = b.r;
  d["llm_score"] = b.llm_score;
  d["combined"] = b.combined;
  return d;
}

py::list history_list(const TrainHistory& h) {
  py::list out;
  for (const auto& r : h.records) {
    py::dict d;
    d["iter"] = r.iter;
    d["stage"] = static_cast<int>(r.stage);
    d["mean_reward"] = r.mean_reward;
    d["max_reward"] = r.max_reward;
    d["objective"] = r.objective;
    d["mean_kl"] = r.mean_kl;
    d["grad_norm"] = r.grad_norm;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Staged-reward group policy optimization for base-station site selection";

  auto base = py::register_exception<Error>(m, "TeleplanError", PyExc_RuntimeError);
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<TrainingAborted>(m, "TrainingAborted", base.ptr());

  // -- scenarios -------------------------------------------------------------
  py::class_<Scenario>(m, "Scenario")
      .def_property_readonly("size", &Scenario::size)
      .def_readwrite("select_count", &Scenario::select_count)
      .def_property_readonly("ids",
                             [](const Scenario& s) {
                               std::vector<std::string> ids;
                               for (const auto& site : s.sites) ids.push_back(site.id);
                               return ids;
                             })
      .def_property_readonly("positions",
                             [](const Scenario& s) {
                               Eigen::MatrixXd p(static_cast<Eigen::Index>(s.size()), 2);
                               for (std::size_t i = 0; i < s.size(); ++i) {
                                 p(static_cast<Eigen::Index>(i), 0) = s.sites[i].position.x;
                                 p(static_cast<Eigen::Index>(i), 1) = s.sites[i].position.y;
                               }
                               return p;
                             })
      .def_readwrite("planted_optimum", &Scenario::planted_optimum)
      .def_readwrite("actual_built", &Scenario::actual_built)
      .def("reference_selection", &Scenario::reference_selection)
      .def("to_csv", &scenario_to_csv)
      .def("save", [](const Scenario& s, const std::string& path) { save_scenario(s, path); })
      .def("validate", &validate_scenario);

  m.def("generate_scenario",
        [](std::uint64_t seed, std::size_t n, std::size_t k, const std::string& profile) {
          return generate_scenario(seed, n, k, parse_profile(profile));
        },
        py::arg("seed"), py::arg("n"), py::arg("k"), py::arg("profile") = "urban-cluster");
  m.def("load_scenario",
        [](const std::string& path, std::size_t k) { return load_scenario(path, {}, k); },
        py::arg("path"), py::arg("select_count") = 0);
  m.def("parse_scenario_csv",
        [](const std::string& text, std::size_t k) { return parse_scenario_csv(text, {}, k); },
        py::arg("text"), py::arg("select_count") = 0);

  py::class_<NormalizedScenario>(m, "NormalizedScenario")
      .def_readonly("scenario", &NormalizedScenario::scenario)
      .def_readonly("t_hat", &NormalizedScenario::t_hat)
      .def_readonly("u_hat", &NormalizedScenario::u_hat)
      .def_readonly("e_hat", &NormalizedScenario::e_hat);
  m.def("normalize_features", &normalize_features);

  // -- reward ----------------------------------------------------------------
  py::class_<RewardWeights>(m, "RewardWeights")
      .def(py::init<>())
      .def_readwrite("w_t", &RewardWeights::w_t)
      .def_readwrite("w_u", &RewardWeights::w_u)
      .def_readwrite("w_s", &RewardWeights::w_s)
      .def_readwrite("w_m", &RewardWeights::w_m)
      .def_readwrite("w_e", &RewardWeights::w_e)
      .def_readwrite("w_k", &RewardWeights::w_k)
      .def_readwrite("w1", &RewardWeights::w1)
      .def_readwrite("w2", &RewardWeights::w2)
      .def_readwrite("sigma_m", &RewardWeights::sigma_m);

  m.def("stage_reward",
        [](double t, double u, double mm, double e, double k, int stage, const RewardWeights& w) {
          return stage_reward({t, u, mm, e, k}, stage_from_int(stage), w);
        },
        py::arg("t"), py::arg("u"), py::arg("m"), py::arg("e"), py::arg("k"), py::arg("stage"),
        py::arg("weights") = RewardWeights{});
  m.def("combined_reward",
        [](double r, double llm, const RewardWeights& w) { return combined_reward(r, llm, w); },
        py::arg("r"), py::arg("llm_score"), py::arg("weights") = RewardWeights{});
  m.def("mock_complaint_score", [](const std::string& text) { return mock_complaint_score(text); });
  m.def("mock_semantic_score", [](const std::vector<std::string>& ids, const Scenario& s) {
    const auto idx = s.indices_of(ids);
    return mock_semantic_score(idx, s);
  });
  m.def("cluster_score",
        [](const std::vector<std::string>& ids, const Scenario& s, double sigma) {
          return cluster_score(std::span<const std::string>(ids), s, sigma);
        },
        py::arg("ids"), py::arg("scenario"), py::arg("sigma_m") = RewardWeights{}.sigma_m);
  m.def("evaluate_selection",
        [](const Scenario& s, const std::vector<std::string>& ids, int stage,
           const RewardWeights& w) {
          RewardModel model(normalize_features(s), w, nullptr);
          const auto idx = s.indices_of(ids);
          return breakdown_dict(model.evaluate(idx, stage_from_int(stage)));
        },
        py::arg("scenario"), py::arg("ids"), py::arg("stage") = 3,
        py::arg("weights") = RewardWeights{});

  // -- objective pieces ------------------------------------------------------
  m.def("clip_ratio", &clip_ratio, py::arg("ratio"), py::arg("epsilon") = 0.2);
  m.def("group_advantages",
        [](const std::vector<double>& r) { return group_advantages(r); });
  m.def("kl_categorical", [](const std::vector<double>& p, const std::vector<double>& q) {
    return kl_categorical(p, q);
  });

  // -- policy and training ---------------------------------------------------
  py::class_<PolicyParams>(m, "PolicyParams")
      .def_property_readonly("parameter_count", &PolicyParams::parameter_count)
      .def_property_readonly("input_dim", &PolicyParams::input_dim)
      .def_property_readonly("layer_shapes",
                             [](const PolicyParams& p) {
                               std::vector<std::pair<Eigen::Index, Eigen::Index>> s;
                               for (const auto& l : p.layers) s.emplace_back(l.weight.rows(), l.weight.cols());
                               return s;
                             })
      .def("flatten", &PolicyParams::flatten)
      .def("save", [](const PolicyParams& p, const std::string& path) { save_checkpoint(p, path); })
      .def("__eq__", &PolicyParams::operator==);
  m.def("init_policy", &init_policy, py::arg("feature_dim") = kStateDim, py::arg("seed") = 0);
  m.def("load_checkpoint", &load_checkpoint);
  m.def("forward", &forward, py::arg("params"), py::arg("states"), py::arg("mask"));
  m.def("greedy_plan", [](const PolicyParams& p, const Scenario& s) {
    RewardModel model(normalize_features(s), RewardWeights{}, nullptr);
    SelectionEnv env(model);
    return s.ids_of(greedy_decode(p, env).actions);
  });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("group_size", &TrainConfig::group_size)
      .def_readwrite("clip_epsilon", &TrainConfig::clip_epsilon)
      .def_readwrite("kl_beta", &TrainConfig::kl_beta)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_property("optimizer", [](const TrainConfig& c) { return to_string(c.optimizer); },
                    [](TrainConfig& c, const std::string& v) { c.optimizer = parse_optimizer(v); })
      .def_readwrite("stage_cap", &TrainConfig::stage_cap)
      .def_readwrite("window", &TrainConfig::window)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("total_iterations", &TrainConfig::total_iterations)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("sft_epochs", &TrainConfig::sft_epochs)
      .def_readwrite("sft_learning_rate", &TrainConfig::sft_learning_rate)
      .def_readwrite("value_learning_rate", &TrainConfig::value_learning_rate)
      .def_readwrite("threads", &TrainConfig::threads)
      .def_readwrite("weights", &TrainConfig::weights);

  m.def("train",
        [](const Scenario& s, const TrainConfig& c, const std::string& algo,
           std::optional<PolicyParams> reference) {
          TrainOptions opt;
          opt.reference = std::move(reference);
          TrainResult r;
          {
            py::gil_scoped_release release;
            if (algo == "grpo") r = train_grpo(s, c, opt);
            else if (algo == "grpo-vanilla") r = train_vanilla_grpo(s, c, opt);
            else if (algo == "ppo") r = train_ppo(s, c, opt);
            else throw PreconditionError("unknown algorithm: " + algo);
          }
          return py::make_tuple(r.params, history_list(r.history));
        },
        py::arg("scenario"), py::arg("config") = TrainConfig{}, py::arg("algo") = "grpo",
        py::arg("reference") = std::nullopt);
  m.def("sft_pretrain",
        [](const std::vector<Scenario>& scenarios, const TrainConfig& c) {
          SftResult r;
          {
            py::gil_scoped_release release;
            r = sft_pretrain(scenarios, c);
          }
          return py::make_tuple(r.params, r.epoch_loss);
        },
        py::arg("scenarios"), py::arg("config") = TrainConfig{});

  // -- coverage --------------------------------------------------------------
  py::class_<RadioConfig>(m, "RadioConfig")
      .def(py::init<>())
      .def_readwrite("tx_power_dbm", &RadioConfig::tx_power_dbm)
      .def_readwrite("max_gain_dbi", &RadioConfig::max_gain_dbi)
      .def_readwrite("azimuths_deg", &RadioConfig::azimuths_deg)
      .def_readwrite("downtilt_deg", &RadioConfig::downtilt_deg)
      .def_readwrite("antenna_height_m", &RadioConfig::antenna_height_m)
      .def_readwrite("ue_height_m", &RadioConfig::ue_height_m)
      .def_readwrite("max_attenuation_db", &RadioConfig::max_attenuation_db)
      .def_readwrite("pathloss_exponent", &RadioConfig::pathloss_exponent)
      .def_readwrite("rsrp_offset_db", &RadioConfig::rsrp_offset_db);
  m.def("pathloss", &pathloss, py::arg("distance_m"), py::arg("config") = RadioConfig{});
  m.def("antenna_gain", &antenna_gain, py::arg("phi_deg"), py::arg("psi_deg"),
        py::arg("config") = RadioConfig{});
  m.def("rsrp_grid",
        [](const std::vector<std::pair<double, double>>& sites, std::pair<double, double> origin,
           double cell, std::size_t nx, std::size_t ny, const RadioConfig& radio) {
          std::vector<Point> pts;
          for (auto [x, y] : sites) pts.push_back({x, y});
          const auto g = rsrp_grid(pts, GridSpec{{origin.first, origin.second}, cell, nx, ny}, radio);
          py::array_t<double> out({ny, nx});
          std::copy(g.rsrp_dbm.begin(), g.rsrp_dbm.end(), out.mutable_data());
          return out;
        },
        py::arg("sites"), py::arg("origin"), py::arg("cell_size_m"), py::arg("nx"), py::arg("ny"),
        py::arg("radio") = RadioConfig{});
  m.def("coverage_stats", [](const std::vector<double>& v) {
    const auto s = coverage_stats(v);
    py::dict d;
    d["frac_above_80"] = s.frac_above_80;
    d["frac_above_60"] = s.frac_above_60;
    d["min_dbm"] = s.min_dbm;
    d["mean_dbm"] = s.mean_dbm;
    return d;
  });

  // -- evaluation ------------------------------------------------------------
  m.def("overlap", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return overlap(a, b);
  });
  m.def("plan_kmeans",
        [](const Scenario& s, std::size_t k, std::uint64_t seed) {
          return plan_kmeans(normalize_features(s), k, seed);
        },
        py::arg("scenario"), py::arg("k"), py::arg("seed") = 0);
  m.def("plan_greedy", [](const Scenario& s, const RewardWeights& w) {
    MockScorer scorer;
    return plan_greedy(normalize_features(s), w, scorer);
  }, py::arg("scenario"), py::arg("weights") = RewardWeights{});

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });

  m.attr("STATE_DIM") = kStateDim;
  m.attr("__version__") = "0.1.0";
}
