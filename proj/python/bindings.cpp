#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "manetir/adversary.hpp"
#include "manetir/error.hpp"
#include "manetir/esom.hpp"
#include "manetir/gka_group.hpp"
#include "manetir/sim.hpp"
#include "manetir/topologies.hpp"

namespace py = pybind11;
using namespace manetir;

namespace {

FeatureVector to_features(const std::vector<double>& row) {
  if (row.size() != kFeatureCount) throw py::value_error("each row needs 7 features");
  FeatureVector x{};
  std::copy(row.begin(), row.end(), x.begin());
  return x;
}

std::vector<FeatureVector> to_matrix(const std::vector<std::vector<double>>& rows) {
  std::vector<FeatureVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(to_features(r));
  return out;
}

TrafficClass parse_class(const std::string& s) {
  if (s == "normal") return TrafficClass::Normal;
  if (s == "attack") return TrafficClass::Attack;
  throw py::value_error("labels are 'normal' or 'attack', got '" + s + "'");
}

py::bytes to_py(const Bytes& b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

Bytes from_py(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::dict rates_dict(const Rates& r) {
  py::dict d;
  d["detection_rate"] = r.detection_rate ? py::cast(*r.detection_rate) : py::none();
  d["false_alarm_rate"] = r.false_alarm_rate ? py::cast(*r.false_alarm_rate) : py::none();
  d["attacks"] = r.attacks;
  d["normals"] = r.normals;
  d["detected"] = r.detected;
  d["false_alarms"] = r.false_alarms;
  d["unclassified"] = r.unclassified;
  return d;
}

/// Keys of the layered topology formed with `seed`: GK, the share ledger,
/// the level-1 local keys and the tree roles, all as hex strings.
py::dict layered_session(std::uint64_t seed) {
  const Graph graph = topologies::layered();
  std::set<NodeId> members;
  std::vector<NodeId> universe;
  for (std::uint32_t v = 1; v <= 18; ++v) {
    members.insert(NodeId{v});
    universe.push_back(NodeId{v});
  }
  Group g(GroupConfig{}, universe, seed);
  const auto keys = g.form(build_tree(topologies::kLayeredRoot, members, graph, topologies::kLayeredChecker));
  py::dict shares, local, held;
  for (const auto& [n, s] : g.share_ledger()) shares[py::int_(n.value)] = s.hex();
  for (const auto& [n, k] : keys.local_keys) local[py::int_(n.value)] = k.hex();
  for (NodeId p : g.participants()) held[py::int_(p.value)] = g.node(p).session_key->hex();
  py::dict d;
  d["global_key"] = keys.global_key.hex();
  d["shares"] = shares;
  d["local_keys"] = local;
  d["held"] = held;
  d["root"] = g.tree().root().value;
  d["checker"] = g.tree().checker().value;
  d["epoch"] = keys.epoch;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Group key agreement, eSOM detection and MANET scenario runs";

  py::register_exception<Error>(m, "ManetirError", PyExc_RuntimeError);

  m.attr("FEATURE_NAMES") = [] {
    std::vector<std::string> v;
    for (auto n : kFeatureNames) v.emplace_back(n);
    return v;
  }();

  m.def(
      "make_two_class",
      [](std::size_t n_per_class, double effect_sigma, std::uint64_t seed) {
        Rng rng(seed);
        const Dataset d = make_two_class(n_per_class, effect_sigma, rng);
        std::vector<std::vector<double>> x;
        std::vector<std::string> y;
        for (std::size_t i = 0; i < d.size(); ++i) {
          x.emplace_back(d.x[i].begin(), d.x[i].end());
          y.emplace_back(name_of(d.y[i]));
        }
        return py::make_tuple(x, y);
      },
      py::arg("n_per_class"), py::arg("effect_sigma"), py::arg("seed"),
      "Synthetic dataset as (rows, labels), classes interleaved.");

  py::class_<EsomModel>(m, "Model")
      .def("classify",
           [](const EsomModel& self, const std::vector<std::vector<double>>& rows) {
             std::vector<std::string> out;
             for (Verdict v : self.classify_all(to_matrix(rows))) out.emplace_back(name_of(v));
             return out;
           })
      .def("umatrix", [](const EsomModel& self) { return compute_umatrix(self.grid); })
      .def("to_bytes", [](const EsomModel& self) { return to_py(serialize_model(self)); })
      .def_static("from_bytes", [](const py::bytes& b) { return deserialize_model(from_py(b)); })
      .def("save", [](const EsomModel& self, const std::filesystem::path& p) { save_model(self, p); })
      .def_property_readonly("rows", [](const EsomModel& self) { return self.grid.rows; })
      .def_property_readonly("cols", [](const EsomModel& self) { return self.grid.cols; })
      .def_property_readonly("hill_threshold", [](const EsomModel& self) { return self.labeling.hill_threshold; });

  m.def(
      "train",
      [](const std::vector<std::vector<double>>& rows, const std::vector<std::string>& labels, std::uint64_t seed,
         std::size_t grid_rows, std::size_t grid_cols, std::size_t epochs) {
        if (rows.size() != labels.size()) throw py::value_error("rows and labels differ in length");
        Dataset d;
        d.x = to_matrix(rows);
        for (const auto& l : labels) d.y.push_back(parse_class(l));
        SomConfig cfg;
        cfg.rows = grid_rows;
        cfg.cols = grid_cols;
        cfg.epochs = epochs;
        py::gil_scoped_release release;
        return train_model(d, cfg, seed);
      },
      py::arg("rows"), py::arg("labels"), py::arg("seed"), py::arg("grid_rows") = 50, py::arg("grid_cols") = 80,
      py::arg("epochs") = 20);

  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); });

  m.def(
      "evaluate",
      [](const std::vector<std::string>& verdicts, const std::vector<std::string>& truth) {
        std::vector<Verdict> v;
        std::vector<TrafficClass> t;
        for (const auto& s : verdicts) v.push_back(parse_verdict(s));
        for (const auto& s : truth) t.push_back(parse_class(s));
        return rates_dict(evaluate(v, t));
      },
      py::arg("verdicts"), py::arg("truth"));

  m.def("layered_session", &layered_session, py::arg("seed"));

  m.def(
      "encode_message",
      [](std::uint8_t kind, std::uint32_t sender, std::uint32_t receiver, const std::vector<std::uint32_t>& ids,
         const py::bytes& payload) {
        ProtocolMessage msg;
        msg.kind = static_cast<MessageKind>(kind);
        msg.sender = NodeId{sender};
        msg.receiver = NodeId{receiver};
        for (auto i : ids) msg.ids.push_back(NodeId{i});
        msg.payload = from_py(payload);
        // Round-trip through the decoder so unknown kinds are rejected.
        return to_py(encode(decode(encode(msg))));
      },
      py::arg("kind"), py::arg("sender"), py::arg("receiver"), py::arg("ids"), py::arg("payload"));

  m.def("decode_message", [](const py::bytes& wire) {
    const ProtocolMessage msg = decode(from_py(wire));
    std::vector<std::uint32_t> ids;
    for (NodeId n : msg.ids) ids.push_back(n.value);
    py::dict d;
    d["kind"] = static_cast<int>(msg.kind);
    d["sender"] = msg.sender.value;
    d["receiver"] = msg.receiver.value;
    d["ids"] = ids;
    d["payload"] = to_py(msg.payload);
    return d;
  });

  m.def(
      "simulate",
      [](const std::string& config_text, std::uint64_t seed) {
        const ScenarioConfig cfg = parse_scenario(config_text, "config");
        MetricsReport r;
        {
          py::gil_scoped_release release;
          r = run_scenario(cfg, seed);
        }
        py::dict d;
        d["metrics"] = r.metrics_csv();
        d["trace"] = r.trace;
        d["trees"] = r.trees;
        return d;
      },
      py::arg("config_text"), py::arg("seed"), "Run a scenario from config text; returns the three output files.");

  m.def(
      "attack_suite",
      [](std::uint64_t seed, std::size_t epochs, std::size_t trials, bool verify_nonces) {
        AttackSuiteConfig cfg;
        cfg.seed = seed;
        cfg.transcript_epochs = epochs;
        cfg.leaver_trials = cfg.joiner_trials = trials;
        cfg.group.options.verify_nonces = verify_nonces;
        AttackSuiteReport r;
        {
          py::gil_scoped_release release;
          r = run_attack_suite(cfg);
        }
        py::list out;
        for (const auto& g : r.goals) {
          py::dict d;
          d["goal"] = g.goal;
          d["pass"] = g.pass;
          d["trials"] = g.trials;
          d["failures"] = g.failures;
          d["detail"] = g.detail;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 1, py::arg("epochs") = 1000, py::arg("trials") = 1000, py::arg("verify_nonces") = true);
}
