// One PASS/FAIL line per acceptance criterion. Usage: acceptance [path/to/manetir]
// (the CLI path enables the determinism criterion; a missing path fails it).
#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <unistd.h>

#include "manetir/adversary.hpp"
#include "manetir/error.hpp"
#include "manetir/esom.hpp"
#include "manetir/gka_group.hpp"
#include "manetir/response.hpp"
#include "manetir/topologies.hpp"

namespace fs = std::filesystem;
using namespace manetir;

namespace {

NodeId N(std::uint32_t v) { return NodeId{v}; }

std::vector<NodeId> universe(std::uint32_t hi) {
  std::vector<NodeId> out;
  for (std::uint32_t v = 1; v <= hi; ++v) out.push_back(N(v));
  return out;
}

std::set<NodeId> ids(std::uint32_t lo, std::uint32_t hi) {
  std::set<NodeId> out;
  for (auto v = lo; v <= hi; ++v) out.insert(N(v));
  return out;
}

KeyTree layered_tree() {
  return build_tree(topologies::kLayeredRoot, ids(1, 18), topologies::layered(), topologies::kLayeredChecker);
}

KeyMaterial xor_of(const std::vector<KeyMaterial>& parts) { return xor_combine(parts); }

/// z oracle: XOR of every share except the checker's.
KeyMaterial subkey_oracle(const std::map<NodeId, KeyMaterial>& ledger, NodeId checker) {
  std::vector<KeyMaterial> parts;
  for (const auto& [n, s] : ledger) {
    if (n != checker) parts.push_back(s);
  }
  return xor_of(parts);
}

KeyMaterial gk_oracle(const std::map<NodeId, KeyMaterial>& ledger) {
  std::vector<KeyMaterial> parts;
  for (const auto& [n, s] : ledger) parts.push_back(s);
  return xor_of(parts);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, std::string_view title, const std::function<Outcome()>& run) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d: %s  %s (%s; %.2f s)\n", n, o.pass ? "PASS" : "FAIL", std::string(title).c_str(),
              o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

// ---- 1-4: key algebra -----------------------------------------------------

Outcome convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  Group g(GroupConfig{}, universe(18), 101);
  const SessionKeys k = g.form(layered_tree());
  const double took = seconds_since(t0);
  const auto parts = g.participants();
  std::size_t agree = 0;
  for (NodeId p : parts) agree += g.node(p).session_key == k.global_key;
  const auto ledger = g.share_ledger();
  const bool oracle = k.global_key == gk_oracle(ledger);
  return {parts.size() == 18 && agree == 18 && oracle && took < 1.0,
          std::to_string(agree) + "/" + std::to_string(parts.size()) + " parties hold GK, oracle " +
              (oracle ? "match" : "mismatch") + ", formation " + std::to_string(took) + " s"};
}

Outcome local_keys() {
  Group g(GroupConfig{}, universe(18), 102);
  g.form(layered_tree());
  const NodeId root = g.tree().root();
  const auto ledger = g.share_ledger();
  const KeyMaterial z = subkey_oracle(ledger, g.tree().checker());
  std::size_t ok = 0, total = 0;
  for (NodeId j : g.tree().children(root)) {
    if (j == g.tree().checker()) continue;
    ++total;
    const KeyMaterial lk = z ^ ledger.at(j);
    ok += g.node(root).local_keys.at(j) == lk && g.node(j).local_keys.at(root) == lk;
  }
  return {total > 0 && ok == total, std::to_string(ok) + "/" + std::to_string(total) + " level-1 links equal z ^ S_j"};
}

Outcome join_correctness() {
  const Graph graph = topologies::layered();
  Group g(GroupConfig{}, universe(19), 103);
  g.form(layered_tree());
  const auto before = g.share_ledger();
  g.join(topologies::kLayeredJoiner, graph);
  // Key path oracle: the joiner and its ancestors in the new tree.
  std::set<NodeId> path;
  for (std::optional<NodeId> n = topologies::kLayeredJoiner; n; n = g.tree().parent(*n)) path.insert(*n);
  const auto after = g.share_ledger();
  std::size_t unchanged_off_path = 0, changed_on_path = 0;
  for (const auto& [n, s] : after) {
    const bool changed = !before.contains(n) || before.at(n) != s;
    if (path.contains(n)) changed_on_path += changed;
    else unchanged_off_path += !changed;
  }
  const bool exact = g.last_refreshed() == path && changed_on_path == path.size() &&
                     unchanged_off_path == after.size() - path.size();
  const bool oracle = g.keys().global_key == gk_oracle(after);
  std::size_t agree = 0;
  for (NodeId p : g.participants()) agree += g.node(p).session_key == g.keys().global_key;
  return {exact && oracle && agree == after.size(),
          "refreshed " + std::to_string(g.last_refreshed().size()) + " = key path of " + std::to_string(path.size()) +
              ", GK oracle " + (oracle ? "match" : "mismatch") + ", " + std::to_string(agree) + "/" +
              std::to_string(after.size()) + " agree"};
}

Outcome rekey_algebra() {
  Group g(GroupConfig{}, universe(18), 104);
  g.form(layered_tree());
  Rng rng(105);
  const auto level1 = g.tree().children(g.tree().root());
  std::vector<NodeId> members;
  for (NodeId j : level1) {
    if (j != g.tree().checker()) members.push_back(j);
  }
  std::size_t gk_ok = 0, lk_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const KeyMaterial old_gk = g.keys().global_key;
    const KeyMaterial s_ch = KeyMaterial::random(rng, 16);
    gk_ok += (g.global_rekey(s_ch).global_key ^ old_gk) == s_ch;

    const NodeId j = members[rng.below(members.size())];
    const KeyMaterial old_lk = g.keys().local_keys.at(j);
    const KeyMaterial s_j = KeyMaterial::random(rng, 16);
    lk_ok += (g.local_rekey(j, s_j) ^ old_lk) == s_j;
  }
  return {gk_ok == 100 && lk_ok == 100,
          "GK " + std::to_string(gk_ok) + "/100, LK " + std::to_string(lk_ok) + "/100"};
}

// ---- 5: security goals ----------------------------------------------------

Outcome security_goals() {
  AttackSuiteConfig cfg;
  cfg.seed = 1;
  const auto r = run_attack_suite(cfg);
  std::string detail;
  for (const auto& g : r.goals) {
    if (!detail.empty()) detail += ", ";
    detail += g.goal + " " + std::to_string(g.trials - g.failures) + "/" + std::to_string(g.trials);
  }
  const auto& goals = r.goals;
  auto trials_of = [&](std::string_view name) -> std::size_t {
    for (const auto& g : goals) {
      if (g.goal == name) return g.trials;
    }
    return 0;
  };
  const bool sized = trials_of("key_secrecy") >= 1000 && trials_of("replay_resistance") >= 100 &&
                     trials_of("forward_secrecy") >= 1000 && trials_of("backward_secrecy") >= 1000;
  return {r.all_pass() && sized && r.seconds < 60.0, detail};
}

// ---- 6-7: response --------------------------------------------------------

struct Net {
  Graph graph;
  Group group;
  ResponseEngine engine;

  Net(Graph g, NodeId root, std::uint64_t seed)
      : graph(std::move(g)),
        group(GroupConfig{}, graph.nodes(), seed),
        engine(graph, form(group, graph, root), seed) {}

  static ResponseKeys form(Group& group, const Graph& graph, NodeId root) {
    const auto v = graph.nodes();
    group.form(build_tree(root, {v.begin(), v.end()}, graph, N(7)));
    return ResponseKeys::from_group(group);
  }
};

void feed(ResponseEngine& e, NodeId n, std::size_t attacks, std::size_t normals) {
  for (std::size_t i = 0; i < normals; ++i) e.observe(n, Verdict::Normal);
  for (std::size_t i = 0; i < attacks; ++i) e.observe(n, Verdict::Attack);
}

Outcome global_trigger() {
  auto map = [](std::uint32_t a) { return SecurityMap{N(1), 1, 30, a, {}}; };
  const bool seventy = check_global_trigger(map(21));
  const bool two_thirds = check_global_trigger(map(20));
  const bool sixty = check_global_trigger(map(18));

  Net net(topologies::three_clusters(), N(3), 12);
  auto& e = net.engine;
  const NodeId victim = topologies::kClusterVictim;
  feed(e, victim, 21, 9);
  const auto out = e.global_alarm(victim);
  // Every table: the victim is no next hop. Receivers: not even a destination.
  std::size_t referencing = 0;
  for (NodeId n : e.nodes()) {
    if (n == victim) continue;
    const auto& t = e.routes(n);
    const bool via = std::any_of(t.next_hop.begin(), t.next_hop.end(), [&](const auto& kv) { return kv.second == victim; });
    referencing += via || (out.accepted.contains(n) && t.references(victim));
  }
  return {seventy && !two_thirds && !sixty && !out.accepted.empty() && referencing == 0,
          std::string("0.70 ") + (seventy ? "fires" : "silent") + ", 2/3 " + (two_thirds ? "fires" : "silent") +
              ", 0.60 " + (sixty ? "fires" : "silent") + "; " + std::to_string(out.accepted.size()) +
              " nodes quarantined the victim, " + std::to_string(referencing) + " tables still reference it"};
}

Outcome map_integrity() {
  Net local(topologies::neighbourhood(), N(1), 13);
  Net global(topologies::three_clusters(), N(3), 14);
  Rng rng(15);
  std::size_t rejected = 0;
  const std::array<MessageKind, 4> kinds{MessageKind::MapStep1, MessageKind::MapStep2, MessageKind::MapStep4,
                                         MessageKind::GlobalAlarm};
  for (int trial = 0; trial < 1000; ++trial) {
    const MessageKind kind = kinds[static_cast<std::size_t>(trial) % kinds.size()];
    const NodeId target = N(4);
    bool hit = false;
    const std::uint64_t pick = rng.next();
    WireFault fault = [&](const ProtocolMessage& m, Bytes wire) -> std::optional<Bytes> {
      const bool chosen = m.kind == kind && (kind == MessageKind::GlobalAlarm ? !hit : (m.sender == target || m.receiver == target));
      if (!chosen) return wire;
      hit = true;
      const std::size_t bit = pick % (wire.size() * 8);
      wire[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
      return wire;
    };
    if (kind == MessageKind::GlobalAlarm) {
      ResponseEngine e(global.graph, ResponseKeys::from_group(global.group), static_cast<std::uint64_t>(trial));
      feed(e, topologies::kClusterVictim, 30, 0);
      e.set_fault(fault);
      const auto out = e.global_alarm(topologies::kClusterVictim);
      rejected += hit && out.rejected.contains(N(3)) && !out.accepted.contains(N(3));
    } else {
      auto& e = local.engine;
      e.set_fault(fault);
      const auto out = e.distribute_local_maps(N(1));
      if (kind == MessageKind::MapStep4) rejected += hit && !out.accepted_by.contains(target);
      else rejected += hit && !out.map.entries.contains(target);
    }
  }
  return {rejected == 1000, std::to_string(rejected) + "/1000 single-bit tampers rejected"};
}

// ---- 8-9: detector --------------------------------------------------------

struct Split {
  Dataset train, test;
};

Split split(double effect, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 8);
  Split s;
  s.train = make_two_class(1000, effect, rng);
  s.test = make_two_class(500, effect, rng);
  return s;
}

std::string fmt(const std::optional<double>& v) { return v ? format_double(*v).substr(0, 6) : "n/a"; }

Outcome detector(EsomModel& four_sigma_model) {
  auto t0 = std::chrono::steady_clock::now();
  const Split four = split(4.0, 1);
  four_sigma_model = train_model(four.train, SomConfig{}, 1);
  const double train_s = seconds_since(t0);
  const Rates r4 = evaluate(four_sigma_model.classify_all(four.test.x), four.test.y);

  const Split weak = split(1.5, 1);
  const EsomModel m15 = train_model(weak.train, SomConfig{}, 1);
  const Rates r15 = evaluate(m15.classify_all(weak.test.x), weak.test.y);

  const bool pass = r4.detection_rate && *r4.detection_rate >= 0.95 && r4.false_alarm_rate &&
                    *r4.false_alarm_rate <= 0.05 && r15.detection_rate && *r15.detection_rate >= 0.80 &&
                    train_s <= 60.0;
  return {pass, "4 sigma: detection " + fmt(r4.detection_rate) + ", false alarm " + fmt(r4.false_alarm_rate) +
                    "; 1.5 sigma: detection " + fmt(r15.detection_rate) + "; 50x80 training " +
                    format_double(train_s).substr(0, 5) + " s"};
}

Outcome umatrix_band(const EsomModel& m) {
  const auto u = compute_umatrix(m.grid);
  const auto band = boundary_band(m.grid, m.labeling);
  double in_band = 0, outside = 0;
  std::size_t nb = 0, no = 0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    (band[n] ? in_band : outside) += u[n];
    ++(band[n] ? nb : no);
  }
  if (nb == 0 || no == 0) return {false, "no boundary band"};
  const double ratio = (in_band / nb) / (outside / no);
  return {ratio >= 1.5, "band/interior mean height ratio " + format_double(ratio).substr(0, 5)};
}

// ---- 10: determinism ------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not given"};
  const fs::path dir = fs::temp_directory_path() / ("manetir_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "scenario.cfg") << "node_count = 30\nwidth = 900\nheight = 600\npause_times = 0, 20\n"
                                         "dropper_counts = 0, 3\nduration = 60\ngenerators = 8\ndestinations = 4\n"
                                         "attack_start = 20\nattack_stop = 60\neavesdroppers = 1\nreplayers = 2\n"
                                         "replay_start = 20\ncalibration_droppers = 3\ncalibration_samples = 500\n"
                                         "som_rows = 20\nsom_cols = 30\nevent = 30 rekey\n";
  const std::string cfg = (dir / "scenario.cfg").string();
  // Each command runs twice, writing into run0/ and run1/.
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"synth --seed 4 --per-class 300 --out {o}/data.csv", {"data.csv"}},
      {"train --data {o}/data.csv --seed 4 --config " + cfg + " --out {o}/model.esom --umatrix {o}/u.csv",
       {"model.esom", "u.csv"}},
      {"classify --model {o}/model.esom --data {o}/data.csv --out {o}/verdicts.csv", {"verdicts.csv"}},
      {"evaluate --verdicts {o}/verdicts.csv --data {o}/data.csv --out {o}/rates.csv", {"rates.csv"}},
      {"simulate --config " + cfg + " --seed 9 --out {o}", {"metrics.csv", "trace.csv", "trees.txt"}},
      {"attack-suite --config " + cfg + " --seed 9 --epochs 40 --trials 40 --out {o}", {"suite.csv"}},
  };
  std::size_t files = 0;
  for (const auto& [args, outputs] : commands) {
    for (int run = 0; run < 2; ++run) {
      const std::string o = (dir / ("run" + std::to_string(run))).string();
      std::string line = args;
      for (std::size_t p; (p = line.find("{o}")) != std::string::npos;) line.replace(p, 3, o);
      const std::string cmd = "\"" + cli + "\" " + line + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + line};
    }
    for (const auto& f : outputs) {
      const std::string a = slurp(dir / "run0" / f);
      const std::string b = slurp(dir / "run1" / f);
      if (a.empty() || a != b) return {false, f + " differs between runs"};
      ++files;
    }
  }
  fs::remove_all(dir);
  return {true, std::to_string(files) + " output files byte-identical across 6 commands"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  EsomModel four_sigma;
  report(1, "key agreement convergence", convergence);
  report(2, "local keys", local_keys);
  report(3, "join correctness", join_correctness);
  report(4, "periodic rekey algebra", rekey_algebra);
  report(5, "security goals", security_goals);
  report(6, "global trigger", global_trigger);
  report(7, "map integrity", map_integrity);
  report(8, "detector rates", [&] { return detector(four_sigma); });
  report(9, "u-matrix boundary", [&] { return umatrix_band(four_sigma); });
  report(10, "determinism", [&] { return determinism(cli); });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
