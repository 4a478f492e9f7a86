#include "manetir/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "manetir/adversary.hpp"
#include "manetir/error.hpp"
#include "manetir/response.hpp"

namespace manetir {

namespace {

// Stream tags for Rng::derive.
constexpr std::uint64_t kPlacementStream = 0x706c6163;
constexpr std::uint64_t kMobilityStream = 0x6d6f6269;
constexpr std::uint64_t kDropperStream = 0x64726f70;
constexpr std::uint64_t kFlowStream = 0x666c6f77;
constexpr std::uint64_t kFeatureStream = 0x66656174;
constexpr std::uint64_t kGroupStream = 0x67726f75;
constexpr std::uint64_t kReplayStream = 0x7265706c;
constexpr std::uint64_t kCalibrationStream = 0x63616c69;

Vec2 uniform_point(Rng& rng, const WorldConfig& c) { return {rng.uniform(0.0, c.width), rng.uniform(0.0, c.height)}; }

void validate_world(const WorldConfig& c) {
  if (c.node_count < 2) throw Error(ErrorCode::InvalidConfig, "node_count must be at least 2");
  if (!(c.width > 0 && c.height > 0)) throw Error(ErrorCode::InvalidConfig, "area must be positive");
  if (!(c.range > 0)) throw Error(ErrorCode::InvalidConfig, "range must be positive");
  if (!(c.mobility.speed_min >= 0 && c.mobility.speed_min <= c.mobility.speed_max)) {
    throw Error(ErrorCode::InvalidConfig, "speeds must satisfy 0 <= speed_min <= speed_max");
  }
  if (!(c.mobility.pause_time >= 0)) throw Error(ErrorCode::InvalidConfig, "pause time must be non-negative");
  if (!(c.latency >= 0)) throw Error(ErrorCode::InvalidConfig, "latency must be non-negative");
}

}  // namespace

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string_view name_of(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::Dropper: return "dropper";
    case AdversaryKind::Eavesdropper: return "eavesdropper";
    case AdversaryKind::Replayer: return "replayer";
  }
  return "?";
}

std::string_view name_of(EventKind k) {
  switch (k) {
    case EventKind::Join: return "join";
    case EventKind::Leave: return "leave";
    case EventKind::GlobalRekey: return "rekey";
    case EventKind::LocalRekey: return "local_rekey";
  }
  return "?";
}

// ---- event queue -----------------------------------------------------------

void EventQueue::schedule(double at, Action action) {
  if (at < now_) throw Error(ErrorCode::InvalidArgument, "event scheduled in the past");
  heap_.push(Item{at, seq_++, std::move(action)});
}

void EventQueue::run_until(double until) {
  while (!heap_.empty() && heap_.top().at <= until) {
    Item item = heap_.top();
    heap_.pop();
    now_ = item.at;
    item.action(item.at);
  }
  now_ = std::max(now_, until);
}

// ---- world -----------------------------------------------------------------

bool World::is(NodeId n, AdversaryKind k) const {
  const auto it = adversaries.find(n);
  return it != adversaries.end() && it->second.kind == k;
}

World init_world(const WorldConfig& config, std::uint64_t seed) {
  validate_world(config);
  World w;
  w.config = config;
  Rng place = Rng::derive(seed, kPlacementStream);
  for (std::uint32_t i = 0; i < config.node_count; ++i) {
    const NodeId id{i};
    MobileNode n;
    n.pos = uniform_point(place, config);
    n.waypoint = n.pos;
    n.pause_until = config.mobility.pause_time;
    w.nodes.emplace(id, n);
    w.rngs.emplace(id, Rng::derive(seed, kMobilityStream, i));
  }
  return w;
}

void mobility_step(World& world, double dt) {
  if (!(dt > 0)) throw Error(ErrorCode::InvalidArgument, "mobility step must be positive");
  const auto& mob = world.config.mobility;
  const double end = world.time + dt;
  for (auto& [id, n] : world.nodes) {
    Rng& rng = world.rngs.at(id);
    double t = world.time;
    bool moving = n.speed > 0 && n.pos != n.waypoint;
    while (t < end) {
      if (!moving) {
        if (n.pause_until > t) {
          t = std::min(n.pause_until, end);
          continue;
        }
        n.waypoint = uniform_point(rng, world.config);
        n.speed = rng.uniform(mob.speed_min, mob.speed_max);
        if (!(n.speed > 0)) {
          // A zero-speed leg is spent standing still until the step ends.
          n.pause_until = end;
          n.waypoint = n.pos;
          break;
        }
        moving = true;
      }
      const double remain = distance(n.pos, n.waypoint);
      const double reach = n.speed * (end - t);
      if (reach < remain) {
        const double f = reach / remain;
        n.pos = {n.pos.x + (n.waypoint.x - n.pos.x) * f, n.pos.y + (n.waypoint.y - n.pos.y) * f};
        t = end;
      } else {
        n.pos = n.waypoint;
        t += remain / n.speed;
        moving = false;
        n.speed = 0.0;
        n.pause_until = t + mob.pause_time;
      }
    }
  }
  world.time = end;
}

Graph connectivity(const World& world) {
  Graph g;
  const double r2 = world.config.range * world.config.range;
  std::vector<std::pair<NodeId, Vec2>> pts;
  for (const auto& [id, n] : world.nodes) {
    g.add_node(id);
    pts.emplace_back(id, n.pos);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dx = pts[i].second.x - pts[j].second.x;
      const double dy = pts[i].second.y - pts[j].second.y;
      if (dx * dx + dy * dy <= r2) g.add_edge(pts[i].first, pts[j].first);
    }
  }
  return g;
}

Delivery transmit(World& world, const ProtocolMessage& msg) {
  const auto sender = world.nodes.find(msg.sender);
  if (sender == world.nodes.end()) throw Error(ErrorCode::UnknownNode, "sender not in the world", {msg.sender});
  const double range = world.config.range;
  auto in_range = [&](NodeId n) {
    const auto it = world.nodes.find(n);
    return it != world.nodes.end() && distance(it->second.pos, sender->second.pos) <= range;
  };
  Delivery d;
  d.at = world.time + world.config.latency;
  if (msg.is_broadcast()) {
    for (const auto& [id, n] : world.nodes) {
      if (id != msg.sender && in_range(id)) d.delivered.push_back(id);
    }
  } else if (msg.receiver != msg.sender && in_range(msg.receiver)) {
    d.delivered.push_back(msg.receiver);
  } else {
    d.out_of_range = true;
  }
  Bytes wire;
  for (const auto& [id, role] : world.adversaries) {
    if (role.kind == AdversaryKind::Dropper || id == msg.sender || !in_range(id)) continue;
    if (wire.empty()) wire = encode(msg);
    world.transcripts[id].push_back(wire);
  }
  return d;
}

Flows choose_flows(const World& world, const TrafficConfig& traffic, Rng& rng) {
  std::vector<NodeId> pool;
  for (const auto& [id, n] : world.nodes) {
    if (!world.is(id, AdversaryKind::Dropper)) pool.push_back(id);
  }
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  if (pool.size() < traffic.generators + traffic.destinations || traffic.destinations == 0) {
    throw Error(ErrorCode::InvalidConfig, "not enough honest nodes for the traffic flows");
  }
  Flows f;
  for (std::size_t i = 0; i < traffic.generators; ++i) {
    f.pairs.emplace_back(pool[i], pool[traffic.generators + i % traffic.destinations]);
  }
  return f;
}

std::vector<FeatureSample> generate_features(const World& world, const Graph& graph, const Flows& flows,
                                             const TrafficConfig& traffic, Rng& rng, const TrafficModel& model) {
  const bool window = world.time >= traffic.attack_start && world.time <= traffic.attack_stop;
  std::vector<FeatureSample> out;
  out.reserve(flows.pairs.size());
  for (const auto& [src, dst] : flows.pairs) {
    bool attacked = false;
    if (window) {
      const auto path = graph.shortest_path(src, dst);
      for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        const auto it = world.adversaries.find(path[i]);
        if (it == world.adversaries.end() || it->second.kind != AdversaryKind::Dropper) continue;
        if (world.time >= it->second.start && world.time <= it->second.stop) attacked = true;
      }
    }
    FeatureSample s;
    s.source = src;
    s.time = world.time;
    s.x = model.sample(rng, attacked ? traffic.effect_sigma : 0.0);
    s.truth = attacked ? TrafficClass::Attack : TrafficClass::Normal;
    out.push_back(s);
  }
  return out;
}

// ---- scenario config -------------------------------------------------------

void ScenarioConfig::validate() const {
  validate_world(world);
  som.validate();
  const auto n = world.node_count;
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(duration > 0)) bad("duration must be positive");
  if (!(traffic.sample_interval > 0)) bad("sample_interval must be positive");
  if (traffic.generators == 0) bad("generators must be positive");
  if (!(traffic.attack_start >= 0 && traffic.attack_start <= traffic.attack_stop && traffic.attack_stop <= duration)) {
    bad("attack window must lie within the run");
  }
  if (!(traffic.effect_sigma >= 0)) bad("effect_sigma must be non-negative");
  if (pause_times.empty() || dropper_counts.empty()) bad("pause_times and dropper_counts must not be empty");
  for (double p : pause_times) {
    if (!(p >= 0)) bad("pause times must be non-negative");
  }
  const std::size_t most = std::max(calibration_droppers, *std::max_element(dropper_counts.begin(), dropper_counts.end()));
  if (most + adversaries.size() + traffic.generators + traffic.destinations > n) {
    bad("droppers, fixed adversaries, generators and destinations exceed node_count");
  }
  for (const auto& [id, role] : adversaries) {
    if (id.value >= n) bad("adversary id " + to_string(id) + " is not below node_count");
    if (role.kind == AdversaryKind::Dropper) bad("droppers are drawn per row, not listed");
  }
  for (const auto& e : schedule) {
    if (e.node.value >= n) bad("event node " + to_string(e.node) + " is not below node_count");
    if (!(e.time >= 0 && e.time <= duration)) bad("event time outside the run");
  }
  if (window == 0) bad("window must be positive");
  if (calibration_samples < 2) bad("calibration_samples must be at least 2");
  if (!(map_interval > 0)) bad("map_interval must be positive");
  if (!(rebuild_interval >= 0)) bad("rebuild_interval must be non-negative");
  if (group.suite.aead == AeadAlgorithm::ChaCha20Poly1305 && group.key_bytes != 32) {
    bad("chacha20-poly1305 needs key_bytes = 32");
  }
  if (group.key_bytes != 16 && group.key_bytes != 24 && group.key_bytes != 32) bad("key_bytes must be 16, 24 or 32");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto p = s.find(sep);
    out.push_back(trim(s.substr(0, p)));
    if (p == std::string_view::npos) break;
    s.remove_prefix(p + 1);
  }
  return out;
}

template <typename T>
T number(std::string_view v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || v.empty()) {
    throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw std::invalid_argument("value must be finite");
  }
  return out;
}

template <typename T>
std::vector<T> number_list(std::string_view v) {
  std::vector<T> out;
  for (auto part : split(v, ',')) out.push_back(number<T>(part));
  return out;
}

}  // namespace

ScenarioConfig parse_scenario(std::string_view text, std::string_view source) {
  ScenarioConfig c;
  std::set<std::string> seen;
  double replay_start = 60.0;
  std::vector<NodeId> replayers;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::InvalidConfig, std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view v = trim(line.substr(eq + 1));
    if (key != "event" && !seen.insert(key).second) fail("duplicate key '" + key + "'");
    try {
      if (key == "node_count") c.world.node_count = number<std::size_t>(v);
      else if (key == "width") c.world.width = number<double>(v);
      else if (key == "height") c.world.height = number<double>(v);
      else if (key == "range") c.world.range = number<double>(v);
      else if (key == "latency") c.world.latency = number<double>(v);
      else if (key == "speed_min") c.world.mobility.speed_min = number<double>(v);
      else if (key == "speed_max") c.world.mobility.speed_max = number<double>(v);
      else if (key == "pause_times") c.pause_times = number_list<double>(v);
      else if (key == "dropper_counts") c.dropper_counts = number_list<std::size_t>(v);
      else if (key == "duration") c.duration = number<double>(v);
      else if (key == "generators") c.traffic.generators = number<std::size_t>(v);
      else if (key == "destinations") c.traffic.destinations = number<std::size_t>(v);
      else if (key == "mean_payload") c.traffic.mean_payload = number<double>(v);
      else if (key == "attack_start") c.traffic.attack_start = number<double>(v);
      else if (key == "attack_stop") c.traffic.attack_stop = number<double>(v);
      else if (key == "sample_interval") c.traffic.sample_interval = number<double>(v);
      else if (key == "effect_sigma") c.traffic.effect_sigma = number<double>(v);
      else if (key == "eavesdroppers") {
        for (auto id : number_list<std::uint32_t>(v)) c.adversaries[NodeId{id}] = {AdversaryKind::Eavesdropper, 0.0, 0.0};
      } else if (key == "replayers") {
        for (auto id : number_list<std::uint32_t>(v)) replayers.push_back(NodeId{id});
      } else if (key == "replay_start") replay_start = number<double>(v);
      else if (key == "aead") c.group.suite.aead = parse_aead(v);
      else if (key == "hash") c.group.suite.hash = parse_hash(v);
      else if (key == "key_bytes") c.group.key_bytes = number<std::size_t>(v);
      else if (key == "leave_policy") c.group.leave_policy = parse_leave_policy(v);
      else if (key == "som_rows") c.som.rows = number<std::size_t>(v);
      else if (key == "som_cols") c.som.cols = number<std::size_t>(v);
      else if (key == "som_epochs") c.som.epochs = number<std::size_t>(v);
      else if (key == "som_lr_start") c.som.lr_start = number<double>(v);
      else if (key == "som_lr_end") c.som.lr_end = number<double>(v);
      else if (key == "som_radius_end") c.som.radius_end = number<double>(v);
      else if (key == "hill_quantile") c.som.hill_quantile = number<double>(v);
      else if (key == "calibration_droppers") c.calibration_droppers = number<std::size_t>(v);
      else if (key == "calibration_samples") c.calibration_samples = number<std::size_t>(v);
      else if (key == "window") c.window = number<std::size_t>(v);
      else if (key == "map_interval") c.map_interval = number<double>(v);
      else if (key == "rebuild_interval") c.rebuild_interval = number<double>(v);
      else if (key == "seed") c.seed = number<std::uint64_t>(v);
      else if (key == "event") {
        // event = TIME KIND [NODE]
        std::vector<std::string_view> parts;
        for (auto p : split(v, ' ')) {
          if (!p.empty()) parts.push_back(p);
        }
        if (parts.size() < 2 || parts.size() > 3) throw std::invalid_argument("event needs 'TIME KIND [NODE]'");
        ScheduledEvent e;
        e.time = number<double>(parts[0]);
        const auto kind = parts[1];
        if (kind == "join") e.kind = EventKind::Join;
        else if (kind == "leave") e.kind = EventKind::Leave;
        else if (kind == "rekey") e.kind = EventKind::GlobalRekey;
        else if (kind == "local_rekey") e.kind = EventKind::LocalRekey;
        else throw std::invalid_argument("unknown event kind '" + std::string(kind) + "'");
        if (parts.size() == 3) e.node = NodeId{number<std::uint32_t>(parts[2])};
        else if (e.kind != EventKind::GlobalRekey) throw std::invalid_argument("event needs a node");
        c.schedule.push_back(e);
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(key + ": " + e.what());
    } catch (const Error& e) {
      fail(key + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  for (NodeId r : replayers) c.adversaries[r] = {AdversaryKind::Replayer, replay_start, c.duration};
  std::stable_sort(c.schedule.begin(), c.schedule.end(),
                   [](const ScheduledEvent& a, const ScheduledEvent& b) { return a.time < b.time; });
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string(source) + ": " + e.what());
  }
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

// ---- metrics ---------------------------------------------------------------

std::string MetricsReport::metrics_csv() const {
  std::string out =
      "pause_time,droppers,samples,attack_samples,detection_rate,false_alarm_rate,unclassified,"
      "epochs_ok,epochs_failed,members,map_exchanges,alarms,quarantines,tampers,replays,replays_accepted,"
      "eavesdropped,key_leaks\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out += format_double(r.pause_time) + ',' + std::to_string(r.droppers) + ',' + std::to_string(r.samples) + ',' +
           std::to_string(r.attack_samples) + ',' + opt(r.rates.detection_rate) + ',' +
           opt(r.rates.false_alarm_rate) + ',' + std::to_string(r.rates.unclassified) + ',' +
           std::to_string(r.epochs_ok) + ',' + std::to_string(r.epochs_failed) + ',' + std::to_string(r.members) +
           ',' + std::to_string(r.map_exchanges) + ',' + std::to_string(r.alarms) + ',' +
           std::to_string(r.quarantines) + ',' + std::to_string(r.tampers) + ',' + std::to_string(r.replays) + ',' +
           std::to_string(r.replays_accepted) + ',' + std::to_string(r.eavesdropped) + ',' +
           std::to_string(r.key_leaks) + '\n';
  }
  return out;
}

// ---- scenario run ----------------------------------------------------------

namespace {

/// Dropper ids for a row: a fixed random order over the eligible nodes, so
/// larger counts extend smaller ones.
std::vector<NodeId> dropper_order(const ScenarioConfig& c, std::uint64_t seed) {
  std::vector<NodeId> pool;
  for (std::uint32_t i = 0; i < c.world.node_count; ++i) {
    if (!c.adversaries.contains(NodeId{i})) pool.push_back(NodeId{i});
  }
  Rng rng = Rng::derive(seed, kDropperStream);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  return pool;
}

World make_world(const ScenarioConfig& c, std::uint64_t seed, double pause, std::size_t droppers) {
  WorldConfig wc = c.world;
  wc.mobility.pause_time = pause;
  World w = init_world(wc, seed);
  w.adversaries = c.adversaries;
  const auto order = dropper_order(c, seed);
  for (std::size_t i = 0; i < droppers; ++i) {
    w.adversaries[order[i]] = {AdversaryKind::Dropper, c.traffic.attack_start, c.traffic.attack_stop};
  }
  return w;
}

/// Largest connected component (lowest id wins ties) and its highest-degree
/// node (lowest id wins ties).
std::pair<NodeId, std::set<NodeId>> main_component(const Graph& g) {
  std::set<NodeId> best;
  std::set<NodeId> done;
  for (NodeId n : g.nodes()) {
    if (done.contains(n)) continue;
    std::set<NodeId> comp;
    for (const auto& [m, lvl] : g.bfs_levels(n)) comp.insert(m);
    done.insert(comp.begin(), comp.end());
    if (comp.size() > best.size()) best = std::move(comp);
  }
  NodeId root = *best.begin();
  for (NodeId n : best) {
    if (g.degree(n) > g.degree(root)) root = n;
  }
  return {root, best};
}

class Row {
 public:
  Row(const ScenarioConfig& c, std::uint64_t seed, std::size_t index, double pause, std::size_t droppers,
      const EsomModel& detector, Trace& trace, std::string& trees)
      : c_(c), seed_(seed), index_(index), detector_(detector), trace_(trace), trees_(trees),
        world_(make_world(c, seed, pause, droppers)),
        feature_rng_(Rng::derive(seed, kFeatureStream, index)),
        replay_rng_(Rng::derive(seed, kReplayStream, index)) {
    row_.pause_time = pause;
    row_.droppers = droppers;
    Rng flow_rng = Rng::derive(seed, kFlowStream, index);
    flows_ = choose_flows(world_, c.traffic, flow_rng);
    Rng key_rng = Rng::derive(seed, kGroupStream, index);
    master_ = KeyMaterial::random(key_rng, c.group.key_bytes);
    for (std::uint32_t i = 0; i < c.world.node_count; ++i) universe_.push_back(NodeId{i});
  }

  MetricsRow run() {
    trace_.add(0.0, "row", NodeId{0}, std::nullopt,
               "pause=" + format_double(row_.pause_time) + " droppers=" + std::to_string(row_.droppers));
    for (const auto& [id, role] : world_.adversaries) trace_.add(0.0, "adversary", id, std::nullopt, std::string(name_of(role.kind)));
    graph_ = connectivity(world_);
    engine_ = std::make_unique<ResponseEngine>(graph_, ResponseKeys{}, seed_ ^ index_, c_.window);
    engine_->set_grid(&detector_.grid);
    engine_->set_fault([this](const ProtocolMessage& m, Bytes wire) -> std::optional<Bytes> {
      record(m);
      return wire;
    });
    rebuild(0.0);

    auto& q = world_.events;
    const double dt = c_.traffic.sample_interval;
    for (double t = dt; t <= c_.duration + 1e-9; t += dt) q.schedule(t, [this, dt](double at) { tick(at, dt); });
    for (double t = c_.map_interval; t <= c_.duration + 1e-9; t += c_.map_interval) {
      q.schedule(t, [this](double at) { respond(at); });
    }
    if (c_.rebuild_interval > 0) {
      for (double t = c_.rebuild_interval; t < c_.duration; t += c_.rebuild_interval) {
        q.schedule(t, [this](double at) { rebuild(at); });
      }
    }
    for (const auto& e : c_.schedule) q.schedule(e.time, [this, e](double at) { membership(at, e); });
    q.run_until(c_.duration);

    row_.rates = evaluate(verdicts_, truth_);
    row_.samples = truth_.size();
    row_.attack_samples = static_cast<std::size_t>(std::count(truth_.begin(), truth_.end(), TrafficClass::Attack));
    row_.members = group_ ? group_->participants().size() : 0;
    row_.tampers = engine_->tamper_count();
    row_.key_leaks = scan_leaks();
    for (const auto& ev : engine_->trace().events()) trace_.add(ev.time, ev.kind, ev.node, ev.peer, ev.detail);
    return row_;
  }

 private:
  void record(const ProtocolMessage& m) {
    if (!world_.nodes.contains(m.sender)) return;
    const auto before = transcript_size();
    transmit(world_, m);
    row_.eavesdropped += transcript_size() - before;
  }

  std::size_t transcript_size() const {
    std::size_t n = 0;
    for (const auto& [id, t] : world_.transcripts) n += t.size();
    return n;
  }

  void keys_changed(const std::set<NodeId>& reauthenticated) {
    ++row_.epochs_ok;
    for (const auto& k : group_->history().empty() ? std::vector<SessionKeys>{} : std::vector{group_->history().back()}) {
      epoch_keys_.push_back(k);
    }
    engine_->set_keys(ResponseKeys::from_group(*group_), reauthenticated);
    alarmed_.clear();
  }

  void rebuild(double at) {
    engine_->set_time(at);
    const auto [root, members] = main_component(graph_);
    GroupConfig gc = c_.group;
    gc.master_key = master_;
    auto g = std::make_unique<Group>(gc, universe_, Rng::derive(seed_, kGroupStream, index_ * 1000 + rebuilds_++).next());
    g->add_tap([this](const ProtocolMessage& m, const Bytes&) { record(m); });
    try {
      if (members.size() < 2) throw Error(ErrorCode::IsolatedRoot, "no component with two nodes", {root});
      g->form(root, members, graph_);
    } catch (const Error& e) {
      ++row_.epochs_failed;
      engine_->trace().add(at, "epoch_abort", root, std::nullopt, std::string(to_string(e.code())));
      return;
    }
    group_ = std::move(g);
    trees_ += "# pause=" + format_double(row_.pause_time) + " droppers=" + std::to_string(row_.droppers) +
              " t=" + format_double(at) + " epoch=" + std::to_string(group_->epoch()) + "\n" + group_->tree().dump();
    engine_->trace().add(at, "group_formed", root, group_->tree().checker(),
                         "members=" + std::to_string(group_->participants().size()));
    const auto parts = group_->participants();
    keys_changed({parts.begin(), parts.end()});
  }

  void tick(double at, double dt) {
    mobility_step(world_, dt);
    graph_ = connectivity(world_);
    engine_->set_time(at);
    engine_->set_graph(graph_);
    for (const auto& s : generate_features(world_, graph_, flows_, c_.traffic, feature_rng_)) {
      const Verdict v = detector_.classify_raw(s.x).verdict;
      engine_->observe(s.source, v);
      verdicts_.push_back(v);
      truth_.push_back(s.truth);
    }
  }

  void respond(double at) {
    engine_->set_time(at);
    if (!group_) return;
    for (NodeId n : group_->participants()) {
      engine_->distribute_local_maps(n);
      ++row_.map_exchanges;
    }
    for (NodeId n : group_->participants()) {
      if (alarmed_.contains(n) || engine_->window(n).size() < c_.window) continue;
      if (!check_global_trigger(engine_->security_map(n), c_.window)) continue;
      const auto out = engine_->global_alarm(n);
      alarmed_.insert(n);
      ++row_.alarms;
      row_.quarantines += out.accepted.size();
    }
    replay(at);
  }

  void replay(double at) {
    for (const auto& [id, role] : world_.adversaries) {
      if (role.kind != AdversaryKind::Replayer || at < role.start || !group_) continue;
      // Response PDUs are handled by the engine's own replay cache; the
      // replayer targets group-protocol copies.
      std::vector<ProtocolMessage> copies;
      for (const auto& wire : world_.transcripts[id]) {
        try {
          auto m = decode(wire);
          if (m.kind < MessageKind::MapStep1) copies.push_back(std::move(m));
        } catch (const Error&) {
        }
      }
      for (int i = 0; i < 5 && !copies.empty(); ++i) {
        const ProtocolMessage& m = copies[replay_rng_.below(copies.size())];
        NodeId to = m.receiver;
        const auto parts = group_->participants();
        if (m.is_broadcast()) to = parts[replay_rng_.below(parts.size())];
        if (!group_->is_participant(to)) continue;
        const Bytes before = serialize(group_->node(to));
        group_->inject(m, to);
        ++row_.replays;
        const bool changed = serialize(group_->node(to)) != before;
        row_.replays_accepted += changed;
        engine_->trace().add(at, changed ? "replay_accepted" : "replay_rejected", to, id, std::string(name_of(m.kind)));
      }
    }
  }

  void membership(double at, const ScheduledEvent& e) {
    engine_->set_time(at);
    if (!group_) return;
    try {
      std::set<NodeId> reauth;
      switch (e.kind) {
        case EventKind::Join:
          group_->join(e.node, graph_);
          reauth = group_->last_refreshed();
          break;
        case EventKind::Leave:
          group_->leave(e.node, graph_);
          reauth = group_->last_refreshed();
          break;
        case EventKind::GlobalRekey: {
          group_->global_rekey();
          const auto parts = group_->participants();
          reauth.insert(parts.begin(), parts.end());
          break;
        }
        case EventKind::LocalRekey:
          group_->local_rekey(e.node);
          reauth.insert(e.node);
          break;
      }
      engine_->trace().add(at, std::string(name_of(e.kind)), e.node, std::nullopt,
                           "epoch=" + std::to_string(group_->epoch()));
      keys_changed(reauth);
    } catch (const Error& err) {
      ++row_.epochs_failed;
      engine_->trace().add(at, "epoch_abort", e.node, std::nullopt,
                           std::string(name_of(e.kind)) + ":" + std::string(to_string(err.code())));
    }
  }

  std::size_t scan_leaks() const {
    std::size_t hits = 0;
    for (const auto& [id, copies] : world_.transcripts) {
      TranscriptScanner s;
      for (const auto& w : copies) s.append(w);
      for (const auto& k : epoch_keys_) {
        hits += s.occurrences(k.global_key).size();
        for (const auto& [m, lk] : k.local_keys) hits += s.occurrences(lk).size();
      }
    }
    return hits;
  }

  const ScenarioConfig& c_;
  std::uint64_t seed_;
  std::size_t index_;
  const EsomModel& detector_;
  Trace& trace_;
  std::string& trees_;
  World world_;
  Rng feature_rng_;
  Rng replay_rng_;
  Flows flows_;
  KeyMaterial master_;
  std::vector<NodeId> universe_;
  Graph graph_;
  std::unique_ptr<Group> group_;
  std::unique_ptr<ResponseEngine> engine_;
  std::size_t rebuilds_ = 0;
  std::set<NodeId> alarmed_;
  std::vector<SessionKeys> epoch_keys_;
  std::vector<Verdict> verdicts_;
  std::vector<TrafficClass> truth_;
  MetricsRow row_;
};

}  // namespace

EsomModel train_calibration_detector(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  const std::uint64_t cal_seed = Rng::derive(seed, kCalibrationStream).next();
  World w = make_world(config, cal_seed, config.pause_times.front(), config.calibration_droppers);
  Rng flow_rng = Rng::derive(cal_seed, kFlowStream);
  Rng feat_rng = Rng::derive(cal_seed, kFeatureStream);
  const Flows flows = choose_flows(w, config.traffic, flow_rng);
  Dataset all;
  const double dt = config.traffic.sample_interval;
  for (double t = dt; t <= config.duration + 1e-9; t += dt) {
    mobility_step(w, dt);
    for (const auto& s : generate_features(w, connectivity(w), flows, config.traffic, feat_rng)) {
      all.x.push_back(s.x);
      all.y.push_back(s.truth);
    }
  }
  // Deterministic subsample, kept in time order.
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng pick = Rng::derive(cal_seed, kCalibrationStream);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[pick.below(i)]);
  idx.resize(std::min(idx.size(), config.calibration_samples));
  std::sort(idx.begin(), idx.end());
  Dataset train;
  for (std::size_t i : idx) {
    train.x.push_back(all.x[i]);
    train.y.push_back(all.y[i]);
  }
  return train_model(train, config.som, cal_seed);
}

MetricsReport run_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  return run_scenario(config, seed, train_calibration_detector(config, seed));
}

MetricsReport run_scenario(const ScenarioConfig& config, std::uint64_t seed, const EsomModel& detector) {
  config.validate();
  MetricsReport report;
  Trace trace;
  std::size_t index = 0;
  for (double pause : config.pause_times) {
    for (std::size_t droppers : config.dropper_counts) {
      Row row(config, seed, index++, pause, droppers, detector, trace, report.trees);
      report.rows.push_back(row.run());
    }
  }
  report.trace = trace.csv();
  return report;
}

}  // namespace manetir
