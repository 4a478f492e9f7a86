#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "manetir/esom.hpp"
#include "manetir/gka_group.hpp"
#include "manetir/graph.hpp"
#include "manetir/rng.hpp"
#include "manetir/wire.hpp"

namespace manetir {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

enum class AdversaryKind : std::uint8_t { Dropper, Eavesdropper, Replayer };
std::string_view name_of(AdversaryKind k);

struct AdversaryRole {
  AdversaryKind kind = AdversaryKind::Dropper;
  /// Dropper: active window. Replayer: first replay time.
  double start = 50.0;
  double stop = 200.0;
  friend bool operator==(const AdversaryRole&, const AdversaryRole&) = default;
};

struct MobilityConfig {
  double speed_min = 0.0;
  double speed_max = 10.0;
  double pause_time = 0.0;
};

struct TrafficConfig {
  std::size_t generators = 20;
  std::size_t destinations = 10;
  double mean_payload = 512.0;
  double attack_start = 50.0;
  double attack_stop = 200.0;
  double sample_interval = 1.0;
  /// Shift of each affected feature, in baseline standard deviations, for a
  /// source whose route crosses an active dropper.
  double effect_sigma = 4.0;
};

struct WorldConfig {
  std::size_t node_count = 50;
  double width = 1800.0;
  double height = 1000.0;
  double range = 250.0;
  MobilityConfig mobility;
  /// Fixed delivery delay of transmitted messages, seconds.
  double latency = 0.0;
};

struct MobileNode {
  Vec2 pos;
  Vec2 waypoint;
  double speed = 0.0;
  /// Moving once `time` reaches this; every node starts paused.
  double pause_until = 0.0;
};

/// Deterministic discrete-event queue; events never run before the clock.
class EventQueue {
 public:
  using Action = std::function<void(double)>;
  void schedule(double at, Action action);
  /// Runs every event with time <= `until` in (time, insertion) order and
  /// advances the clock to `until`.
  void run_until(double until);
  double now() const { return now_; }
  std::size_t pending() const { return heap_.size(); }

 private:
  struct Item {
    double at;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  std::priority_queue<Item, std::vector<Item>, Later> heap_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
};

struct World {
  WorldConfig config;
  double time = 0.0;
  std::map<NodeId, MobileNode> nodes;
  std::map<NodeId, AdversaryRole> adversaries;
  /// Per-node mobility streams.
  std::map<NodeId, Rng> rngs;
  /// Wire copies overheard by each eavesdropper or replayer.
  std::map<NodeId, std::vector<Bytes>> transcripts;
  EventQueue events;

  bool is(NodeId n, AdversaryKind k) const;
};

/// Uniform placement of node ids 0..node_count-1; per-node streams derived
/// from `seed`.
World init_world(const WorldConfig& config, std::uint64_t seed);

/// Random waypoint: each node pauses `pause_time` after every arrival (and at
/// the start), then heads for a uniform waypoint at a speed uniform in
/// [speed_min, speed_max]. A node covers at most speed * dt per step.
void mobility_step(World& world, double dt);

/// Edge iff distance <= range.
Graph connectivity(const World& world);

struct Delivery {
  std::vector<NodeId> delivered;
  /// Unicast receiver out of the sender's range.
  bool out_of_range = false;
  double at = 0.0;
};

/// One-hop delivery by range. Eavesdroppers and replayers in range of the
/// sender keep a copy of the wire bytes.
Delivery transmit(World& world, const ProtocolMessage& msg);

struct FeatureSample {
  NodeId source{};
  double time = 0.0;
  FeatureVector x{};
  TrafficClass truth = TrafficClass::Normal;
};

/// Traffic flows: each generator sends to one destination.
struct Flows {
  std::vector<std::pair<NodeId, NodeId>> pairs;
};

/// Generators and destinations drawn among the non-dropper nodes.
Flows choose_flows(const World& world, const TrafficConfig& traffic, Rng& rng);

/// One sample per generator for the interval ending at world.time. A source
/// whose current shortest route has an active dropper as an intermediate hop
/// draws from the shifted model and is labelled Attack.
std::vector<FeatureSample> generate_features(const World& world, const Graph& graph, const Flows& flows,
                                             const TrafficConfig& traffic, Rng& rng,
                                             const TrafficModel& model = {});

enum class EventKind : std::uint8_t { Join, Leave, GlobalRekey, LocalRekey };
std::string_view name_of(EventKind k);

struct ScheduledEvent {
  double time = 0.0;
  EventKind kind = EventKind::GlobalRekey;
  NodeId node{};
};

struct ScenarioConfig {
  WorldConfig world;
  TrafficConfig traffic;
  double duration = 200.0;
  /// One metrics row per (pause time, dropper count).
  std::vector<double> pause_times{0.0};
  std::vector<std::size_t> dropper_counts{0};
  /// Fixed eavesdroppers and replayers (droppers are drawn per row).
  std::map<NodeId, AdversaryRole> adversaries;
  GroupConfig group;
  SomConfig som;
  std::size_t calibration_droppers = 5;
  std::size_t calibration_samples = 2000;
  std::size_t window = 30;
  double map_interval = 10.0;
  /// Re-form the group over the current topology this often (0: never).
  double rebuild_interval = 50.0;
  std::vector<ScheduledEvent> schedule;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

/// `key = value` lines, `#` comments. Errors read "SOURCE:LINE: message".
ScenarioConfig parse_scenario(std::string_view text, std::string_view source = "config");
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct MetricsRow {
  double pause_time = 0.0;
  std::size_t droppers = 0;
  std::size_t samples = 0;
  std::size_t attack_samples = 0;
  Rates rates;
  std::size_t epochs_ok = 0;
  std::size_t epochs_failed = 0;
  std::size_t members = 0;
  std::size_t map_exchanges = 0;
  std::size_t alarms = 0;
  std::size_t quarantines = 0;
  std::size_t tampers = 0;
  std::size_t replays = 0;
  std::size_t replays_accepted = 0;
  std::size_t eavesdropped = 0;
  std::size_t key_leaks = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::string trace;  // time,event_kind,node,peer,detail
  std::string trees;  // key tree dump per formed epoch

  std::string metrics_csv() const;
};

/// The detector every row uses: trained on a calibration run with its own
/// derived seed and `calibration_droppers` droppers.
EsomModel train_calibration_detector(const ScenarioConfig& config, std::uint64_t seed);

MetricsReport run_scenario(const ScenarioConfig& config, std::uint64_t seed);
/// Same, with a detector trained beforehand.
MetricsReport run_scenario(const ScenarioConfig& config, std::uint64_t seed, const EsomModel& detector);

}  // namespace manetir
