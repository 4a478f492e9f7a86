#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "manetir/bytes.hpp"
#include "manetir/rng.hpp"

namespace manetir {

inline constexpr std::size_t kFeatureCount = 7;

/// nav (s), tx_rate (pkt/s), rx_rate (pkt/s), rts_retx_rate, data_retx_rate,
/// active_neighbors, forwarding_nodes.
using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "nav", "tx_rate", "rx_rate", "rts_retx_rate", "data_retx_rate", "active_neighbors",
    "forwarding_nodes"};

enum class TrafficClass : std::uint8_t { Normal = 0, Attack = 1 };
enum class Verdict : std::uint8_t { Normal = 0, Attack = 1, Unclassified = 2 };
enum class Region : std::uint8_t { Normal = 0, Attack = 1, Hill = 2 };

std::string_view name_of(TrafficClass c);
std::string_view name_of(Verdict v);
Verdict parse_verdict(std::string_view s);

struct Dataset {
  std::vector<FeatureVector> x;
  std::vector<TrafficClass> y;

  std::size_t size() const { return x.size(); }
  std::size_t count(TrafficClass c) const;
};

// ---- normalization ---------------------------------------------------------

inline constexpr double kStdFloor = 1e-9;

struct FeatureStats {
  FeatureVector mean{};
  FeatureVector std{};
  /// Features whose standard deviation was floored.
  std::vector<std::size_t> degenerate;
};

/// Per-feature mean and population standard deviation. Needs two samples.
FeatureStats fit_normalizer(const std::vector<FeatureVector>& data);
FeatureVector normalize(const FeatureVector& x, const FeatureStats& s);
FeatureVector denormalize(const FeatureVector& z, const FeatureStats& s);
std::vector<FeatureVector> normalize(const std::vector<FeatureVector>& data, const FeatureStats& s);

// ---- SOM -------------------------------------------------------------------

struct SomConfig {
  std::size_t rows = 50;
  std::size_t cols = 80;
  std::size_t epochs = 20;
  double lr_start = 0.5;
  double lr_end = 0.05;
  /// 0 selects max(rows, cols) / 2.
  double radius_start = 0.0;
  double radius_end = 1.0;
  double hill_quantile = 0.85;

  void validate() const;
  double initial_radius() const;
};

/// Planar neuron lattice with 8-neighbourhoods; weights are float32,
/// row-major, `kFeatureCount` per neuron.
struct SomGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> weights;

  std::size_t size() const { return rows * cols; }
  std::span<const float> weight(std::size_t n) const {
    return std::span(weights).subspan(n * kFeatureCount, kFeatureCount);
  }
  friend bool operator==(const SomGrid&, const SomGrid&) = default;
};

/// Online Kohonen training. Weights start as randomly drawn samples; each
/// epoch visits the samples in a fresh random order; learning rate and radius
/// decay linearly per step; Gaussian neighbourhood cut off at three radii.
SomGrid train_som(const std::vector<FeatureVector>& data, const SomConfig& cfg, Rng& rng);

/// Optional per-epoch observer (epoch index, grid after that epoch).
using EpochObserver = std::function<void(std::size_t, const SomGrid&)>;
SomGrid train_som(const std::vector<FeatureVector>& data, const SomConfig& cfg, Rng& rng,
                  const EpochObserver& observer);
/// Same schedule, starting from `start` instead of sampled weights.
SomGrid refine_som(const SomGrid& start, const std::vector<FeatureVector>& data, const SomConfig& cfg,
                   Rng& rng, const EpochObserver& observer = {});

/// Exhaustive best-matching unit; ties go to the lowest index.
std::pair<std::size_t, double> best_match(const SomGrid& grid, const FeatureVector& x);

/// Mean distance from each neuron's weight to its (up to eight) lattice
/// neighbours.
std::vector<double> compute_umatrix(const SomGrid& grid);

struct RegionLabeling {
  std::vector<Region> labels;
  /// Class of every neuron before hills are carved out (vote plus fill).
  std::vector<TrafficClass> class_map;
  double hill_threshold = 0.0;
  std::optional<TrafficClass> empty_class;

  std::size_t count(Region r) const;
};

/// Neurons with U-height above the `hill_quantile` order statistic become
/// hills. Every neuron gets the majority label of the samples it is the BMU of
/// (ties go to Normal); neurons without samples take the label of the nearest
/// labelled neuron (8-neighbourhood hop distance, lowest index on ties).
RegionLabeling label_regions(const SomGrid& grid, const std::vector<double>& umatrix,
                             const Dataset& normalized, double hill_quantile);

/// Neurons whose 8-neighbourhood (itself included) holds both classes in the
/// class map.
std::vector<bool> boundary_band(const SomGrid& grid, const RegionLabeling& labeling);

struct Classification {
  Verdict verdict = Verdict::Unclassified;
  std::size_t best_match = 0;
  double distance = 0.0;
};

Classification classify(const SomGrid& grid, const RegionLabeling& labeling,
                        const FeatureVector& normalized_point);

struct Rates {
  std::optional<double> detection_rate;
  std::optional<double> false_alarm_rate;
  std::size_t attacks = 0;  // classified attack samples
  std::size_t normals = 0;  // classified normal samples
  std::size_t detected = 0;
  std::size_t false_alarms = 0;
  std::size_t unclassified = 0;
};

/// Unclassified verdicts are excluded from both rates and counted apart.
Rates evaluate(const std::vector<Verdict>& verdicts, const std::vector<TrafficClass>& truth);

// ---- trained model ---------------------------------------------------------

struct EsomModel {
  FeatureStats stats;
  SomGrid grid;
  RegionLabeling labeling;

  Classification classify_raw(const FeatureVector& x) const;
  std::vector<Verdict> classify_all(const std::vector<FeatureVector>& raw) const;
};

/// Normalize, train, compute the U-Matrix and label regions.
EsomModel train_model(const Dataset& raw, const SomConfig& cfg, std::uint64_t seed);

/// Grid bytes as distributed and digested: "ESOM" magic, u32 version, rows,
/// cols, features, then float32 weights, all little-endian.
Bytes serialize_grid(const SomGrid& grid);

/// Model file: the grid bytes, then per-feature mean and std (f64), region
/// labels and class map (u8 per neuron) and the hill threshold (f64).
Bytes serialize_model(const EsomModel& m);
EsomModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const EsomModel& m, const std::filesystem::path& path);
EsomModel load_model(const std::filesystem::path& path);

// ---- datasets --------------------------------------------------------------

/// CSV with the seven feature columns and a `label` column (normal/attack).
/// A header line is optional. Errors name the 1-based line.
Dataset read_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view text, std::string_view source = "<memory>");
std::string format_dataset(const Dataset& d);

/// Baseline per-feature mean and standard deviation of the normal traffic
/// model.
struct TrafficModel {
  FeatureVector mean{0.02, 20.0, 18.0, 0.05, 0.04, 6.0, 3.0};
  FeatureVector std{0.005, 4.0, 4.0, 0.02, 0.015, 2.0, 1.0};
  /// Sign of the packet-dropping shift per feature: rx_rate and
  /// forwarding_nodes fall, data_retx_rate rises, the rest stay put.
  static FeatureVector attack_profile();
  /// One sample; every affected feature moves `effect_sigma` of its own
  /// standard deviations along the profile.
  FeatureVector sample(Rng& rng, double effect_sigma) const;
};

/// `n` samples per class, interleaved normal/attack. Attack means sit
/// `effect_sigma` standard deviations from the normal means in each affected
/// feature (so sqrt(3) * effect_sigma apart in standardized Euclidean terms).
Dataset make_two_class(std::size_t n_per_class, double effect_sigma, Rng& rng,
                       const TrafficModel& model = {});

/// Shortest round-trip decimal text of a double.
std::string format_double(double v);

}  // namespace manetir
