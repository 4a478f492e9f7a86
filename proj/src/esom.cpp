#include "manetir/esom.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "manetir/error.hpp"

namespace manetir {

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::array<std::uint8_t, 4> kMagic{'E', 'S', 'O', 'M'};

void put_u32le(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64le(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32le(Bytes& out, float v) { put_u32le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64le(Bytes& out, double v) { put_u64le(out, std::bit_cast<std::uint64_t>(v)); }

class LeReader {
 public:
  explicit LeReader(std::span<const std::uint8_t> d) : d_(d) {}

  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(d_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  void expect_end() const {
    if (pos_ != d_.size()) throw Error(ErrorCode::Malformed, "model file has trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (d_.size() - pos_ < n) throw Error(ErrorCode::Malformed, "model file is truncated");
  }
  std::span<const std::uint8_t> d_;
  std::size_t pos_ = 0;
};

double squared_distance(std::span<const float> w, const FeatureVector& x) {
  double d = 0.0;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const double t = static_cast<double>(w[k]) - x[k];
    d += t * t;
  }
  return d;
}

std::size_t chebyshev(const SomGrid& g, std::size_t a, std::size_t b) {
  const auto ar = static_cast<long>(a / g.cols), ac = static_cast<long>(a % g.cols);
  const auto br = static_cast<long>(b / g.cols), bc = static_cast<long>(b % g.cols);
  return static_cast<std::size_t>(std::max(std::labs(ar - br), std::labs(ac - bc)));
}

template <typename F>
void for_each_neighbour(const SomGrid& g, std::size_t n, F&& f) {
  const auto r = static_cast<long>(n / g.cols), c = static_cast<long>(n % g.cols);
  for (long dr = -1; dr <= 1; ++dr) {
    for (long dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const long rr = r + dr, cc = c + dc;
      if (rr < 0 || cc < 0 || rr >= static_cast<long>(g.rows) || cc >= static_cast<long>(g.cols)) continue;
      f(static_cast<std::size_t>(rr) * g.cols + static_cast<std::size_t>(cc));
    }
  }
}

}  // namespace

std::string_view name_of(TrafficClass c) { return c == TrafficClass::Normal ? "normal" : "attack"; }

std::string_view name_of(Verdict v) {
  switch (v) {
    case Verdict::Normal: return "normal";
    case Verdict::Attack: return "attack";
    case Verdict::Unclassified: return "unclassified";
  }
  return "?";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "normal") return Verdict::Normal;
  if (s == "attack") return Verdict::Attack;
  if (s == "unclassified") return Verdict::Unclassified;
  throw Error(ErrorCode::Malformed, "unknown verdict '" + std::string(s) + "'");
}

std::size_t Dataset::count(TrafficClass c) const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), c));
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---- normalization ---------------------------------------------------------

FeatureStats fit_normalizer(const std::vector<FeatureVector>& data) {
  if (data.size() < 2) throw Error(ErrorCode::EmptyInput, "normalization needs at least two samples");
  FeatureStats s;
  const double n = static_cast<double>(data.size());
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    double sum = 0.0;
    for (const auto& x : data) sum += x[k];
    const double mean = sum / n;
    double var = 0.0;
    for (const auto& x : data) var += (x[k] - mean) * (x[k] - mean);
    double sd = std::sqrt(var / n);
    if (!(sd > kStdFloor)) {
      sd = kStdFloor;
      s.degenerate.push_back(k);
    }
    s.mean[k] = mean;
    s.std[k] = sd;
  }
  return s;
}

FeatureVector normalize(const FeatureVector& x, const FeatureStats& s) {
  FeatureVector z;
  for (std::size_t k = 0; k < kFeatureCount; ++k) z[k] = (x[k] - s.mean[k]) / s.std[k];
  return z;
}

FeatureVector denormalize(const FeatureVector& z, const FeatureStats& s) {
  FeatureVector x;
  for (std::size_t k = 0; k < kFeatureCount; ++k) x[k] = z[k] * s.std[k] + s.mean[k];
  return x;
}

std::vector<FeatureVector> normalize(const std::vector<FeatureVector>& data, const FeatureStats& s) {
  std::vector<FeatureVector> out;
  out.reserve(data.size());
  for (const auto& x : data) out.push_back(normalize(x, s));
  return out;
}

// ---- SOM -------------------------------------------------------------------

void SomConfig::validate() const {
  if (rows < 2 || cols < 2) throw Error(ErrorCode::InvalidConfig, "som grid must be at least 2x2");
  if (epochs == 0) throw Error(ErrorCode::InvalidConfig, "som epochs must be positive");
  if (!(lr_start > 0 && lr_end > 0)) throw Error(ErrorCode::InvalidConfig, "som learning rates must be positive");
  if (radius_start < 0 || !(radius_end > 0)) throw Error(ErrorCode::InvalidConfig, "som radii must be positive");
  if (!(hill_quantile > 0 && hill_quantile < 1)) {
    throw Error(ErrorCode::InvalidConfig, "hill quantile must lie in (0, 1)");
  }
}

double SomConfig::initial_radius() const {
  return radius_start > 0 ? radius_start : static_cast<double>(std::max(rows, cols)) / 2.0;
}

SomGrid train_som(const std::vector<FeatureVector>& data, const SomConfig& cfg, Rng& rng) {
  return train_som(data, cfg, rng, {});
}

SomGrid train_som(const std::vector<FeatureVector>& data, const SomConfig& cfg, Rng& rng,
                  const EpochObserver& observer) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
  SomGrid start{cfg.rows, cfg.cols, std::vector<float>(cfg.rows * cfg.cols * kFeatureCount)};
  for (std::size_t i = 0; i < start.size(); ++i) {
    const auto& x = data[rng.below(data.size())];
    std::transform(x.begin(), x.end(), start.weights.begin() + static_cast<long>(i * kFeatureCount),
                   [](double v) { return static_cast<float>(v); });
  }
  return refine_som(start, data, cfg, rng, observer);
}

SomGrid refine_som(const SomGrid& start, const std::vector<FeatureVector>& data, const SomConfig& cfg,
                   Rng& rng, const EpochObserver& observer) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
  if (start.rows != cfg.rows || start.cols != cfg.cols || start.weights.size() != start.size() * kFeatureCount) {
    throw Error(ErrorCode::InvalidArgument, "starting grid does not match the configuration");
  }
  const std::size_t n = cfg.rows * cfg.cols;
  std::vector<double> w(start.weights.begin(), start.weights.end());

  const double r0 = cfg.initial_radius();
  const std::size_t total = cfg.epochs * data.size();
  const double span = total > 1 ? static_cast<double>(total - 1) : 1.0;
  std::vector<std::size_t> order(data.size());
  std::vector<double> row_h(cfg.rows), col_h(cfg.cols);
  std::size_t step = 0;

  auto snapshot = [&] {
    SomGrid g{cfg.rows, cfg.cols, std::vector<float>(w.size())};
    std::transform(w.begin(), w.end(), g.weights.begin(), [](double v) { return static_cast<float>(v); });
    return g;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t idx : order) {
      const FeatureVector& x = data[idx];
      const double t = static_cast<double>(step++) / span;
      const double lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * t;
      const double radius = r0 + (cfg.radius_end - r0) * t;

      std::size_t bmu = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        const double* wj = &w[j * kFeatureCount];
        double d = 0.0;
        for (std::size_t k = 0; k < kFeatureCount; ++k) d += (wj[k] - x[k]) * (wj[k] - x[k]);
        if (d < best) {
          best = d;
          bmu = j;
        }
      }

      // The Gaussian is separable over rows and columns.
      const long br = static_cast<long>(bmu / cfg.cols), bc = static_cast<long>(bmu % cfg.cols);
      const double cut = 3.0 * radius;
      const double inv = 1.0 / (2.0 * radius * radius);
      const long reach = static_cast<long>(std::floor(cut));
      const long r_lo = std::max(0L, br - reach), r_hi = std::min<long>(static_cast<long>(cfg.rows) - 1, br + reach);
      const long c_lo = std::max(0L, bc - reach), c_hi = std::min<long>(static_cast<long>(cfg.cols) - 1, bc + reach);
      for (long r = r_lo; r <= r_hi; ++r) row_h[static_cast<std::size_t>(r)] = std::exp(-static_cast<double>((r - br) * (r - br)) * inv);
      for (long c = c_lo; c <= c_hi; ++c) col_h[static_cast<std::size_t>(c)] = std::exp(-static_cast<double>((c - bc) * (c - bc)) * inv);
      const double cut2 = cut * cut;
      for (long r = r_lo; r <= r_hi; ++r) {
        const double dr2 = static_cast<double>((r - br) * (r - br));
        for (long c = c_lo; c <= c_hi; ++c) {
          if (dr2 + static_cast<double>((c - bc) * (c - bc)) > cut2) continue;
          const double h = lr * row_h[static_cast<std::size_t>(r)] * col_h[static_cast<std::size_t>(c)];
          double* wj = &w[(static_cast<std::size_t>(r) * cfg.cols + static_cast<std::size_t>(c)) * kFeatureCount];
          for (std::size_t k = 0; k < kFeatureCount; ++k) wj[k] += h * (x[k] - wj[k]);
        }
      }
    }
    if (observer) observer(epoch, snapshot());
  }
  return snapshot();
}

std::pair<std::size_t, double> best_match(const SomGrid& grid, const FeatureVector& x) {
  std::size_t bmu = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double d = squared_distance(grid.weight(j), x);
    if (d < best) {
      best = d;
      bmu = j;
    }
  }
  return {bmu, std::sqrt(best)};
}

std::vector<double> compute_umatrix(const SomGrid& grid) {
  std::vector<double> u(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto wn = grid.weight(n);
    double sum = 0.0;
    int count = 0;
    for_each_neighbour(grid, n, [&](std::size_t m) {
      const auto wm = grid.weight(m);
      double d = 0.0;
      for (std::size_t k = 0; k < kFeatureCount; ++k) {
        const double t = static_cast<double>(wn[k]) - static_cast<double>(wm[k]);
        d += t * t;
      }
      sum += std::sqrt(d);
      ++count;
    });
    u[n] = count ? sum / count : 0.0;
  }
  return u;
}

std::size_t RegionLabeling::count(Region r) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), r));
}

RegionLabeling label_regions(const SomGrid& grid, const std::vector<double>& umatrix,
                             const Dataset& normalized, double hill_quantile) {
  const std::size_t n = grid.size();
  if (umatrix.size() != n) throw Error(ErrorCode::InvalidArgument, "u-matrix does not match the grid");
  if (normalized.size() == 0) throw Error(ErrorCode::EmptyInput, "no labelled samples");
  if (!(hill_quantile > 0 && hill_quantile < 1)) {
    throw Error(ErrorCode::InvalidConfig, "hill quantile must lie in (0, 1)");
  }

  RegionLabeling out;
  std::vector<double> sorted = umatrix;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(hill_quantile * static_cast<double>(n)));
  out.hill_threshold = sorted[std::clamp<std::size_t>(rank, 1, n) - 1];

  std::vector<std::array<std::size_t, 2>> votes(n, {0, 0});
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    ++votes[best_match(grid, normalized.x[i]).first][static_cast<std::size_t>(normalized.y[i])];
  }
  std::array<std::size_t, 2> totals{0, 0};
  std::vector<std::size_t> voted;
  for (std::size_t j = 0; j < n; ++j) {
    totals[0] += votes[j][0];
    totals[1] += votes[j][1];
    if (votes[j][0] + votes[j][1] > 0) voted.push_back(j);
  }
  if (totals[0] == 0) out.empty_class = TrafficClass::Normal;
  if (totals[1] == 0) out.empty_class = TrafficClass::Attack;

  out.class_map.resize(n);
  for (std::size_t j : voted) {
    out.class_map[j] = votes[j][1] > votes[j][0] ? TrafficClass::Attack : TrafficClass::Normal;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (votes[j][0] + votes[j][1] > 0) continue;
    std::size_t best = voted.front();
    std::size_t best_d = chebyshev(grid, j, best);
    for (std::size_t v : voted) {
      const std::size_t d = chebyshev(grid, j, v);
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    out.class_map[j] = out.class_map[best];
  }

  out.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.labels[j] = umatrix[j] > out.hill_threshold ? Region::Hill
                                                    : static_cast<Region>(out.class_map[j]);
  }
  return out;
}

std::vector<bool> boundary_band(const SomGrid& grid, const RegionLabeling& labeling) {
  std::vector<bool> band(grid.size(), false);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    for_each_neighbour(grid, n, [&](std::size_t m) {
      if (labeling.class_map[m] != labeling.class_map[n]) band[n] = true;
    });
  }
  return band;
}

Classification classify(const SomGrid& grid, const RegionLabeling& labeling,
                        const FeatureVector& normalized_point) {
  const auto [bmu, dist] = best_match(grid, normalized_point);
  Classification c;
  c.best_match = bmu;
  c.distance = dist;
  switch (labeling.labels[bmu]) {
    case Region::Normal: c.verdict = Verdict::Normal; break;
    case Region::Attack: c.verdict = Verdict::Attack; break;
    case Region::Hill: c.verdict = Verdict::Unclassified; break;
  }
  return c;
}

Rates evaluate(const std::vector<Verdict>& verdicts, const std::vector<TrafficClass>& truth) {
  if (verdicts.size() != truth.size()) {
    throw Error(ErrorCode::InvalidArgument, "verdicts and ground truth differ in length");
  }
  Rates r;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (verdicts[i] == Verdict::Unclassified) {
      ++r.unclassified;
      continue;
    }
    const bool flagged = verdicts[i] == Verdict::Attack;
    if (truth[i] == TrafficClass::Attack) {
      ++r.attacks;
      r.detected += flagged ? 1 : 0;
    } else {
      ++r.normals;
      r.false_alarms += flagged ? 1 : 0;
    }
  }
  if (r.attacks) r.detection_rate = static_cast<double>(r.detected) / static_cast<double>(r.attacks);
  if (r.normals) r.false_alarm_rate = static_cast<double>(r.false_alarms) / static_cast<double>(r.normals);
  return r;
}

// ---- trained model ---------------------------------------------------------

Classification EsomModel::classify_raw(const FeatureVector& x) const {
  return classify(grid, labeling, normalize(x, stats));
}

std::vector<Verdict> EsomModel::classify_all(const std::vector<FeatureVector>& raw) const {
  std::vector<Verdict> out;
  out.reserve(raw.size());
  for (const auto& x : raw) out.push_back(classify_raw(x).verdict);
  return out;
}

EsomModel train_model(const Dataset& raw, const SomConfig& cfg, std::uint64_t seed) {
  EsomModel m;
  m.stats = fit_normalizer(raw.x);
  Dataset norm{normalize(raw.x, m.stats), raw.y};
  Rng rng = Rng::derive(seed, 0x736f6dULL);
  m.grid = train_som(norm.x, cfg, rng);
  m.labeling = label_regions(m.grid, compute_umatrix(m.grid), norm, cfg.hill_quantile);
  return m;
}

Bytes serialize_grid(const SomGrid& grid) {
  Bytes out(kMagic.begin(), kMagic.end());
  put_u32le(out, kModelVersion);
  put_u32le(out, static_cast<std::uint32_t>(grid.rows));
  put_u32le(out, static_cast<std::uint32_t>(grid.cols));
  put_u32le(out, static_cast<std::uint32_t>(kFeatureCount));
  for (float v : grid.weights) put_f32le(out, v);
  return out;
}

Bytes serialize_model(const EsomModel& m) {
  Bytes out = serialize_grid(m.grid);
  for (double v : m.stats.mean) put_f64le(out, v);
  for (double v : m.stats.std) put_f64le(out, v);
  for (Region r : m.labeling.labels) out.push_back(static_cast<std::uint8_t>(r));
  for (TrafficClass c : m.labeling.class_map) out.push_back(static_cast<std::uint8_t>(c));
  put_f64le(out, m.labeling.hill_threshold);
  return out;
}

EsomModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::Malformed, "not an ESOM model file");
  }
  LeReader r(bytes.subspan(4));
  if (const auto v = r.u32(); v != kModelVersion) {
    throw Error(ErrorCode::Malformed, "unsupported model version " + std::to_string(v));
  }
  EsomModel m;
  m.grid.rows = r.u32();
  m.grid.cols = r.u32();
  if (r.u32() != kFeatureCount) throw Error(ErrorCode::Malformed, "model feature count is not 7");
  if (m.grid.rows < 2 || m.grid.cols < 2 || m.grid.rows * m.grid.cols > (1u << 24)) {
    throw Error(ErrorCode::Malformed, "implausible model dimensions");
  }
  m.grid.weights.resize(m.grid.size() * kFeatureCount);
  for (auto& w : m.grid.weights) {
    w = r.f32();
    if (!std::isfinite(w)) throw Error(ErrorCode::Malformed, "non-finite weight in model");
  }
  for (auto& v : m.stats.mean) v = r.f64();
  for (auto& v : m.stats.std) v = r.f64();
  m.labeling.labels.resize(m.grid.size());
  for (auto& l : m.labeling.labels) {
    const auto b = r.u8();
    if (b > 2) throw Error(ErrorCode::Malformed, "bad region label in model");
    l = static_cast<Region>(b);
  }
  m.labeling.class_map.resize(m.grid.size());
  for (auto& c : m.labeling.class_map) {
    const auto b = r.u8();
    if (b > 1) throw Error(ErrorCode::Malformed, "bad class label in model");
    c = static_cast<TrafficClass>(b);
  }
  m.labeling.hill_threshold = r.f64();
  r.expect_end();
  return m;
}

void save_model(const EsomModel& m, const std::filesystem::path& path) {
  const Bytes b = serialize_model(m);
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

EsomModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  const Bytes b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(b);
}

// ---- datasets --------------------------------------------------------------

Dataset parse_dataset(std::string_view text, std::string_view source) {
  Dataset d;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::Malformed, std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (d.size() == 0 && line_no == 1 && fields.front() == kFeatureNames.front()) continue;
    if (fields.size() != kFeatureCount + 1) {
      fail("expected 8 fields, found " + std::to_string(fields.size()));
    }
    FeatureVector x;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      const auto f = fields[k];
      const auto r = std::from_chars(f.data(), f.data() + f.size(), x[k]);
      if (r.ec != std::errc{} || r.ptr != f.data() + f.size() || !std::isfinite(x[k])) {
        fail("bad number '" + std::string(f) + "' in column " + std::string(kFeatureNames[k]));
      }
    }
    const auto label = fields.back();
    TrafficClass y;
    if (label == "normal" || label == "0") {
      y = TrafficClass::Normal;
    } else if (label == "attack" || label == "1") {
      y = TrafficClass::Attack;
    } else {
      fail("bad label '" + std::string(label) + "'");
    }
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_dataset(ss.str(), path.string());
}

std::string format_dataset(const Dataset& d) {
  std::string out;
  for (auto name : kFeatureNames) {
    out += name;
    out += ',';
  }
  out += "label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.x[i]) {
      out += format_double(v);
      out += ',';
    }
    out += name_of(d.y[i]);
    out += '\n';
  }
  return out;
}

FeatureVector TrafficModel::attack_profile() { return FeatureVector{0, 0, -1, 0, 1, 0, -1}; }

FeatureVector TrafficModel::sample(Rng& rng, double effect_sigma) const {
  const FeatureVector dir = attack_profile();
  FeatureVector x;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    x[k] = mean[k] + std[k] * (rng.normal() + effect_sigma * dir[k]);
  }
  return x;
}

Dataset make_two_class(std::size_t n_per_class, double effect_sigma, Rng& rng,
                       const TrafficModel& model) {
  Dataset d;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    d.x.push_back(model.sample(rng, 0.0));
    d.y.push_back(TrafficClass::Normal);
    d.x.push_back(model.sample(rng, effect_sigma));
    d.y.push_back(TrafficClass::Attack);
  }
  return d;
}

}  // namespace manetir
