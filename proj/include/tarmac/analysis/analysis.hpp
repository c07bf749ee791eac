#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tarmac {

// Spearman rank correlation with average ranks for ties. Constant series have
// no defined correlation.
inline std::optional<double> spearman(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const size_t n = a.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

struct AttentionRecord {
  long episode = 0;
  int t = 0, round = 0, receiver = 0;
  std::vector<double> weights;
  std::vector<int> gates;
  std::vector<int> alive;
  std::vector<std::array<int, 2>> positions;
  double p_brake = 0;
};

inline std::vector<AttentionRecord> load_attention_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open attention log " + path);
  std::vector<AttentionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    AttentionRecord r;
    r.episode = j.at("episode");
    r.t = j.at("t");
    r.round = j.at("round");
    r.receiver = j.at("receiver");
    r.weights = j.at("weights").get<std::vector<double>>();
    r.gates = j.at("gates").get<std::vector<int>>();
    r.alive = j.at("alive").get<std::vector<int>>();
    r.p_brake = j.value("p_brake", 0.0);
    for (const auto& p : j.at("positions"))
      r.positions.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    out.push_back(std::move(r));
  }
  return out;
}

// Per-cell running means over a square grid; cells with no samples stay
// absent in the CSV output.
struct SpatialGrid {
  int size = 0;
  std::vector<double> sum;
  std::vector<long> count;

  explicit SpatialGrid(int n) : size(n), sum(static_cast<size_t>(n) * n, 0.0),
                                count(static_cast<size_t>(n) * n, 0) {}

  void add(int r, int c, double v) {
    if (r < 0 || r >= size || c < 0 || c >= size) return;
    sum[static_cast<size_t>(r) * size + c] += v;
    ++count[static_cast<size_t>(r) * size + c];
  }
  bool has(int r, int c) const { return count[static_cast<size_t>(r) * size + c] > 0; }
  double mean(int r, int c) const {
    return sum[static_cast<size_t>(r) * size + c] / count[static_cast<size_t>(r) * size + c];
  }

  void write_csv(std::ostream& out) const {
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        if (c) out << ",";
        if (has(r, c)) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6f", mean(r, c));
          out << buf;
        }
      }
      out << "\n";
    }
  }
};

inline int last_round(const std::vector<AttentionRecord>& log) {
  int r = 0;
  for (const auto& rec : log) r = std::max(r, rec.round);
  return r;
}

// kind "brake": mean brake probability at the receiver's own cell.
// kind "attention": mean received attention weight attributed to each alive
// sender's cell. Only the chosen round is aggregated (default: final round).
inline SpatialGrid spatial_aggregate(const std::vector<AttentionRecord>& log,
                                     const std::string& kind, int grid_size, int round = -1) {
  if (log.empty()) throw std::runtime_error("empty attention log");
  if (kind != "brake" && kind != "attention")
    throw std::runtime_error("unknown spatial kind: " + kind);
  const int use_round = round < 0 ? last_round(log) : round;
  SpatialGrid grid(grid_size);
  for (const auto& rec : log) {
    if (rec.round != use_round) continue;
    if (kind == "brake") {
      const auto& p = rec.positions[rec.receiver];
      grid.add(p[0], p[1], rec.p_brake);
    } else {
      for (size_t i = 0; i < rec.weights.size(); ++i) {
        if (!rec.alive[i]) continue;
        grid.add(rec.positions[i][0], rec.positions[i][1], rec.weights[i]);
      }
    }
  }
  return grid;
}

struct CorrelationResult {
  std::optional<double> rho;
  std::vector<double> total_alive;    // series A per (episode, t)
  std::vector<double> attended;       // series B per (episode, t)
  int pairs = 0;
};

// Series A: alive agents per timestep. Series B: agents receiving attention
// weight above `threshold` from at least one receiver. B is shifted forward
// by `shift` steps within each episode before correlating.
inline CorrelationResult attended_correlation(const std::vector<AttentionRecord>& log,
                                              double threshold = 0.1, int shift = 0) {
  const int use_round = last_round(log);
  struct Key {
    long episode;
    int t;
    bool operator<(const Key& o) const {
      return episode != o.episode ? episode < o.episode : t < o.t;
    }
  };
  std::map<Key, std::pair<double, std::vector<double>>> by_step;  // alive count, max weight per sender
  for (const auto& rec : log) {
    if (rec.round != use_round) continue;
    auto& slot = by_step[{rec.episode, rec.t}];
    double alive = 0;
    for (int a : rec.alive) alive += a;
    slot.first = alive;
    if (slot.second.empty()) slot.second.assign(rec.weights.size(), 0.0);
    for (size_t i = 0; i < rec.weights.size(); ++i)
      slot.second[i] = std::max(slot.second[i], rec.weights[i]);
  }

  CorrelationResult res;
  std::vector<std::pair<Key, std::pair<double, double>>> series;
  for (const auto& [key, v] : by_step) {
    double attended = 0;
    for (double w : v.second) attended += w > threshold ? 1.0 : 0.0;
    series.push_back({key, {v.first, attended}});
    res.total_alive.push_back(v.first);
    res.attended.push_back(attended);
  }

  std::vector<double> a, b;
  for (size_t i = 0; i + shift < series.size(); ++i) {
    const auto& lhs = series[i];
    const auto& rhs = series[i + shift];
    if (lhs.first.episode != rhs.first.episode) continue;
    if (rhs.first.t != lhs.first.t + shift) continue;  // require contiguous steps
    a.push_back(lhs.second.first);
    b.push_back(rhs.second.second);
  }
  res.pairs = static_cast<int>(a.size());
  res.rho = spearman(a, b);
  return res;
}

}  // namespace tarmac
