#pragma once

// Naive re-scan reference for the collision, blinded and uptime detectors.
// Every quantity is recomputed from scratch per tick; no shared state with
// the library's streaming implementation.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "imitate/episode.hpp"
#include "imitate/rng.hpp"

namespace oracle {

struct NaiveEvent {
  int start = 0;
  int length = 0;
};

inline bool blocked(const imitate::EpisodeRecord& rec, int t) {
  const auto& e = rec.ticks[static_cast<std::size_t>(t)];
  return e.intended_move && !e.moved;
}

// For each tick, walk back to find where its blocked run begins and forward
// to find where it ends; keep the run once, at its first tick.
inline std::vector<NaiveEvent> naive_collisions(const imitate::EpisodeRecord& rec) {
  std::vector<NaiveEvent> out;
  const int n = rec.length();
  for (int t = 0; t < n; ++t) {
    if (!blocked(rec, t)) continue;
    int begin = t;
    while (begin > 0 && blocked(rec, begin - 1)) --begin;
    if (begin != t) continue;
    int end = t;
    while (end + 1 < n && blocked(rec, end + 1)) ++end;
    const int len = end - begin + 1;
    if (len >= 10) out.push_back({rec.ticks[static_cast<std::size_t>(begin)].tick, len});
  }
  return out;
}

inline std::array<int, 9> naive_histogram(const std::vector<NaiveEvent>& events) {
  static constexpr std::array<int, 9> lower = {5, 10, 20, 30, 45, 60, 90, 120, 150};
  std::array<int, 9> h{};
  for (const auto& e : events) {
    const double s = e.length * 0.5;
    for (std::size_t b = 0; b < lower.size(); ++b) {
      const bool below_next = b + 1 == lower.size() || s < lower[b + 1];
      if (s >= lower[b] && below_next) ++h[b];
    }
  }
  return h;
}

inline std::vector<int> naive_blinded(const imitate::EpisodeRecord& rec) {
  std::vector<int> counts;
  for (int theta = 5; theta <= 90; theta += 5) {
    int c = 0;
    for (int t = 0; t < rec.length(); ++t) {
      const int now = std::abs(rec.ticks[static_cast<std::size_t>(t)].pitch);
      const int before = t == 0 ? 0 : std::abs(rec.ticks[static_cast<std::size_t>(t - 1)].pitch);
      if (now >= theta && before < theta) ++c;
    }
    counts.push_back(c);
  }
  return counts;
}

// Ticks that are not part of any kept event.
inline int naive_uptime(const imitate::EpisodeRecord& rec) {
  const auto events = naive_collisions(rec);
  int up = 0;
  for (int t = 0; t < rec.length(); ++t) {
    bool inside = false;
    for (const auto& e : events) inside = inside || (rec.ticks[static_cast<std::size_t>(t)].tick >= e.start &&
                                                     rec.ticks[static_cast<std::size_t>(t)].tick < e.start + e.length);
    up += !inside;
  }
  return up;
}

// Synthetic records with long blocked stretches and wandering pitch, so
// events of every bucket and many threshold crossings occur.
inline imitate::EpisodeRecord random_record(imitate::Rng& rng, const char* map_id, std::int64_t seed) {
  imitate::EpisodeRecord rec;
  rec.map_id = map_id;
  rec.seed = seed;
  const int n = rng.uniform_int(0, 360);
  int pitch = 0;
  bool in_block = false;
  for (int t = 0; t < n; ++t) {
    if (rng.bernoulli(in_block ? 0.04 : 0.08)) in_block = !in_block;
    imitate::TickEntry e;
    e.tick = t;
    const bool try_move = in_block || rng.bernoulli(0.6);
    e.intended_move = try_move;
    e.moved = try_move && !in_block && rng.bernoulli(0.9);
    e.action = try_move ? imitate::ActionId::kForward : imitate::ActionId::kTurnLeft;
    const int r = rng.uniform_int(0, 9);
    if (r == 0) pitch = std::min(90, pitch + 5);
    else if (r == 1) pitch = std::max(-90, pitch - 5);
    else if (r == 2) pitch = 5 * rng.uniform_int(-18, 18);
    e.pitch = pitch;
    rec.ticks.push_back(e);
  }
  rec.success = rng.bernoulli(0.3);
  return rec;
}

}  // namespace oracle
