#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "imitate/actions.hpp"
#include "imitate/env.hpp"
#include "imitate/episode.hpp"

namespace imitate {

enum class Source : std::uint8_t { kBaselineExpert = 0, kNovice = 1, kCorrection = 2 };

std::string_view source_name(Source s);

struct Transition {
  Observation observation;
  ActionId action = ActionId::kNoop;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
  std::vector<Transition> transitions;
  Source source = Source::kBaselineExpert;
  std::int64_t episode_id = 0;

  bool empty() const { return transitions.empty(); }
  std::size_t size() const { return transitions.size(); }
};

using Digest = std::uint64_t;

std::string digest_hex(Digest d);

// Append-only store of (observation, action) pairs with per-entry provenance.
class Dataset {
 public:
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }
  Source source(std::size_t i) const { return provenance_[i]; }
  std::span<const Transition> transitions() const { return transitions_; }
  std::span<const Source> provenance() const { return provenance_; }

  void append(const Trajectory& t);

  // Order-sensitive FNV-1a digest over the first `count` entries.
  Digest checksum() const { return checksum_prefix(size()); }
  Digest checksum_prefix(std::size_t count) const;

  std::size_t count(Source s) const;

 private:
  std::vector<Transition> transitions_;
  std::vector<Source> provenance_;
};

Digest checksum(const Dataset& d);

// Returns `d` with `t` appended; `d` itself is left untouched.
Dataset merge(const Dataset& d, const Trajectory& t);

struct BcDatasetResult {
  Dataset dataset;
  std::vector<Trajectory> trajectories;
  std::vector<EpisodeRecord> records;
  // Label actually stored per tick of each record (may differ from the
  // executed expert action under label noise).
  std::vector<std::vector<ActionId>> labels;
};

// Scripted-expert demonstrations on hazard-free maps. A `noise_rate`
// fraction of labels is replaced by a seeded uniform draw over all actions.
BcDatasetResult generate_bc_dataset(std::span<const World> training_maps, int games,
                                    double noise_rate, std::uint64_t seed,
                                    int max_ticks = kDefaultMaxTicks);

// Compact text form of an observation: 49 channel digits, pitch, previous action.
std::string encode_observation(const Observation& obs);
Observation decode_observation(std::string_view text);

struct DatasetManifest {
  std::vector<std::string> maps;
  std::uint64_t seed = 0;
  std::string source;
  std::size_t transition_count = 0;
  std::string digest;
  std::vector<std::string> episode_files;
  std::string provenance;  // digest of the experiment manifest, if any
};

// Directory layout: episode_NNNN.jsonl per trajectory plus manifest.json.
// Episode files carry the standard tick fields plus "o" (observation before
// the tick) and "lbl" (stored label) for every dataset entry.
void write_dataset_dir(const std::filesystem::path& dir, const Dataset& d,
                       std::span<const Trajectory> trajectories,
                       std::span<const EpisodeRecord> records,
                       const DatasetManifest& manifest_base);
Dataset read_dataset_dir(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);

}  // namespace imitate
