#pragma once

// Episode replay. One EpisodeRecord backs both the low-level and the
// high-level view, so segment sums always agree across the two buffers.
// Only external rewards are stored; intrinsic rewards are recomputed from the
// current value network on every training pass.

#include "haven/env.hpp"
#include "haven/nets.hpp"

#include <deque>
#include <memory>
#include <optional>

namespace haven {

struct LowLevelTransition {
  GlobalState s;
  Observations z;
  std::vector<int> u_h;  // macro action of segment floor(t/k); empty when flat
  std::vector<int> u_l;
  double r_e = 0.0;
  bool terminated = false;
  bool padding = false;
};

struct HighLevelTransition {
  GlobalState s;
  Observations z;
  std::vector<int> u_h;
  double R = 0.0;
  bool terminal = false;
  // Zero-filled when terminal.
  GlobalState s_next;
  Observations z_next;
};

struct EpisodeRecord {
  std::size_t k = 3;
  std::vector<GlobalState> states;                // L + 1
  std::vector<Observations> observations;         // L + 1
  std::vector<std::vector<int>> macro_actions;    // one per segment; empty when flat
  std::vector<std::vector<int>> actions;          // L
  std::vector<double> rewards;                    // L, external only
  // Ended in a genuine terminal state (not by the time limit).
  bool terminated = false;
  // Ended by the time limit.
  bool truncated = false;
  double success = 0.0;

  std::size_t length() const { return actions.size(); }
  std::size_t num_segments() const { return (length() + k - 1) / k; }
  bool hierarchical() const { return !macro_actions.empty(); }
  bool complete() const { return terminated || truncated; }
  double total_reward() const;

  // Throws unless the field sizes are mutually consistent and complete.
  void validate() const;

  // t in [0, L); t >= L yields a padding transition.
  LowLevelTransition low(std::size_t t) const;
  // T in [0, num_segments()).
  HighLevelTransition high(std::size_t T) const;
  double segment_reward(std::size_t T) const;
};

using EpisodePtr = std::shared_ptr<const EpisodeRecord>;

struct EpisodeBatch {
  std::vector<EpisodePtr> episodes;

  std::size_t size() const { return episodes.size(); }
  std::size_t max_length() const;
  std::size_t max_segments() const;
  // Row-major (batch, max_length): 1 for real steps, 0 for padding.
  std::vector<double> low_mask() const;
  // Row-major (batch, max_segments).
  std::vector<double> high_mask() const;
};

class EpisodeBuffer {
public:
  explicit EpisodeBuffer(std::size_t capacity);

  void push(EpisodePtr episode);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return total_pushed_; }
  bool ready(std::size_t batch_size) const { return storage_.size() >= batch_size; }

  // Oldest first.
  const EpisodePtr& at(std::size_t index) const { return storage_.at(index); }

  // Uniform without replacement within one call. Throws on an empty buffer;
  // returns nullopt ("not ready") while fewer than batch_size are stored.
  std::optional<EpisodeBatch> sample(std::size_t batch_size, Rng& rng) const;
  // Same draw, as indices into the buffer.
  std::optional<std::vector<std::size_t>> sample_indices(std::size_t batch_size, Rng& rng) const;

private:
  std::size_t capacity_;
  std::deque<EpisodePtr> storage_;
  std::uint64_t total_pushed_ = 0;
};

// The pair of buffers D^l and D^h. Flat episodes only go to D^l.
class ReplayMemory {
public:
  explicit ReplayMemory(std::size_t capacity) : low_(capacity), high_(capacity) {}

  void push(EpisodeRecord episode);
  const EpisodeBuffer& low() const { return low_; }
  const EpisodeBuffer& high() const { return high_; }

private:
  EpisodeBuffer low_;
  EpisodeBuffer high_;
};

}  // namespace haven
