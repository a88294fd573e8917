#include "haven/replay.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace haven {

double EpisodeRecord::total_reward() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

void EpisodeRecord::validate() const {
  const std::size_t L = length();
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("episode record: " + what);
  };
  if (k == 0) fail("k must be positive");
  if (L == 0) fail("no steps");
  if (!complete()) fail("episode incomplete (neither terminated nor truncated)");
  if (states.size() != L + 1 || observations.size() != L + 1) {
    fail("expected " + std::to_string(L + 1) + " states/observations, got " +
         std::to_string(states.size()) + "/" + std::to_string(observations.size()));
  }
  if (rewards.size() != L) fail("reward count differs from action count");
  if (hierarchical() && macro_actions.size() != num_segments()) {
    fail("expected " + std::to_string(num_segments()) + " macro actions, got " +
         std::to_string(macro_actions.size()));
  }
}

LowLevelTransition EpisodeRecord::low(std::size_t t) const {
  LowLevelTransition tr;
  if (t >= length()) {
    tr.padding = true;
    return tr;
  }
  tr.s = states[t];
  tr.z = observations[t];
  if (hierarchical()) tr.u_h = macro_actions[t / k];
  tr.u_l = actions[t];
  tr.r_e = rewards[t];
  tr.terminated = terminated && t + 1 == length();
  return tr;
}

double EpisodeRecord::segment_reward(std::size_t T) const {
  const std::size_t begin = T * k;
  const std::size_t end = std::min(length(), begin + k);
  return std::accumulate(rewards.begin() + static_cast<std::ptrdiff_t>(begin),
                         rewards.begin() + static_cast<std::ptrdiff_t>(end), 0.0);
}

HighLevelTransition EpisodeRecord::high(std::size_t T) const {
  if (T >= num_segments()) throw std::out_of_range("high-level index past the last segment");
  HighLevelTransition tr;
  tr.s = states[T * k];
  tr.z = observations[T * k];
  tr.u_h = hierarchical() ? macro_actions[T] : std::vector<int>{};
  tr.R = segment_reward(T);
  const std::size_t next = std::min(length(), (T + 1) * k);
  tr.terminal = terminated && next == length();
  if (tr.terminal) {
    tr.s_next.assign(states[next].size(), 0.0);
    tr.z_next = observations[next];
    for (auto& z : tr.z_next) std::fill(z.begin(), z.end(), 0.0);
  } else {
    tr.s_next = states[next];
    tr.z_next = observations[next];
  }
  return tr;
}

std::size_t EpisodeBatch::max_length() const {
  std::size_t m = 0;
  for (const auto& e : episodes) m = std::max(m, e->length());
  return m;
}

std::size_t EpisodeBatch::max_segments() const {
  std::size_t m = 0;
  for (const auto& e : episodes) m = std::max(m, e->num_segments());
  return m;
}

std::vector<double> EpisodeBatch::low_mask() const {
  const std::size_t L = max_length();
  std::vector<double> mask(size() * L, 0.0);
  for (std::size_t b = 0; b < size(); ++b) {
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * L), episodes[b]->length(), 1.0);
  }
  return mask;
}

std::vector<double> EpisodeBatch::high_mask() const {
  const std::size_t S = max_segments();
  std::vector<double> mask(size() * S, 0.0);
  for (std::size_t b = 0; b < size(); ++b) {
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * S), episodes[b]->num_segments(),
                1.0);
  }
  return mask;
}

EpisodeBuffer::EpisodeBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("EpisodeBuffer: capacity must be positive");
}

void EpisodeBuffer::push(EpisodePtr episode) {
  if (!episode) throw std::invalid_argument("EpisodeBuffer::push: null episode");
  episode->validate();
  storage_.push_back(std::move(episode));
  if (storage_.size() > capacity_) storage_.pop_front();
  ++total_pushed_;
}

std::optional<std::vector<std::size_t>> EpisodeBuffer::sample_indices(std::size_t batch_size,
                                                                      Rng& rng) const {
  if (storage_.empty()) throw std::logic_error("EpisodeBuffer::sample: buffer is empty");
  if (batch_size == 0) throw std::invalid_argument("EpisodeBuffer::sample: batch_size is 0");
  if (storage_.size() < batch_size) return std::nullopt;
  // Partial Fisher-Yates.
  std::vector<std::size_t> idx(storage_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch_size);
  return idx;
}

std::optional<EpisodeBatch> EpisodeBuffer::sample(std::size_t batch_size, Rng& rng) const {
  auto idx = sample_indices(batch_size, rng);
  if (!idx) return std::nullopt;
  EpisodeBatch batch;
  for (std::size_t i : *idx) batch.episodes.push_back(storage_[i]);
  return batch;
}

void ReplayMemory::push(EpisodeRecord episode) {
  auto ptr = std::make_shared<const EpisodeRecord>(std::move(episode));
  low_.push(ptr);
  if (ptr->hierarchical()) high_.push(ptr);
}

}  // namespace haven
