#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "acl/demonstration.hpp"
#include "acl/error.hpp"

namespace acl {

/// FIFO ring of transitions (self roll-out buffer R).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("replay buffer capacity must be positive");
  }

  void push(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  void push_episode(const Episode& episode) {
    if (episode.empty()) throw ValidationError("cannot push an empty episode");
    for (const auto& t : episode) push(t);
  }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  /// i-th oldest transition still stored.
  const Transition& operator[](std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
  std::vector<Transition> data_;
};

/// Demo buffer D: successful demonstrations plus a flattened transition view.
class DemoBuffer {
 public:
  void push_episode(const Demonstration& demo) {
    if (demo.transitions.empty()) throw ValidationError("cannot push an empty demonstration");
    if (!demo.success || !ends_in_goal(demo.transitions)) {
      throw ValidationError("demo buffer only accepts successful demonstrations");
    }
    episode_start_.push_back(transitions_.size());
    transitions_.insert(transitions_.end(), demo.transitions.begin(), demo.transitions.end());
    demos_.push_back(demo);
  }

  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  std::size_t num_episodes() const { return demos_.size(); }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }
  const std::vector<Demonstration>& episodes() const { return demos_; }
  std::size_t episode_start(std::size_t e) const { return episode_start_[e]; }

 private:
  std::vector<Demonstration> demos_;
  std::vector<Transition> transitions_;
  std::vector<std::size_t> episode_start_;
};

enum class SampleSource : std::uint8_t { Demo, Rollout };

struct SampledTransition {
  const Transition* transition;
  SampleSource source;
};

/// Half demo / half roll-out uniform draws with replacement. Falls back to a single
/// source when the other is empty.
inline std::vector<SampledTransition> sample_balanced(const DemoBuffer& demo, const ReplayBuffer& rollout,
                                                      std::size_t batch, Rng& rng) {
  if (demo.empty() && rollout.empty()) throw ValidationError("sample_balanced: both buffers are empty");
  if (batch % 2 != 0) throw ValidationError("sample_balanced: batch size must be even");
  std::size_t n_demo = batch / 2;
  if (rollout.empty()) n_demo = batch;
  if (demo.empty()) n_demo = 0;
  std::vector<SampledTransition> out;
  out.reserve(batch);
  if (n_demo > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, demo.size() - 1);
    for (std::size_t i = 0; i < n_demo; ++i) out.push_back({&demo[pick(rng)], SampleSource::Demo});
  }
  if (n_demo < batch) {
    std::uniform_int_distribution<std::size_t> pick(0, rollout.size() - 1);
    for (std::size_t i = n_demo; i < batch; ++i) out.push_back({&rollout[pick(rng)], SampleSource::Rollout});
  }
  return out;
}

}  // namespace acl
