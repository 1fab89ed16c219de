#pragma once

#include <cstddef>
#include <vector>

#include "sfdqn/mdp.hpp"
#include "sfdqn/rng.hpp"

namespace sfdqn {

/// Bounded FIFO of transitions. Sampling is uniform with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  /// Throws StateError on an empty buffer.
  std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const;
  void sample_into(std::size_t batch_size, Rng& rng, std::vector<Transition>& out) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return storage_.size(); }
  bool empty() const { return size_ == 0; }
  void clear();

  /// Oldest first.
  std::vector<Transition> contents() const;
  const Transition& at(std::size_t i) const;  // i = 0 is the oldest

 private:
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // slot of the oldest item
  std::size_t size_ = 0;
};

}  // namespace sfdqn
