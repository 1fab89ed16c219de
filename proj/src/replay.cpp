#include "sfdqn/replay.hpp"

#include "sfdqn/error.hpp"

namespace sfdqn {

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
  if (capacity == 0) throw ValidationError("replay capacity must be >= 1");
  storage_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  const std::size_t n = storage_.size();
  if (size_ < n) {
    storage_[(head_ + size_) % n] = t;
    ++size_;
  } else {
    storage_[head_] = t;
    head_ = (head_ + 1) % n;
  }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ValidationError("replay index out of range");
  return storage_[(head_ + i) % storage_.size()];
}

void ReplayBuffer::sample_into(std::size_t batch_size, Rng& rng, std::vector<Transition>& out) const {
  if (size_ == 0) throw StateError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  out.resize(batch_size);
  for (auto& t : out) t = storage_[(head_ + pick(rng)) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  std::vector<Transition> out;
  sample_into(batch_size, rng, out);
  return out;
}

void ReplayBuffer::clear() {
  head_ = 0;
  size_ = 0;
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
  return out;
}

}  // namespace sfdqn
