#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include "impact/errors.hpp"

namespace impact {

/// Circular buffer C(N, K): N slots of train batches, each served at most K
/// times.
///
/// Producers (workers) push whole batches; a single consumer (the learner)
/// samples uniformly among slots that still have traversals left. A push
/// fills an empty slot, else replaces an exhausted one (oldest first). With
/// every slot live, the producer blocks until the learner exhausts one, unless
/// `allow_stale_evict` is set, in which case the slot with the highest
/// traversal count (oldest on ties) is dropped.
///
/// `Annotation` is the per-batch data attached by the consumer at the first
/// traversal (target-network outputs).
template <typename Batch, typename Annotation>
class CircularBuffer {
 public:
  struct Entry {
    Batch batch;
    std::optional<Annotation> annotation;
    std::uint64_t id = 0;
  };

  /// One draw. `traversals` is the count before this draw, so 0 means the
  /// caller must attach the annotation.
  struct Draw {
    std::shared_ptr<Entry> entry;
    int traversals = 0;
    std::size_t slot = 0;
  };

  /// Called under the buffer lock whenever a batch leaves the buffer, with
  /// its id and final traversal count.
  using EvictionObserver = std::function<void(std::uint64_t id, int traversals)>;

  CircularBuffer(int slots, int max_traversals, bool allow_stale_evict = false, std::uint64_t seed = 0)
      : max_traversals_(max_traversals), allow_stale_evict_(allow_stale_evict), rng_(seed) {
    if (slots < 1) throw ConfigError("circular buffer needs at least one slot");
    if (max_traversals < 1) throw ConfigError("circular buffer needs K >= 1");
    slots_.resize(static_cast<std::size_t>(slots));
  }

  CircularBuffer(const CircularBuffer&) = delete;
  CircularBuffer& operator=(const CircularBuffer&) = delete;

  int capacity() const { return static_cast<int>(slots_.size()); }
  int max_traversals() const { return max_traversals_; }

  void set_eviction_observer(EvictionObserver observer) {
    std::lock_guard lock(mutex_);
    observer_ = std::move(observer);
  }

  /// Blocks under back-pressure. Returns false if the buffer was closed
  /// before the batch could be stored.
  bool push(Batch batch) {
    std::unique_lock lock(mutex_);
    can_push_.wait(lock, [&] { return closed_ || push_slot().has_value(); });
    if (closed_) return false;
    store(*push_slot(), std::move(batch));
    lock.unlock();
    can_sample_.notify_one();
    return true;
  }

  /// Non-blocking push; returns false (leaving `batch` untouched) when it
  /// would block.
  bool try_push(Batch& batch) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return false;
      const auto slot = push_slot();
      if (!slot) return false;
      store(*slot, std::move(batch));
    }
    can_sample_.notify_one();
    return true;
  }

  /// Blocks until a slot is eligible. Returns nullopt once the buffer is
  /// finished and drained, or shut down.
  std::optional<Draw> sample() {
    std::unique_lock lock(mutex_);
    can_sample_.wait(lock, [&] { return shutdown_ || eligible_count() > 0 || finished_; });
    if (shutdown_ || eligible_count() == 0) return std::nullopt;
    return draw(lock);
  }

  /// Non-blocking sample.
  std::optional<Draw> try_sample() {
    std::unique_lock lock(mutex_);
    if (shutdown_ || eligible_count() == 0) return std::nullopt;
    return draw(lock);
  }

  /// Producers are done: pushes fail, sample drains the remaining eligible
  /// slots and then returns nullopt.
  void finish() {
    {
      std::lock_guard lock(mutex_);
      finished_ = true;
      closed_ = true;
    }
    can_push_.notify_all();
    can_sample_.notify_all();
  }

  /// Stop immediately on both sides.
  void shutdown() {
    {
      std::lock_guard lock(mutex_);
      shutdown_ = true;
      finished_ = true;
      closed_ = true;
    }
    can_push_.notify_all();
    can_sample_.notify_all();
  }

  /// Slots holding a batch with traversals left.
  int live_slots() const {
    std::lock_guard lock(mutex_);
    return eligible_count();
  }

  bool can_push() const {
    std::lock_guard lock(mutex_);
    return !closed_ && push_slot().has_value();
  }

  /// Traversal count per slot; -1 for an empty slot.
  std::vector<int> traversal_counts() const {
    std::lock_guard lock(mutex_);
    std::vector<int> out;
    for (const auto& s : slots_) out.push_back(s.entry ? s.traversals : -1);
    return out;
  }

 private:
  struct Slot {
    std::shared_ptr<Entry> entry;
    int traversals = 0;
    std::uint64_t sequence = 0;
  };

  int eligible_count() const {
    int n = 0;
    for (const auto& s : slots_) n += (s.entry && s.traversals < max_traversals_) ? 1 : 0;
    return n;
  }

  std::optional<std::size_t> push_slot() const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (!slots_[i].entry) return i;
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      const Slot& s = slots_[i];
      if (s.traversals < max_traversals_ && !allow_stale_evict_) continue;
      if (!best || s.traversals > slots_[*best].traversals ||
          (s.traversals == slots_[*best].traversals && s.sequence < slots_[*best].sequence)) {
        best = i;
      }
    }
    return best;
  }

  void store(std::size_t i, Batch&& batch) {
    Slot& s = slots_[i];
    if (s.entry && observer_) observer_(s.entry->id, s.traversals);
    s.entry = std::make_shared<Entry>(Entry{std::move(batch), std::nullopt, next_id_++});
    s.traversals = 0;
    s.sequence = next_sequence_++;
  }

  Draw draw(std::unique_lock<std::mutex>& lock) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i].entry && slots_[i].traversals < max_traversals_) eligible.push_back(i);
    }
    std::size_t pick = eligible.front();
    if (eligible.size() > 1) {
      std::uniform_int_distribution<std::size_t> uniform(0, eligible.size() - 1);
      pick = eligible[uniform(rng_)];
    }
    Slot& s = slots_[pick];
    Draw out{s.entry, s.traversals, pick};
    ++s.traversals;
    const bool exhausted = s.traversals == max_traversals_;
    lock.unlock();
    if (exhausted) can_push_.notify_all();
    return out;
  }

  int max_traversals_;
  bool allow_stale_evict_;
  std::mt19937_64 rng_;
  std::vector<Slot> slots_;
  std::uint64_t next_id_ = 0;
  std::uint64_t next_sequence_ = 0;
  bool closed_ = false;
  bool finished_ = false;
  bool shutdown_ = false;
  EvictionObserver observer_;
  mutable std::mutex mutex_;
  std::condition_variable can_push_;
  std::condition_variable can_sample_;
};

}  // namespace impact
