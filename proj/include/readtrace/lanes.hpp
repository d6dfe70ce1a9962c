#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

namespace readtrace {

/// Runs posted tasks one at a time, in order, on a dedicated thread.
/// The first exception thrown by a task is rethrown from drain().
class SerialLane {
 public:
  SerialLane();
  ~SerialLane();
  SerialLane(const SerialLane&) = delete;
  SerialLane& operator=(const SerialLane&) = delete;

  void post(std::function<void()> task);
  /// Blocks until every task posted so far has run.
  void drain();

 private:
  void run();

  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<std::function<void()>> tasks_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::exception_ptr failure_;
  std::thread worker_;
};

/// Multi-producer, single-consumer queue with a capacity. When full, the
/// oldest element satisfying `Droppable` is discarded to make room; if no
/// element qualifies the push goes through anyway.
template <typename T, typename Droppable>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity, Droppable droppable = {})
      : capacity_(capacity == 0 ? 1 : capacity), droppable_(std::move(droppable)) {}

  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      if (items_.size() >= capacity_) {
        for (auto it = items_.begin(); it != items_.end(); ++it) {
          if (droppable_(*it)) {
            items_.erase(it);
            ++dropped_;
            break;
          }
        }
      }
      items_.push_back(std::move(value));
    }
    ready_.notify_one();
  }

  /// Waits for an element; returns nullopt once closed and empty, or on timeout.
  std::optional<T> pop(std::optional<std::chrono::milliseconds> timeout = std::nullopt) {
    std::unique_lock lock(mutex_);
    auto ready = [&] { return !items_.empty() || closed_; };
    if (timeout) {
      if (!ready_.wait_for(lock, *timeout, ready)) return std::nullopt;
    } else {
      ready_.wait(lock, ready);
    }
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    ready_.notify_all();
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

 private:
  const std::size_t capacity_;
  Droppable droppable_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<T> items_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

}  // namespace readtrace
