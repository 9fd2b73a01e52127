// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>

#include "posebridge/error.hpp"

namespace posebridge {

template <class T>
struct Taken {
  T value;
  std::uint64_t seq = 0;  // mailbox-assigned, strictly increasing per mailbox
};

namespace detail {

template <class T>
struct MailboxState {
  std::mutex mu;
  std::condition_variable cv;
  std::optional<Taken<T>> slot;
  std::uint64_t next_seq = 1;
  std::uint64_t puts = 0;
  std::uint64_t takes = 0;
  std::uint64_t drops = 0;
  bool writer_open = true;
  bool reader_open = true;
};

}  // namespace detail

struct MailboxCounters {
  std::uint64_t puts = 0;
  std::uint64_t takes = 0;
  std::uint64_t drops = 0;
};

/// Latest-value channel of depth one. A put overwrites any unread message
/// (counted as a drop); a take empties the slot.
template <class T>
class MailboxWriter {
 public:
  explicit MailboxWriter(std::shared_ptr<detail::MailboxState<T>> s) : s_(std::move(s)) {}
  MailboxWriter(MailboxWriter&&) noexcept = default;
  MailboxWriter& operator=(MailboxWriter&& o) noexcept {
    if (this != &o) {
      close();
      s_ = std::move(o.s_);
    }
    return *this;
  }
  ~MailboxWriter() { close(); }

  /// Returns true when an unread message was overwritten.
  bool put(T value) {
    std::lock_guard lock(s_->mu);
    if (!s_->reader_open) throw Error(ErrorCode::Disconnected, "mailbox reader is gone");
    const bool overwrote = s_->slot.has_value();
    if (overwrote) ++s_->drops;
    s_->slot.emplace(Taken<T>{std::move(value), s_->next_seq++});
    ++s_->puts;
    s_->cv.notify_all();
    return overwrote;
  }

  void close() {
    if (!s_) return;
    std::lock_guard lock(s_->mu);
    s_->writer_open = false;
    s_->cv.notify_all();
  }

  bool reader_open() const {
    std::lock_guard lock(s_->mu);
    return s_->reader_open;
  }

 private:
  std::shared_ptr<detail::MailboxState<T>> s_;
};

template <class T>
class MailboxReader {
 public:
  explicit MailboxReader(std::shared_ptr<detail::MailboxState<T>> s) : s_(std::move(s)) {}
  MailboxReader(MailboxReader&&) noexcept = default;
  MailboxReader& operator=(MailboxReader&& o) noexcept {
    if (this != &o) {
      close();
      s_ = std::move(o.s_);
    }
    return *this;
  }
  ~MailboxReader() { close(); }

  /// Non-blocking. Empty result when nothing is waiting; throws Disconnected
  /// once the writer is gone and the slot is drained.
  std::optional<Taken<T>> try_take() {
    std::lock_guard lock(s_->mu);
    return take_locked();
  }

  /// Blocks up to `timeout` for a message.
  template <class Rep, class Period>
  std::optional<Taken<T>> take_for(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(s_->mu);
    s_->cv.wait_for(lock, timeout, [&] { return s_->slot.has_value() || !s_->writer_open; });
    return take_locked();
  }

  void close() {
    if (!s_) return;
    std::lock_guard lock(s_->mu);
    s_->reader_open = false;
    s_->slot.reset();
  }

  MailboxCounters counters() const {
    std::lock_guard lock(s_->mu);
    return {s_->puts, s_->takes, s_->drops};
  }

 private:
  std::optional<Taken<T>> take_locked() {
    if (s_->slot) {
      std::optional<Taken<T>> out = std::move(s_->slot);
      s_->slot.reset();
      ++s_->takes;
      return out;
    }
    if (!s_->writer_open) throw Error(ErrorCode::Disconnected, "mailbox writer is gone");
    return std::nullopt;
  }

  std::shared_ptr<detail::MailboxState<T>> s_;
};

template <class T>
std::pair<MailboxWriter<T>, MailboxReader<T>> make_mailbox() {
  auto s = std::make_shared<detail::MailboxState<T>>();
  return {MailboxWriter<T>(s), MailboxReader<T>(s)};
}

}  // namespace posebridge
