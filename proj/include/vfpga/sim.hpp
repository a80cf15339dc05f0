// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vfpga
{

/// Virtual time is kept in integer picoseconds so that runs are exactly
/// reproducible and accounting identities hold without rounding slop.
using Duration = std::chrono::duration<std::int64_t, std::pico>;
using SimTime = Duration;

inline constexpr SimTime kNever = Duration::max();
inline constexpr std::int64_t kPicosPerSecond = 1'000'000'000'000;

namespace detail
{

inline std::int64_t ceil_div_u128(unsigned __int128 num, std::uint64_t den)
{
  if (den == 0)
    throw std::invalid_argument("zero rate");
  auto q = num / den;
  if (num % den != 0)
    ++q;
  if (q > static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max()))
    throw std::overflow_error("virtual time overflow");
  return static_cast<std::int64_t>(q);
}

} // namespace detail

/// Time to move `bytes` at `bytes_per_sec`, rounded up to a whole picosecond.
inline Duration transfer_time(std::uint64_t bytes, std::uint64_t bytes_per_sec)
{
  return Duration(detail::ceil_div_u128(static_cast<unsigned __int128>(bytes) * kPicosPerSecond,
                                        bytes_per_sec));
}

/// Time for `cycles` clock periods at `hz`, rounded up.
inline Duration cycles_time(std::uint64_t cycles, std::uint64_t hz)
{ return transfer_time(cycles, hz); }

inline Duration from_seconds(double s)
{ return Duration(std::llround(s * static_cast<double>(kPicosPerSecond))); }

inline double to_seconds(Duration d)
{ return static_cast<double>(d.count()) / static_cast<double>(kPicosPerSecond); }

/// Discrete-event core. Events run in (time, insertion order); virtual time
/// never decreases.
class Simulator
{
public:
  using Action = std::function<void()>;

  SimTime now() const
  { return now_; }

  void schedule_at(SimTime t, Action action)
  {
    if (t < now_)
      throw std::logic_error("event scheduled in the past");
    queue_.push_back(Entry{t, next_seq_++, std::move(action)});
    std::push_heap(queue_.begin(), queue_.end(), later);
  }

  void schedule_in(Duration d, Action action)
  { schedule_at(now_ + d, std::move(action)); }

  bool empty() const
  { return queue_.empty(); }

  std::size_t pending() const
  { return queue_.size(); }

  SimTime next_time() const
  { return queue_.empty() ? kNever : queue_.front().time; }

  /// Run the earliest event. Returns false on an empty queue.
  bool step()
  {
    if (queue_.empty())
      return false;
    std::pop_heap(queue_.begin(), queue_.end(), later);
    Entry e = std::move(queue_.back());
    queue_.pop_back();
    now_ = e.time;
    ++executed_;
    e.action();
    return true;
  }

  /// Run every event at or before `t`, then move the clock to `t`.
  void advance_to(SimTime t)
  {
    while (!queue_.empty() && queue_.front().time <= t)
      step();
    if (t > now_ && t != kNever)
      now_ = t;
  }

  /// Run events until `done()` holds or the queue drains. Returns done().
  template <typename Pred>
  bool run_until(Pred&& done)
  {
    while (!done())
      if (!step())
        return done();
    return true;
  }

  void run()
  { while (step()) { } }

  std::uint64_t executed() const
  { return executed_; }

private:
  struct Entry
  {
    SimTime time;
    std::uint64_t seq;
    Action action;
  };

  static bool later(const Entry& a, const Entry& b)
  {
    if (a.time != b.time)
      return a.time > b.time;
    return a.seq > b.seq;
  }

  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::vector<Entry> queue_;
};

} // namespace vfpga
