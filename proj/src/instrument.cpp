#include "sepformer/instrument.hpp"

#include <algorithm>

namespace sepformer {
namespace {

struct MacState {
  bool enabled = false;
  MacCategory category = MacCategory::kOther;
  MacCounts counts;
};

thread_local ArenaStats t_arena;
thread_local MacState t_macs;

}  // namespace

ArenaStats& arena_stats() { return t_arena; }

void arena_on_allocate(std::size_t bytes) {
  t_arena.live_bytes += bytes;
  t_arena.peak_bytes = std::max(t_arena.peak_bytes, t_arena.live_bytes);
  t_arena.largest_allocation = std::max(t_arena.largest_allocation, bytes);
  ++t_arena.allocations;
}

void arena_on_deallocate(std::size_t bytes) {
  // Buffers may be released on a different thread than the one that
  // allocated them; never let the live count wrap.
  t_arena.live_bytes -= std::min(bytes, t_arena.live_bytes);
}

ArenaScope::ArenaScope() : saved_(t_arena), baseline_(t_arena.live_bytes) {
  t_arena.peak_bytes = t_arena.live_bytes;
  t_arena.largest_allocation = 0;
}

ArenaScope::~ArenaScope() {
  t_arena.peak_bytes = std::max(saved_.peak_bytes, t_arena.peak_bytes);
  t_arena.largest_allocation =
      std::max(saved_.largest_allocation, t_arena.largest_allocation);
}

std::size_t ArenaScope::peak_bytes() const {
  return t_arena.peak_bytes - std::min(baseline_, t_arena.peak_bytes);
}

std::size_t ArenaScope::largest_allocation() const {
  return t_arena.largest_allocation;
}

bool mac_counting_enabled() { return t_macs.enabled; }

void add_macs(std::uint64_t n) {
  if (!t_macs.enabled) return;
  if (t_macs.category == MacCategory::kAttention) {
    t_macs.counts.attention += n;
  } else {
    t_macs.counts.other += n;
  }
}

MacCounterScope::MacCounterScope()
    : was_enabled_(t_macs.enabled), saved_(t_macs.counts) {
  t_macs.enabled = true;
  t_macs.counts = {};
}

MacCounterScope::~MacCounterScope() {
  t_macs.enabled = was_enabled_;
  t_macs.counts = saved_;
}

MacCounts MacCounterScope::counts() const { return t_macs.counts; }

MacCategoryScope::MacCategoryScope(MacCategory category)
    : previous_(t_macs.category) {
  t_macs.category = category;
}

MacCategoryScope::~MacCategoryScope() { t_macs.category = previous_; }

}  // namespace sepformer
