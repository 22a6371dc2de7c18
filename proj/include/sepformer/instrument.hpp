#pragma once

// Process-local instrumentation shared by every numeric op: a counting
// allocator that tracks live and peak bytes, and a multiply-accumulate
// counter that kernels bump when profiling is enabled. Both are
// thread_local, so concurrent model runs never see each other's counts.

#include <cstddef>
#include <cstdint>
#include <new>

namespace sepformer {

struct ArenaStats {
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
  std::size_t largest_allocation = 0;
  std::uint64_t allocations = 0;
};

ArenaStats& arena_stats();

void arena_on_allocate(std::size_t bytes);
void arena_on_deallocate(std::size_t bytes);

// Records the peak of live bytes above the level at construction.
class ArenaScope {
 public:
  ArenaScope();
  ~ArenaScope();
  ArenaScope(const ArenaScope&) = delete;
  ArenaScope& operator=(const ArenaScope&) = delete;

  std::size_t peak_bytes() const;
  std::size_t largest_allocation() const;

 private:
  ArenaStats saved_;
  std::size_t baseline_;
};

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    arena_on_allocate(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    arena_on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

enum class MacCategory : int { kOther = 0, kAttention = 1 };

struct MacCounts {
  std::uint64_t other = 0;
  std::uint64_t attention = 0;
  std::uint64_t total() const { return other + attention; }
};

bool mac_counting_enabled();
void add_macs(std::uint64_t n);

// Enables MAC counting on this thread for its lifetime and starts from zero.
class MacCounterScope {
 public:
  MacCounterScope();
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

  MacCounts counts() const;

 private:
  bool was_enabled_;
  MacCounts saved_;
};

// Attributes MACs issued inside the scope to `category`.
class MacCategoryScope {
 public:
  explicit MacCategoryScope(MacCategory category);
  ~MacCategoryScope();
  MacCategoryScope(const MacCategoryScope&) = delete;
  MacCategoryScope& operator=(const MacCategoryScope&) = delete;

 private:
  MacCategory previous_;
};

}  // namespace sepformer
