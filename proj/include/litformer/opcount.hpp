#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lit {

// Multiply-accumulate ledger. One MAC is one multiply (fused with its
// accumulate where one exists), which is the granularity of the analytic
// complexity formulas. Comparisons, plain adds and data movement count zero.
struct OpCounter {
  std::uint64_t mac_count = 0;
  std::map<std::string, std::uint64_t> per_op_breakdown;

  void add(const std::string& key, std::uint64_t macs) {
    mac_count += macs;
    per_op_breakdown[key] += macs;
  }

  // Sum of every entry whose key starts with the given prefix.
  std::uint64_t prefix_total(const std::string& prefix) const {
    std::uint64_t total = 0;
    for (const auto& [key, macs] : per_op_breakdown) {
      if (key.compare(0, prefix.size(), prefix) == 0) total += macs;
    }
    return total;
  }
};

namespace detail {
inline thread_local OpCounter* active_counter = nullptr;
inline thread_local std::vector<std::string> scope_stack;
}  // namespace detail

inline OpCounter* active_op_counter() { return detail::active_counter; }

// Record macs under the current scope path. No-op when no counter is attached.
inline void count_macs(std::uint64_t macs, const char* tag = nullptr) {
  OpCounter* c = detail::active_counter;
  if (!c || macs == 0) return;
  std::string key = detail::scope_stack.empty() ? std::string() : detail::scope_stack.back();
  if (tag) {
    key += '#';
    key += tag;
  }
  c->add(key, macs);
}

// Attach a counter for the lifetime of the scope.
class ScopedCounter {
 public:
  explicit ScopedCounter(OpCounter& counter) : previous_(detail::active_counter) {
    detail::active_counter = &counter;
  }
  ~ScopedCounter() { detail::active_counter = previous_; }
  ScopedCounter(const ScopedCounter&) = delete;
  ScopedCounter& operator=(const ScopedCounter&) = delete;

 private:
  OpCounter* previous_;
};

// Pushes a path component ("enc1", "attn", "q_pw", ...) onto the scope used
// to key MAC entries. Cheap when no counter is attached.
class OpScope {
 public:
  explicit OpScope(const std::string& name) {
    if (!detail::active_counter) return;
    pushed_ = true;
    if (detail::scope_stack.empty()) {
      detail::scope_stack.push_back(name);
    } else {
      detail::scope_stack.push_back(detail::scope_stack.back() + "/" + name);
    }
  }
  ~OpScope() {
    if (pushed_) detail::scope_stack.pop_back();
  }
  OpScope(const OpScope&) = delete;
  OpScope& operator=(const OpScope&) = delete;

 private:
  bool pushed_ = false;
};

}  // namespace lit
