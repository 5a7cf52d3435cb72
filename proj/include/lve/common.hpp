#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lve {

// Interned identifier. Equality on symbols is equality on the spelled name.
using Symbol = uint32_t;

class SymbolTable {
 public:
  static SymbolTable& instance() {
    static SymbolTable table;
    return table;
  }

  Symbol intern(std::string_view text) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = ids_.find(std::string(text));
    if (it != ids_.end()) return it->second;
    Symbol id = static_cast<Symbol>(names_.size());
    names_.emplace_back(text);
    ids_.emplace(names_.back(), id);
    return id;
  }

  const std::string& name(Symbol s) const {
    std::lock_guard<std::mutex> lock(mu_);
    return names_.at(s);
  }

 private:
  SymbolTable() {
    // id 0 is reserved so it can serve as a null sentinel
    names_.emplace_back("");
    ids_.emplace("", 0);
  }
  std::deque<std::string> names_;
  std::unordered_map<std::string, Symbol> ids_;
  mutable std::mutex mu_;
};

inline Symbol intern(std::string_view s) { return SymbolTable::instance().intern(s); }
inline const std::string& sym_name(Symbol s) { return SymbolTable::instance().name(s); }

inline Symbol sym_false() { static Symbol s = intern("f"); return s; }
inline Symbol sym_true() { static Symbol s = intern("t"); return s; }
inline std::vector<Symbol> bool_range() { return {sym_false(), sym_true()}; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ModelError : Error { using Error::Error; };
struct ValueRangeError : Error { using Error::Error; };
struct RefusedError : Error { using Error::Error; };
struct BudgetError : Error { using Error::Error; };
struct TimeoutError : Error { using Error::Error; };
struct EvidenceError : Error { using Error::Error; };

// Cooperative wall-clock limit, threaded through all long-running loops.
class Deadline {
 public:
  Deadline() = default;
  static Deadline after_ms(int64_t ms) {
    Deadline d;
    d.at_ = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
    return d;
  }
  bool enabled() const { return at_.has_value(); }
  bool expired() const {
    return at_ && std::chrono::steady_clock::now() > *at_;
  }
  void check() const {
    if (expired()) throw TimeoutError("time limit exceeded");
  }

 private:
  std::optional<std::chrono::steady_clock::time_point> at_;
};

inline uint64_t checked_mul(uint64_t a, uint64_t b) {
  if (a != 0 && b > UINT64_MAX / a) throw BudgetError("size overflow");
  return a * b;
}

}  // namespace lve
