#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "lve/common.hpp"

namespace lve {

struct Logvar {
  Symbol name = 0;
  Symbol domain = 0;  // tag of the named constant set the variable ranges over
  bool operator==(const Logvar&) const = default;
};

using Tuple = std::vector<Symbol>;
using TupleSet = std::vector<Tuple>;  // kept sorted and duplicate-free

namespace detail {
inline void sort_unique(TupleSet& ts) {
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
}
inline std::vector<Symbol> sorted_copy(std::vector<Symbol> v) {
  std::sort(v.begin(), v.end());
  return v;
}
}  // namespace detail

// Finite set of equal-arity constant tuples over a logvar schema. Cartesian
// products of per-column constant lists keep a factored representation and
// expand lazily; everything else is an explicit tuple set.
class Constraint {
 public:
  Constraint() : is_product_(true) {}  // unit: arity 0, one empty tuple

  static Constraint product(std::vector<Logvar> schema,
                            std::vector<std::vector<Symbol>> columns) {
    if (schema.size() != columns.size())
      throw SchemaError("constraint: schema/column count mismatch");
    Constraint c;
    c.schema_ = std::move(schema);
    c.is_product_ = true;
    c.columns_ = std::move(columns);
    for (auto& col : c.columns_) {
      std::set<Symbol> seen;
      std::vector<Symbol> deduped;
      deduped.reserve(col.size());
      for (Symbol s : col)
        if (seen.insert(s).second) deduped.push_back(s);
      if (deduped.size() != col.size()) col = std::move(deduped);
    }
    return c;
  }

  static Constraint explicit_set(std::vector<Logvar> schema, TupleSet tuples) {
    Constraint c;
    c.schema_ = std::move(schema);
    c.is_product_ = false;
    for (const auto& t : tuples)
      if (t.size() != c.schema_.size())
        throw SchemaError("constraint: tuple arity mismatch");
    detail::sort_unique(tuples);
    c.tuples_ = std::move(tuples);
    return c;
  }

  static Constraint unit() { return Constraint(); }

  static Constraint none(std::vector<Logvar> schema) {
    Constraint c;
    c.schema_ = std::move(schema);
    c.is_product_ = false;
    return c;
  }

  const std::vector<Logvar>& schema() const { return schema_; }
  size_t arity() const { return schema_.size(); }
  bool is_product() const { return is_product_; }

  int column_of(Symbol name) const {
    for (size_t i = 0; i < schema_.size(); ++i)
      if (schema_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int require_column(Symbol name) const {
    int c = column_of(name);
    if (c < 0)
      throw SchemaError("unknown logvar in constraint: " + sym_name(name));
    return c;
  }

  uint64_t size() const {
    if (!is_product_) return tuples_.size();
    uint64_t n = 1;
    for (const auto& col : columns_) n = checked_mul(n, col.size());
    return n;
  }

  bool empty() const { return size() == 0; }

  const std::vector<Symbol>& column_values(int col) const {
    if (!is_product_) throw SchemaError("column_values on explicit constraint");
    return columns_[col];
  }

  bool contains(const Tuple& t) const {
    if (t.size() != arity()) return false;
    if (is_product_) {
      for (size_t i = 0; i < t.size(); ++i) {
        const auto& col = columns_[i];
        if (std::find(col.begin(), col.end(), t[i]) == col.end()) return false;
      }
      return true;
    }
    return std::binary_search(tuples_.begin(), tuples_.end(), t);
  }

  void for_each(const std::function<void(const Tuple&)>& fn) const {
    if (!is_product_) {
      for (const auto& t : tuples_) fn(t);
      return;
    }
    if (empty()) return;
    Tuple t(arity());
    std::vector<size_t> idx(arity(), 0);
    for (size_t i = 0; i < arity(); ++i) t[i] = columns_[i][0];
    while (true) {
      fn(t);
      size_t k = arity();
      while (k > 0) {
        --k;
        if (++idx[k] < columns_[k].size()) {
          t[k] = columns_[k][idx[k]];
          break;
        }
        idx[k] = 0;
        t[k] = columns_[k][0];
        if (k == 0) return;
      }
      if (arity() == 0) return;
    }
  }

  TupleSet tuples() const {
    TupleSet out;
    out.reserve(size());
    for_each([&](const Tuple& t) { out.push_back(t); });
    detail::sort_unique(out);
    return out;
  }

  // Relational projection: distinct tuples restricted to vars, in vars order.
  Constraint project(const std::vector<Symbol>& vars) const {
    std::vector<int> cols;
    std::vector<Logvar> sub;
    cols.reserve(vars.size());
    for (Symbol v : vars) {
      int c = require_column(v);
      cols.push_back(c);
      sub.push_back(schema_[c]);
    }
    if (is_product_) {
      bool distinct_cols = true;
      std::set<int> seen(cols.begin(), cols.end());
      distinct_cols = seen.size() == cols.size();
      if (distinct_cols) {
        if (empty()) return none(std::move(sub));
        std::vector<std::vector<Symbol>> picked;
        picked.reserve(cols.size());
        for (int c : cols) picked.push_back(columns_[c]);
        return product(std::move(sub), std::move(picked));
      }
    }
    TupleSet out;
    for_each([&](const Tuple& t) {
      Tuple p(cols.size());
      for (size_t i = 0; i < cols.size(); ++i) p[i] = t[cols[i]];
      out.push_back(std::move(p));
    });
    return explicit_set(std::move(sub), std::move(out));
  }

  // Relational selection: tuples agreeing with the bindings, schema unchanged.
  Constraint select(const std::vector<std::pair<Symbol, Symbol>>& bindings) const {
    std::vector<std::pair<int, Symbol>> by_col;
    for (const auto& [var, val] : bindings)
      by_col.emplace_back(require_column(var), val);
    if (is_product_) {
      auto cols = columns_;
      for (const auto& [c, val] : by_col) {
        const auto& col = cols[c];
        if (std::find(col.begin(), col.end(), val) != col.end())
          cols[c] = {val};
        else
          cols[c] = {};
      }
      return product(schema_, std::move(cols));
    }
    TupleSet out;
    for (const auto& t : tuples_) {
      bool ok = true;
      for (const auto& [c, val] : by_col)
        if (t[c] != val) { ok = false; break; }
      if (ok) out.push_back(t);
    }
    return explicit_set(schema_, std::move(out));
  }

  // Natural join over shared logvar names; result schema is a's order first,
  // then b's extra columns. Shared logvars must draw from the same domain.
  static Constraint join(const Constraint& a, const Constraint& b) {
    std::vector<int> shared_a, shared_b;
    std::vector<int> b_extra;
    for (size_t j = 0; j < b.schema_.size(); ++j) {
      int ca = a.column_of(b.schema_[j].name);
      if (ca >= 0) {
        if (a.schema_[ca].domain != b.schema_[j].domain)
          throw SchemaError("join: shared logvar " + sym_name(b.schema_[j].name) +
                            " has mismatched domains");
        shared_a.push_back(ca);
        shared_b.push_back(static_cast<int>(j));
      } else {
        b_extra.push_back(static_cast<int>(j));
      }
    }
    std::vector<Logvar> schema = a.schema_;
    for (int j : b_extra) schema.push_back(b.schema_[j]);

    if (a.is_product_ && b.is_product_) {
      std::vector<std::vector<Symbol>> cols = a.columns_;
      for (size_t k = 0; k < shared_a.size(); ++k) {
        const auto& bcol = b.columns_[shared_b[k]];
        if (cols[shared_a[k]] == bcol) continue;  // same column, common case
        std::vector<Symbol> sorted_b = bcol;
        std::sort(sorted_b.begin(), sorted_b.end());
        std::vector<Symbol> kept;
        for (Symbol s : cols[shared_a[k]])
          if (std::binary_search(sorted_b.begin(), sorted_b.end(), s))
            kept.push_back(s);
        cols[shared_a[k]] = std::move(kept);
      }
      for (int j : b_extra) cols.push_back(b.columns_[j]);
      return product(std::move(schema), std::move(cols));
    }

    // Hash join on the shared key, b indexed.
    std::map<Tuple, TupleSet> index;
    b.for_each([&](const Tuple& t) {
      Tuple key(shared_b.size());
      for (size_t k = 0; k < shared_b.size(); ++k) key[k] = t[shared_b[k]];
      Tuple extra(b_extra.size());
      for (size_t k = 0; k < b_extra.size(); ++k) extra[k] = t[b_extra[k]];
      index[std::move(key)].push_back(std::move(extra));
    });
    TupleSet out;
    a.for_each([&](const Tuple& t) {
      Tuple key(shared_a.size());
      for (size_t k = 0; k < shared_a.size(); ++k) key[k] = t[shared_a[k]];
      auto it = index.find(key);
      if (it == index.end()) return;
      for (const auto& extra : it->second) {
        Tuple row = t;
        row.insert(row.end(), extra.begin(), extra.end());
        out.push_back(std::move(row));
      }
    });
    return explicit_set(std::move(schema), std::move(out));
  }

  // |pi_Y(sigma_{Z=pi_Z(t)}(C))|; 1 when Y is empty.
  uint64_t count_given(const std::vector<Symbol>& ys,
                       const std::vector<Symbol>& zs, const Tuple& t) const {
    if (!contains(t))
      throw SchemaError("count_given: tuple not in constraint");
    if (ys.empty()) return 1;
    std::vector<std::pair<Symbol, Symbol>> bindings;
    for (Symbol z : zs) bindings.emplace_back(z, t[require_column(z)]);
    return select(bindings).project(ys).size();
  }

  // The conditional count when Y is count-normalized w.r.t. Z; nullopt when
  // counts differ across tuples (not-normalized is a value, not an error).
  std::optional<uint64_t> conditional_count(const std::vector<Symbol>& ys,
                                            const std::vector<Symbol>& zs) const {
    if (ys.empty()) return 1;
    for (Symbol y : ys) require_column(y);
    for (Symbol z : zs) require_column(z);
    if (is_product_) {
      uint64_t n = 1;
      for (Symbol y : ys) n = checked_mul(n, columns_[require_column(y)].size());
      return n;
    }
    std::vector<int> zc, yc;
    for (Symbol z : zs) zc.push_back(require_column(z));
    for (Symbol y : ys) yc.push_back(require_column(y));
    std::map<Tuple, std::set<Tuple>> groups;
    for (const auto& t : tuples_) {
      Tuple key(zc.size()), val(yc.size());
      for (size_t i = 0; i < zc.size(); ++i) key[i] = t[zc[i]];
      for (size_t i = 0; i < yc.size(); ++i) val[i] = t[yc[i]];
      groups[key].insert(val);
    }
    std::optional<uint64_t> n;
    for (const auto& [key, vals] : groups) {
      if (!n)
        n = vals.size();
      else if (*n != vals.size())
        return std::nullopt;
    }
    return n ? n : std::optional<uint64_t>(0);
  }

  // Partition into tuples with var = a and var != a. Either part may be empty.
  std::pair<Constraint, Constraint> split_on_constant(Symbol var, Symbol a) const {
    int c = require_column(var);
    if (is_product_) {
      const auto& col = columns_[c];
      bool present = std::find(col.begin(), col.end(), a) != col.end();
      auto with_cols = columns_;
      auto without_cols = columns_;
      with_cols[c] = present ? std::vector<Symbol>{a} : std::vector<Symbol>{};
      std::vector<Symbol> rest;
      for (Symbol s : col)
        if (s != a) rest.push_back(s);
      without_cols[c] = std::move(rest);
      return {product(schema_, std::move(with_cols)),
              product(schema_, std::move(without_cols))};
    }
    TupleSet in, out;
    for (const auto& t : tuples_)
      (t[c] == a ? in : out).push_back(t);
    return {explicit_set(schema_, std::move(in)),
            explicit_set(schema_, std::move(out))};
  }

  // Rename logvars (alignment application). Domains are preserved.
  Constraint renamed(const std::map<Symbol, Symbol>& renaming) const {
    Constraint c = *this;
    for (auto& lv : c.schema_) {
      auto it = renaming.find(lv.name);
      if (it != renaming.end()) lv.name = it->second;
    }
    return c;
  }

  // Reorder schema columns to the given name order (must be a permutation).
  Constraint reordered(const std::vector<Symbol>& order) const {
    if (order.size() != arity())
      throw SchemaError("reorder: wrong column count");
    std::vector<int> cols;
    std::vector<Logvar> schema;
    for (Symbol v : order) {
      int c = require_column(v);
      cols.push_back(c);
      schema.push_back(schema_[c]);
    }
    if (is_product_) {
      std::vector<std::vector<Symbol>> picked;
      for (int c : cols) picked.push_back(columns_[c]);
      Constraint out;
      out.schema_ = std::move(schema);
      out.is_product_ = true;
      out.columns_ = std::move(picked);
      return out;
    }
    TupleSet ts;
    ts.reserve(tuples_.size());
    for (const auto& t : tuples_) {
      Tuple p(cols.size());
      for (size_t i = 0; i < cols.size(); ++i) p[i] = t[cols[i]];
      ts.push_back(std::move(p));
    }
    return explicit_set(std::move(schema), std::move(ts));
  }

  // Drop a column; resulting tuples are deduplicated (set semantics).
  Constraint dropped(Symbol var) const {
    std::vector<Symbol> rest;
    for (const auto& lv : schema_)
      if (lv.name != var) rest.push_back(lv.name);
    return project(rest);
  }

  bool same_tuples(const Constraint& other) const {
    if (arity() != other.arity()) return false;
    uint64_t s = size();
    if (s != other.size()) return false;
    if (s == 0) return true;
    if (is_product_ && other.is_product_) {
      for (size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i] == other.columns_[i]) continue;
        if (detail::sorted_copy(columns_[i]) !=
            detail::sorted_copy(other.columns_[i]))
          return false;
      }
      return true;
    }
    return tuples() == other.tuples();
  }

  bool operator==(const Constraint& other) const {
    return schema_ == other.schema_ && same_tuples(other);
  }

  bool disjoint_from(const Constraint& other) const {
    if (arity() != other.arity()) return true;
    if (empty() || other.empty()) return true;
    if (is_product_ && other.is_product_) {
      for (size_t i = 0; i < columns_.size(); ++i) {
        bool overlap = false;
        for (Symbol s : columns_[i])
          if (std::find(other.columns_[i].begin(), other.columns_[i].end(), s) !=
              other.columns_[i].end()) {
            overlap = true;
            break;
          }
        if (!overlap) return true;
      }
      // Products overlap iff every column pair overlaps.
      return false;
    }
    auto a = tuples();
    auto b = other.tuples();
    TupleSet inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(inter));
    return inter.empty();
  }

 private:
  std::vector<Logvar> schema_;
  bool is_product_;
  std::vector<std::vector<Symbol>> columns_;  // product representation
  TupleSet tuples_;                           // explicit representation
};

}  // namespace lve
