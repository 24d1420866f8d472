#pragma once

#include <map>
#include <string>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"

namespace stf::ad {

// Named learnable arrays with persistent gradient buffers. Registration order
// is stable, which fixes both initialization draws and update order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    DenseArray value;
    DenseArray grad;
  };

  long add(const std::string& name, DenseArray value) {
    if (index_.count(name)) throw ConfigError("parameter registered twice: " + name);
    const long id = static_cast<long>(entries_.size());
    DenseArray g(value.shape());
    entries_.push_back(Entry{name, std::move(value), std::move(g)});
    index_[name] = id;
    return id;
  }

  long size() const { return static_cast<long>(entries_.size()); }

  Entry& entry(long id) { return entries_[static_cast<std::size_t>(id)]; }
  const Entry& entry(long id) const { return entries_[static_cast<std::size_t>(id)]; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  long id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  DenseArray& value(const std::string& name) { return entries_[static_cast<std::size_t>(id_of(name))].value; }
  DenseArray& grad(const std::string& name) { return entries_[static_cast<std::size_t>(id_of(name))].grad; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  long total_parameters() const {
    long n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  std::vector<DenseArray> snapshot_values() const {
    std::vector<DenseArray> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
  }

  void restore_values(const std::vector<DenseArray>& vals) {
    if (vals.size() != entries_.size()) throw DimensionError("restore_values: size mismatch");
    for (std::size_t i = 0; i < vals.size(); ++i) entries_[i].value = vals[i];
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, long> index_;
};

}  // namespace stf::ad
