#include "puray/param_store.hpp"

#include <algorithm>
#include <stdexcept>

namespace puray::ad {

Tensor& ParamStore::add(const std::string& name, std::vector<int> shape) {
  if (index_.contains(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(t.count(), 0.0);
  t.grad.assign(t.count(), 0.0);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
  return entries_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const { return index_.contains(name); }

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.count());
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : entries_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

}  // namespace puray::ad
