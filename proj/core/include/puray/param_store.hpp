#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace puray::ad {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = true;

  std::int64_t count() const {
    std::int64_t c = 1;
    for (int d : shape) c *= d;
    return c;
  }
};

// Named trainable tensors in stable insertion order; the order defines the
// optimizer-state and checkpoint layout.
class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> shape);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& tensor(std::size_t i) { return entries_[i].second; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].second; }

  std::size_t total_count() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace puray::ad
