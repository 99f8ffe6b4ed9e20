#pragma once

#include <map>
#include <string>
#include <vector>

#include "dskt/tensor.hpp"

namespace dskt {

// Named parameter set with per-tensor optimizer state. Iteration order is
// insertion order so that training runs are reproducible.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init);
  int index_of(const std::string& name) const;
  bool has(const std::string& name) const;

  int size() const { return static_cast<int>(tensors_.size()); }
  const std::string& name(int i) const { return names_[i]; }
  Tensor& tensor(int i) { return tensors_[i]; }
  const Tensor& tensor(int i) const { return tensors_[i]; }
  Tensor& tensor(const std::string& name) { return tensors_[index_of(name)]; }

  long long total_parameters() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, int> index_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay. Keeps first/second moment buffers and a
// shared step counter; one instance drives one ParamStore.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  AdamWConfig& config() { return cfg_; }

  // grads[i] pairs with store.tensor(i); missing gradients may be empty.
  void step(ParamStore& store, const std::vector<Tensor>& grads);

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
};

// Plain SGD with decoupled weight decay, used by small tests.
void sgd_step(Tensor& param, const Tensor& grad, double lr, double weight_decay = 0.0);

// Single AdamW update on one tensor with caller-owned moments (exposed for
// the optimizer unit tests).
void adamw_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
                const AdamWConfig& cfg);

}  // namespace dskt
