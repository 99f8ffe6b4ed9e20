#include "dskt/optim.hpp"

#include <cmath>

namespace dskt {

int ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  names_.push_back(name);
  tensors_.push_back(std::move(init));
  index_[name] = static_cast<int>(tensors_.size()) - 1;
  return index_[name];
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

long long ParamStore::total_parameters() const {
  long long n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

void adamw_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
                const AdamWConfig& cfg) {
  if (!param.same_shape(grad)) throw ShapeError("adamw_step: grad shape mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * grad.data[i];
    v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * grad.data[i] * grad.data[i];
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    param.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    param.data[i] -= cfg.lr * cfg.weight_decay * param.data[i];
  }
}

void AdamW::step(ParamStore& store, const std::vector<Tensor>& grads) {
  if (static_cast<int>(grads.size()) != store.size())
    throw ShapeError("AdamW::step: gradient count mismatch");
  if (m_.empty()) {
    m_.resize(store.size());
    v_.resize(store.size());
    for (int i = 0; i < store.size(); ++i) {
      m_[i] = Tensor(store.tensor(i).shape);
      v_[i] = Tensor(store.tensor(i).shape);
    }
  }
  ++t_;
  for (int i = 0; i < store.size(); ++i) {
    if (grads[i].data.empty()) {
      // No gradient contribution this step: still apply decoupled decay.
      Tensor zero(store.tensor(i).shape);
      adamw_step(store.tensor(i), zero, m_[i], v_[i], t_, cfg_);
    } else {
      adamw_step(store.tensor(i), grads[i], m_[i], v_[i], t_, cfg_);
    }
  }
}

void sgd_step(Tensor& param, const Tensor& grad, double lr, double weight_decay) {
  if (!param.same_shape(grad)) throw ShapeError("sgd_step: grad shape mismatch");
  for (std::size_t i = 0; i < param.data.size(); ++i)
    param.data[i] -= lr * grad.data[i] + lr * weight_decay * param.data[i];
}

}  // namespace dskt
