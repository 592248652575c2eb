#pragma once

#include <cmath>
#include <vector>

#include "tdi/nn/modules.hpp"

namespace tdi::nn {

// Adaptive-moment optimizer over a fixed parameter list.
template <class T>
class Adam {
public:
    Adam() = default;

    Adam(std::vector<NamedParam<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
         T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.var->val.n, p.var->val.c, p.var->val.h, p.var->val.w, T(0));
            v_.emplace_back(p.var->val.n, p.var->val.c, p.var->val.h, p.var->val.w, T(0));
        }
    }

    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }
    const std::vector<NamedParam<T>>& params() const { return params_; }

    void zero_grad() { zero_param_grads(params_); }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, T(t_));
        const T bc2 = T(1) - std::pow(beta2_, T(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].var;
            p->ensure_grad();
            for (size_t k = 0; k < p->val.size(); ++k) {
                T g = p->grad.v[k];
                m_[i].v[k] = beta1_ * m_[i].v[k] + (T(1) - beta1_) * g;
                v_[i].v[k] = beta2_ * v_[i].v[k] + (T(1) - beta2_) * g * g;
                T mhat = m_[i].v[k] / bc1;
                T vhat = v_[i].v[k] / bc2;
                p->val.v[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    std::vector<NamedParam<T>> params_;
    std::vector<Tensor<T>> m_, v_;
    T lr_ = T(1e-3), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
    long t_ = 0;
};

} // namespace tdi::nn
