#include "seqcluster/adam.hpp"

#include <cmath>

#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"

namespace seqcluster {

AdamState::AdamState(std::span<ad::Parameter* const> params, AdamHyper hyper,
                     LearningRateSchedule schedule)
    : params_(params.begin(), params.end()), hyper_(hyper), schedule_(schedule) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void AdamState::update(std::size_t epoch_index) { update_with_lr(schedule_.at(epoch_index)); }

void AdamState::update_with_lr(double lr) {
  for (const ad::Parameter* p : params_) {
    if (!p->has_grad()) throw StateError("adam: parameter '" + p->name + "' has no gradient");
    if (!p->grad.same_shape(p->value)) {
      throw StateError("adam: gradient shape mismatch for '" + p->name + "'");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const kernels::AdamCoeffs coeffs{lr, hyper_.beta1, hyper_.beta2, hyper_.eps,
                                   1.0 - std::pow(hyper_.beta1, t),
                                   1.0 - std::pow(hyper_.beta2, t)};
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    k.adam_step(p.value.ptr(), p.grad.ptr(), m_[i].ptr(), v_[i].ptr(), p.value.size(), coeffs);
    if (!p.value.all_finite()) throw NumericError("adam: parameter '" + p.name + "' became non-finite");
  }
}

void zero_grads(std::span<ad::Parameter* const> params) {
  for (ad::Parameter* p : params) p->zero_grad();
}

}  // namespace seqcluster
