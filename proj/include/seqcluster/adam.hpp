#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqcluster/autodiff.hpp"

namespace seqcluster {

/// Step learning-rate schedule: `initial` for zero-based epoch indices below
/// `decay_epoch`, then divided by `decay_factor`.
struct LearningRateSchedule {
  double initial = 1e-3;
  double decay_factor = 10.0;
  std::size_t decay_epoch = 70;

  double at(std::size_t epoch_index) const {
    return epoch_index < decay_epoch ? initial : initial / decay_factor;
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<ad::Parameter* const> params, AdamHyper hyper = {},
            LearningRateSchedule schedule = {});

  /// One update of every tracked parameter at the schedule's rate for
  /// `epoch_index`. Throws StateError if any parameter lacks a gradient.
  void update(std::size_t epoch_index);
  /// As update() but with an explicit learning rate.
  void update_with_lr(double lr);

  std::uint64_t step() const { return step_; }
  const AdamHyper& hyper() const { return hyper_; }
  const LearningRateSchedule& schedule() const { return schedule_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }
  std::size_t num_params() const { return params_.size(); }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamHyper hyper_;
  LearningRateSchedule schedule_;
  std::uint64_t step_ = 0;
};

/// Zero the gradients of every parameter in the list.
void zero_grads(std::span<ad::Parameter* const> params);

}  // namespace seqcluster
