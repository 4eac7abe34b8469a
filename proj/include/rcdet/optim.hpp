#pragma once

#include <vector>

#include "rcdet/nn.hpp"

namespace rcdet {

// Adam with decoupled weight decay.
class AdamW {
  public:
    AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 1e-2);

    // Applies one update using accumulated grads; params with no grad are skipped.
    void step(ParamStore& params, double lr_override = -1.0);

    double lr() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Linear warmup to the peak, then cosine decay to peak * floor_frac.
double one_cycle_lr(long step, long total_steps, double peak, double warmup_frac = 0.1,
                    double floor_frac = 0.02);

}  // namespace rcdet
