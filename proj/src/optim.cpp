#include "rcdet/optim.hpp"

#include <cmath>

namespace rcdet {

AdamW::AdamW(double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(ParamStore& params, double lr_override) {
    const auto& items = params.items();
    if (m_.size() != items.size()) {
        m_.assign(items.size(), {});
        v_.assign(items.size(), {});
        for (std::size_t i = 0; i < items.size(); ++i) {
            m_[i].assign(static_cast<std::size_t>(items[i].second.numel()), 0.0);
            v_[i].assign(static_cast<std::size_t>(items[i].second.numel()), 0.0);
        }
    }
    ++t_;
    const double lr = lr_override >= 0.0 ? lr_override : lr_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor p = items[i].second;
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& w = p.raw_data();
        for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[j]);
        }
    }
}

double one_cycle_lr(long step, long total_steps, double peak, double warmup_frac,
                    double floor_frac) {
    if (total_steps <= 1) return peak;
    const long warmup = std::max<long>(1, static_cast<long>(warmup_frac * total_steps));
    if (step < warmup) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(std::max<long>(1, total_steps - warmup));
    const double fl = peak * floor_frac;
    return fl + 0.5 * (peak - fl) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace rcdet
