#include "rcdet/head_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rcdet {

namespace {

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_value(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

HeadWeights HeadWeights::create(ParamStore& store, const std::string& prefix, long dim, long hidden,
                                long num_classes, Rng& rng) {
    if (num_classes < 1) throw ConfigError("head: need at least one class");
    HeadWeights head;
    head.num_classes = num_classes;
    head.cls_branch = Mlp::create(store, prefix + ".cls", {dim, hidden, num_classes}, rng);
    head.reg_branch = Mlp::create(store, prefix + ".reg", {dim, hidden, 10}, rng);
    return head;
}

BoxPrediction predict(const QueryState& state, const HeadWeights& head) {
    BoxPrediction pred;
    pred.class_logits = head.cls_branch.forward(state.features);
    pred.box_params = head.reg_branch.forward(state.features);
    pred.refs = state.refs;
    return pred;
}

Tensor focal_loss(const Tensor& logits, const std::vector<long>& target_class, long num_gt,
                  double alpha, double gamma) {
    if (logits.dim() != 2) throw DimError("focal_loss: expected [n x classes] logits");
    const long n = logits.size(0), k = logits.size(1);
    if (static_cast<long>(target_class.size()) != n) {
        throw DimError("focal_loss: one target per query required");
    }
    std::vector<double> pos(static_cast<std::size_t>(n * k), 0.0);
    for (long i = 0; i < n; ++i) {
        const long t = target_class[static_cast<std::size_t>(i)];
        if (t >= k) throw ContractError("focal_loss: target class out of range");
        if (t >= 0) pos[static_cast<std::size_t>(i * k + t)] = 1.0;
    }
    Tensor pos_mask = Tensor::from_data({n, k}, std::move(pos));
    Tensor neg_mask = add_scalar(neg(pos_mask), 1.0);

    Tensor s = sigmoid(logits);
    Tensor pos_term =
        mul_scalar(mul(pow_scalar(add_scalar(neg(s), 1.0), gamma), softplus(neg(logits))), alpha);
    Tensor neg_term = mul_scalar(mul(pow_scalar(s, gamma), softplus(logits)), 1.0 - alpha);
    Tensor elems = add(mul(pos_mask, pos_term), mul(neg_mask, neg_term));
    return mul_scalar(sum(elems), 1.0 / static_cast<double>(std::max<long>(1, num_gt)));
}

Tensor l1_box_loss(const Tensor& pred, const Tensor& target,
                   const std::array<double, 10>& weights) {
    if (pred.dim() != 2 || pred.size(1) != 10) throw DimError("l1_box_loss: expected [m x 10]");
    if (target.shape() != pred.shape()) throw DimError("l1_box_loss: shape mismatch");
    const long m = pred.size(0);
    Tensor w = Tensor::from_data({10}, std::vector<double>(weights.begin(), weights.end()));
    Tensor weighted = mul(abs_t(sub(pred, target)), w);
    return mul_scalar(sum(weighted), 1.0 / (10.0 * static_cast<double>(m)));
}

std::vector<std::pair<long, long>> hungarian_match(const Eigen::MatrixXd& cost) {
    const long nq = cost.rows();
    const long m = cost.cols();
    if (nq < m) throw ContractError("hungarian_match: need queries >= objects");
    if (m == 0) return {};
    if (!cost.allFinite()) throw ContractError("hungarian_match: non-finite cost entry");

    // Jonker-Volgenant shortest augmenting paths; objects augment over queries.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(m + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(nq + 1), 0.0);
    std::vector<long> p(static_cast<std::size_t>(nq + 1), 0);
    std::vector<long> way(static_cast<std::size_t>(nq + 1), 0);
    for (long i = 1; i <= m; ++i) {
        p[0] = i;
        long j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(nq + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(nq + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const long i0 = p[static_cast<std::size_t>(j0)];
            long j1 = 0;
            double delta = inf;
            for (long j = 1; j <= nq; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(j - 1, i0 - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (long j = 0; j <= nq; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const long j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::pair<long, long>> pairs;
    pairs.reserve(static_cast<std::size_t>(m));
    for (long j = 1; j <= nq; ++j) {
        if (p[static_cast<std::size_t>(j)] != 0) {
            pairs.emplace_back(j - 1, p[static_cast<std::size_t>(j)] - 1);
        }
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    return pairs;
}

std::array<double, 10> box_target(const GtBox& box) {
    if (box.w <= 0.0 || box.l <= 0.0 || box.h <= 0.0) {
        throw ContractError("box_target: extents must be positive");
    }
    return {box.x,          box.y,           box.z,          std::log(box.w), std::log(box.l),
            std::log(box.h), std::sin(box.yaw), std::cos(box.yaw), box.vx,      box.vy};
}

Eigen::MatrixXd match_cost(const BoxPrediction& pred, const GroundTruthSet& gt,
                           const WorldRange& range, const LossConfig& cfg) {
    const long n = pred.class_logits.size(0);
    const long m = static_cast<long>(gt.size());
    Eigen::MatrixXd cost(n, m);
    if (m == 0) return cost;
    const auto& logits = pred.class_logits.data();
    const auto& params = pred.box_params.data();
    const auto& refs = pred.refs.data();
    const long k = pred.class_logits.size(1);

    std::vector<std::array<double, 10>> targets;
    targets.reserve(static_cast<std::size_t>(m));
    for (const GtBox& box : gt.boxes) targets.push_back(box_target(box));

    for (long i = 0; i < n; ++i) {
        const Eigen::Vector3d ref_world = denormalize_ref(
            {refs[static_cast<std::size_t>(i * 3)], refs[static_cast<std::size_t>(i * 3 + 1)],
             refs[static_cast<std::size_t>(i * 3 + 2)]},
            range);
        std::array<double, 10> eff;
        for (int d = 0; d < 10; ++d) eff[static_cast<std::size_t>(d)] = params[static_cast<std::size_t>(i * 10 + d)];
        eff[0] += ref_world(0);
        eff[1] += ref_world(1);
        eff[2] += ref_world(2);
        for (long j = 0; j < m; ++j) {
            const long cls = gt.boxes[static_cast<std::size_t>(j)].cls;
            if (cls < 0 || cls >= k) throw ContractError("match_cost: class label out of range");
            const double x = logits[static_cast<std::size_t>(i * k + cls)];
            const double cls_cost = cfg.focal_alpha *
                                    std::pow(sigmoid_value(-x), cfg.focal_gamma) *
                                    softplus_value(-x);
            double reg_cost = 0.0;
            for (int d = 0; d < 10; ++d) {
                reg_cost += cfg.l1_weights[static_cast<std::size_t>(d)] *
                            std::abs(eff[static_cast<std::size_t>(d)] -
                                     targets[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)]);
            }
            reg_cost /= 10.0;
            cost(i, j) = cfg.w_cls * cls_cost + cfg.w_reg * reg_cost;
        }
    }
    return cost;
}

LossBreakdown total_loss(const std::vector<BoxPrediction>& per_layer_preds,
                         const GroundTruthSet& gt, const WorldRange& range,
                         const LossConfig& cfg) {
    if (per_layer_preds.empty()) throw ContractError("total_loss: no predictions");
    const long m = static_cast<long>(gt.size());

    LossBreakdown out;
    Tensor acc;
    for (const BoxPrediction& pred : per_layer_preds) {
        const long n = pred.class_logits.size(0);
        std::vector<long> target_class(static_cast<std::size_t>(n), -1);
        Tensor layer_loss;
        if (m > 0) {
            const Eigen::MatrixXd cost = match_cost(pred, gt, range, cfg);
            const auto pairs = hungarian_match(cost);
            std::vector<long> qidx;
            std::vector<double> tvals;
            qidx.reserve(pairs.size());
            for (const auto& [q, o] : pairs) {
                target_class[static_cast<std::size_t>(q)] = gt.boxes[static_cast<std::size_t>(o)].cls;
                qidx.push_back(q);
                for (double v : box_target(gt.boxes[static_cast<std::size_t>(o)])) tvals.push_back(v);
            }
            Tensor cls = focal_loss(pred.class_logits, target_class, m, cfg.focal_alpha,
                                    cfg.focal_gamma);
            // decode centers differentiably so reference gradients flow through the loss
            Tensor centers = add(denormalize_refs(pred.refs, range), slice(pred.box_params, 1, 0, 3));
            Tensor eff = concat({centers, slice(pred.box_params, 1, 3, 7)}, 1);
            Tensor targets = Tensor::from_data({static_cast<long>(pairs.size()), 10}, std::move(tvals));
            Tensor reg = l1_box_loss(gather_rows(eff, qidx), targets, cfg.l1_weights);
            const double cls_v = cfg.w_cls * cls.value();
            const double reg_v = cfg.w_reg * reg.value();
            out.cls += cls_v;
            out.reg += reg_v;
            out.per_layer.push_back(cls_v + reg_v);
            layer_loss = add(mul_scalar(cls, cfg.w_cls), mul_scalar(reg, cfg.w_reg));
        } else {
            Tensor cls = focal_loss(pred.class_logits, target_class, 0, cfg.focal_alpha,
                                    cfg.focal_gamma);
            const double cls_v = cfg.w_cls * cls.value();
            out.cls += cls_v;
            out.per_layer.push_back(cls_v);
            layer_loss = mul_scalar(cls, cfg.w_cls);
        }
        acc = acc.defined() ? add(acc, layer_loss) : layer_loss;
    }
    out.loss = acc;
    out.total = acc.value();
    return out;
}

std::vector<Detection> decode_detections(const BoxPrediction& pred, const WorldRange& range) {
    const long n = pred.class_logits.size(0);
    const long k = pred.class_logits.size(1);
    const auto& logits = pred.class_logits.data();
    const auto& params = pred.box_params.data();
    const auto& refs = pred.refs.data();
    std::vector<Detection> dets;
    dets.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        Detection d;
        double best = -1.0;
        for (long c = 0; c < k; ++c) {
            const double p = sigmoid_value(logits[static_cast<std::size_t>(i * k + c)]);
            if (p > best) {
                best = p;
                d.cls = static_cast<int>(c);
            }
        }
        d.score = best;
        const Eigen::Vector3d ref_world = denormalize_ref(
            {refs[static_cast<std::size_t>(i * 3)], refs[static_cast<std::size_t>(i * 3 + 1)],
             refs[static_cast<std::size_t>(i * 3 + 2)]},
            range);
        const double* row = params.data() + i * 10;
        d.x = ref_world(0) + row[0];
        d.y = ref_world(1) + row[1];
        d.z = ref_world(2) + row[2];
        d.w = std::exp(row[3]);
        d.l = std::exp(row[4]);
        d.h = std::exp(row[5]);
        d.yaw = std::atan2(row[6], row[7]);
        d.vx = row[8];
        d.vy = row[9];
        dets.push_back(d);
    }
    return dets;
}

}  // namespace rcdet
