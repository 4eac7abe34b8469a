#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

#include "rcdet/boxes.hpp"
#include "rcdet/decoder.hpp"

namespace rcdet {

// Shared prediction head applied to every decoder layer's queries.
struct HeadWeights {
    Mlp cls_branch;  // dim -> hidden -> num_classes
    Mlp reg_branch;  // dim -> hidden -> 10
    long num_classes = 3;

    static HeadWeights create(ParamStore& store, const std::string& prefix, long dim, long hidden,
                              long num_classes, Rng& rng);
};

// Raw per-query outputs. box_params columns: (dx, dy, dz [m offsets from the
// denormalized reference], log w, log l, log h, sin yaw, cos yaw, vx, vy).
struct BoxPrediction {
    Tensor class_logits;  // [n x num_classes]
    Tensor box_params;    // [n x 10]
    Tensor refs;          // [n x 3] normalized references the offsets decode against
};

struct LossConfig {
    double w_cls = 2.0;
    double w_reg = 0.25;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    std::array<double, 10> l1_weights = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
};

BoxPrediction predict(const QueryState& state, const HeadWeights& head);

// Sigmoid focal loss over all logits; target_class[i] in [0, num_classes) for
// matched queries, -1 for background rows. Normalized by max(1, num_gt).
Tensor focal_loss(const Tensor& logits, const std::vector<long>& target_class, long num_gt,
                  double alpha, double gamma);

// Weighted mean absolute error: sum of w_d |pred - target| / (10 * rows).
Tensor l1_box_loss(const Tensor& pred, const Tensor& target, const std::array<double, 10>& weights);

// Exact min-cost assignment of every column (object) to a distinct row
// (query); requires rows >= cols and finite entries. Returns (query, object)
// pairs sorted by object; ties resolve toward lower query indices.
std::vector<std::pair<long, long>> hungarian_match(const Eigen::MatrixXd& cost);

// cost(i,j) = w_cls * positive-focal classification cost + w_reg * L1 between
// query i's regression and object j's target encoding.
Eigen::MatrixXd match_cost(const BoxPrediction& pred, const GroundTruthSet& gt,
                           const WorldRange& range, const LossConfig& cfg);

struct LossBreakdown {
    Tensor loss;  // scalar, graph-connected
    double total = 0;
    double cls = 0;
    double reg = 0;
    std::vector<double> per_layer;
};

// Deep-supervised set-prediction loss: per layer, Hungarian assignment then
// weighted focal + L1 on the matches; summed over layers.
LossBreakdown total_loss(const std::vector<BoxPrediction>& per_layer_preds,
                         const GroundTruthSet& gt, const WorldRange& range, const LossConfig& cfg);

std::vector<Detection> decode_detections(const BoxPrediction& pred, const WorldRange& range);

// Absolute 10-dim regression target for one ground-truth box.
std::array<double, 10> box_target(const GtBox& box);

}  // namespace rcdet
