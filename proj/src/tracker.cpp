#include "rcdet/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rcdet {

namespace {

struct Candidate {
    double dist;
    std::size_t det;
    std::size_t track;
};

}  // namespace

TrackStepResult track_step(const std::vector<Track>& tracks, const std::vector<Detection>& dets,
                           double dt, const TrackerConfig& cfg, int& next_id) {
    if (dt <= 0.0) throw ContractError("track_step: dt must be positive");

    std::vector<Detection> kept;
    for (const Detection& d : dets) {
        if (d.score >= cfg.min_score) kept.push_back(d);
    }

    // constant-velocity prediction to the current frame
    std::vector<Track> predicted = tracks;
    for (Track& t : predicted) {
        t.x += t.vx * dt;
        t.y += t.vy * dt;
    }

    std::vector<Candidate> candidates;
    for (std::size_t di = 0; di < kept.size(); ++di) {
        for (std::size_t ti = 0; ti < predicted.size(); ++ti) {
            if (kept[di].cls != predicted[ti].cls) continue;
            const double dx = kept[di].x - predicted[ti].x;
            const double dy = kept[di].y - predicted[ti].y;
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist <= cfg.match_radius) candidates.push_back({dist, di, ti});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.det != b.det) return a.det < b.det;
        return predicted[a.track].id < predicted[b.track].id;
    });

    std::vector<char> det_used(kept.size(), 0);
    std::vector<char> track_used(predicted.size(), 0);
    std::vector<int> det_track(kept.size(), -1);
    for (const Candidate& c : candidates) {
        if (det_used[c.det] || track_used[c.track]) continue;
        det_used[c.det] = 1;
        track_used[c.track] = 1;
        det_track[c.det] = static_cast<int>(c.track);
    }

    TrackStepResult out;
    std::vector<Track> next = predicted;
    for (std::size_t di = 0; di < kept.size(); ++di) {
        const Detection& d = kept[di];
        int id;
        if (det_track[di] >= 0) {
            Track& t = next[static_cast<std::size_t>(det_track[di])];
            t.x = d.x;
            t.y = d.y;
            t.vx = d.vx;  // the regressed velocity drives the next prediction
            t.vy = d.vy;
            t.score = d.score;
            t.age_since_update = 0;
            id = t.id;
        } else {
            Track t;
            t.id = next_id++;
            t.x = d.x;
            t.y = d.y;
            t.vx = d.vx;
            t.vy = d.vy;
            t.cls = d.cls;
            t.score = d.score;
            t.age_since_update = 0;
            next.push_back(t);
            id = t.id;
        }
        out.labeled.push_back({id, d.x, d.y, d.cls, d.score});
    }
    for (std::size_t ti = 0; ti < predicted.size(); ++ti) {
        if (!track_used[ti]) next[ti].age_since_update += 1;
    }
    for (const Track& t : next) {
        if (t.age_since_update <= cfg.max_age) out.tracks.push_back(t);
    }
    return out;
}

TrackingMetrics tracking_metrics(const std::vector<GroundTruthSet>& gt_frames,
                                 const std::vector<std::vector<TrackedBox>>& pred_frames,
                                 double dist_threshold) {
    if (gt_frames.size() != pred_frames.size()) {
        throw ContractError("tracking_metrics: frame counts differ");
    }
    TrackingMetrics m;
    std::map<int, int> last_match;  // gt track id -> last matched prediction id
    for (std::size_t f = 0; f < gt_frames.size(); ++f) {
        const auto& gts = gt_frames[f].boxes;
        const auto& preds = pred_frames[f];
        m.total_gt += static_cast<long>(gts.size());

        std::vector<Candidate> candidates;
        for (std::size_t pi = 0; pi < preds.size(); ++pi) {
            for (std::size_t gi = 0; gi < gts.size(); ++gi) {
                if (preds[pi].cls != gts[gi].cls) continue;
                const double dx = preds[pi].x - gts[gi].x;
                const double dy = preds[pi].y - gts[gi].y;
                const double dist = std::sqrt(dx * dx + dy * dy);
                if (dist <= dist_threshold) candidates.push_back({dist, pi, gi});
            }
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) {
                      if (a.dist != b.dist) return a.dist < b.dist;
                      if (a.det != b.det) return a.det < b.det;
                      return a.track < b.track;
                  });
        std::vector<char> pred_used(preds.size(), 0);
        std::vector<char> gt_used(gts.size(), 0);
        long matched = 0;
        for (const Candidate& c : candidates) {
            if (pred_used[c.det] || gt_used[c.track]) continue;
            pred_used[c.det] = 1;
            gt_used[c.track] = 1;
            ++matched;
            const int gt_id = gts[c.track].track_id;
            const int pred_id = preds[c.det].id;
            auto it = last_match.find(gt_id);
            if (it != last_match.end() && it->second != pred_id) m.ids += 1;
            last_match[gt_id] = pred_id;
        }
        m.fp += static_cast<long>(preds.size()) - matched;
        m.fn += static_cast<long>(gts.size()) - matched;
    }
    m.accuracy = m.total_gt == 0
                     ? 1.0
                     : 1.0 - static_cast<double>(m.fp + m.fn + m.ids) / static_cast<double>(m.total_gt);
    return m;
}

}  // namespace rcdet
