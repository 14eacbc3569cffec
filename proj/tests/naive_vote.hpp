#pragma once

// Quadratic weighted-vote reference: each candidate's class weight, best
// class by (weight, earliest member). Returns candidates.size() when nothing
// parses.

#include <algorithm>
#include <vector>

#include "gcp/search.hpp"

namespace ref {

inline std::size_t naive_vote(const std::vector<gcp::Candidate>& cands, const std::vector<double>& w) {
    std::size_t best = cands.size();
    double best_w = 0;
    std::size_t best_first = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!cands[i].answer) continue;
        double total = 0;
        std::size_t first = i;
        for (std::size_t j = 0; j < cands.size(); ++j) {
            if (cands[j].answer && *cands[j].answer == *cands[i].answer) {
                total += w[j];
                first = std::min(first, j);
            }
        }
        if (best == cands.size() || total > best_w || (total == best_w && first < best_first)) {
            best = i;
            best_w = total;
            best_first = first;
        }
    }
    return best_first;
}

}  // namespace ref
