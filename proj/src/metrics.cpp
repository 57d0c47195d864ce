#include "mltn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mltn/errors.hpp"

namespace mltn {

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw CountMismatch("auroc needs one label per score");
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int y : labels) pos += y != 0;
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0)
        throw DegenerateLabels("auroc needs both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });

    // Average ranks over tie groups, then the Mann-Whitney statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]] != 0) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(neg));
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.shape()[0] != labels.size())
        throw CountMismatch("accuracy needs one label per logits row");
    const std::size_t m = logits.shape()[1];
    std::size_t hits = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const double* row = logits.data() + b * m;
        std::size_t best = 0;
        for (std::size_t k = 1; k < m; ++k)
            if (row[k] > row[best]) best = k;
        hits += static_cast<int>(best) == labels[b];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace mltn
