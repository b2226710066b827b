// Token-sequence evaluation: minimal edit distance with an insert/delete/
// substitute breakdown, word error rate, and exact-match rate over a corpus.
#pragma once

#include <cstddef>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmer {

enum class EditOpKind { Match, Substitute, Delete, Insert };

// One step of an optimal script transforming the prediction into the truth;
// positions index the sequence element each side consumes.
struct EditOp {
    EditOpKind kind;
    std::size_t pred_pos;
    std::size_t truth_pos;
};

struct EditBreakdown {
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t substitutions = 0;
    std::size_t truth_length = 0;
    std::size_t distance() const { return insertions + deletions + substitutions; }
};

// Unit-cost dynamic program with backtrace. Ties prefer substitution, then
// deletion, then insertion; the total distance is invariant to the choice.
inline std::vector<EditOp> edit_script(const std::vector<std::size_t>& pred,
                                       const std::vector<std::size_t>& truth) {
    const std::size_t P = pred.size(), T = truth.size();
    std::vector<std::size_t> d((P + 1) * (T + 1), 0);
    const auto at = [T](std::size_t i, std::size_t j) { return i * (T + 1) + j; };
    for (std::size_t i = 0; i <= P; ++i) d[at(i, 0)] = i;
    for (std::size_t j = 0; j <= T; ++j) d[at(0, j)] = j;
    for (std::size_t i = 1; i <= P; ++i)
        for (std::size_t j = 1; j <= T; ++j) {
            const std::size_t sub = d[at(i - 1, j - 1)] + (pred[i - 1] == truth[j - 1] ? 0 : 1);
            const std::size_t del = d[at(i - 1, j)] + 1;
            const std::size_t ins = d[at(i, j - 1)] + 1;
            d[at(i, j)] = std::min(sub, std::min(del, ins));
        }
    std::vector<EditOp> ops;
    std::size_t i = P, j = T;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const bool same = pred[i - 1] == truth[j - 1];
            if (d[at(i, j)] == d[at(i - 1, j - 1)] + (same ? 0 : 1)) {
                ops.push_back({same ? EditOpKind::Match : EditOpKind::Substitute, i - 1, j - 1});
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && d[at(i, j)] == d[at(i - 1, j)] + 1) {
            ops.push_back({EditOpKind::Delete, i - 1, j});
            --i;
            continue;
        }
        ops.push_back({EditOpKind::Insert, i, j - 1});
        --j;
    }
    std::reverse(ops.begin(), ops.end());
    return ops;
}

inline EditBreakdown edit_distance(const std::vector<std::size_t>& pred,
                                   const std::vector<std::size_t>& truth) {
    EditBreakdown b;
    b.truth_length = truth.size();
    for (const EditOp& op : edit_script(pred, truth)) {
        switch (op.kind) {
            case EditOpKind::Insert: ++b.insertions; break;
            case EditOpKind::Delete: ++b.deletions; break;
            case EditOpKind::Substitute: ++b.substitutions; break;
            case EditOpKind::Match: break;
        }
    }
    return b;
}

// (insertions + deletions + substitutions) / |truth|; may exceed 1.
inline double wer(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth) {
    if (truth.empty()) throw std::invalid_argument("wer: empty truth sequence");
    return static_cast<double>(edit_distance(pred, truth).distance()) /
           static_cast<double>(truth.size());
}

using SequencePair = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>;

inline void check_pairs(const std::vector<SequencePair>& pairs, const char* op) {
    if (pairs.empty()) throw std::invalid_argument(std::string(op) + ": empty pair list");
    for (const auto& [pred, truth] : pairs)
        if (truth.empty()) throw std::invalid_argument(std::string(op) + ": empty truth sequence");
}

inline double exprate(const std::vector<SequencePair>& pairs) {
    check_pairs(pairs, "exprate");
    std::size_t exact = 0;
    for (const auto& [pred, truth] : pairs)
        if (pred == truth) ++exact;
    return static_cast<double>(exact) / static_cast<double>(pairs.size());
}

// Pooled aggregation: total edit operations over total truth length.
inline double corpus_wer(const std::vector<SequencePair>& pairs) {
    check_pairs(pairs, "corpus_wer");
    std::size_t ops = 0, len = 0;
    for (const auto& [pred, truth] : pairs) {
        ops += edit_distance(pred, truth).distance();
        len += truth.size();
    }
    return static_cast<double>(ops) / static_cast<double>(len);
}

inline double mean_wer(const std::vector<SequencePair>& pairs) {
    check_pairs(pairs, "mean_wer");
    double acc = 0.0;
    for (const auto& [pred, truth] : pairs) acc += wer(pred, truth);
    return acc / static_cast<double>(pairs.size());
}

struct EvalRow {
    std::string id;
    EditBreakdown breakdown;
    double wer = 0.0;
    bool exact = false;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double exprate = 0.0;
    double wer_pooled = 0.0;
    double wer_mean = 0.0;

    std::string table() const {
        std::ostringstream out;
        out << std::left << std::setw(18) << "id" << std::right << std::setw(6) << "dist"
            << std::setw(5) << "ins" << std::setw(5) << "del" << std::setw(5) << "sub"
            << std::setw(6) << "len" << std::setw(10) << "wer" << "\n";
        for (const EvalRow& r : rows) {
            out << std::left << std::setw(18) << r.id << std::right << std::setw(6)
                << r.breakdown.distance() << std::setw(5) << r.breakdown.insertions << std::setw(5)
                << r.breakdown.deletions << std::setw(5) << r.breakdown.substitutions << std::setw(6)
                << r.breakdown.truth_length << std::setw(10) << std::fixed << std::setprecision(4)
                << r.wer << "\n";
        }
        return out.str();
    }

    // Line-oriented key=value summary; both WER aggregations are emitted.
    std::string summary() const {
        std::ostringstream out;
        out.precision(17);
        out << "examples=" << rows.size() << "\n"
            << "wer_mean=" << wer_mean << "\n"
            << "exprate=" << exprate << " wer=" << wer_pooled << "\n";
        return out.str();
    }
};

inline EvalReport evaluate(const std::vector<std::string>& ids,
                           const std::vector<SequencePair>& pairs) {
    check_pairs(pairs, "evaluate");
    if (ids.size() != pairs.size()) throw std::invalid_argument("evaluate: id/pair count mismatch");
    EvalReport rep;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EvalRow row;
        row.id = ids[i];
        row.breakdown = edit_distance(pairs[i].first, pairs[i].second);
        row.wer = static_cast<double>(row.breakdown.distance()) /
                  static_cast<double>(row.breakdown.truth_length);
        row.exact = pairs[i].first == pairs[i].second;
        rep.rows.push_back(row);
    }
    rep.exprate = exprate(pairs);
    rep.wer_pooled = corpus_wer(pairs);
    rep.wer_mean = mean_wer(pairs);
    return rep;
}

}  // namespace hmer
