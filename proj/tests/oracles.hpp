// Test-only reference implementations, kept independent of the library's
// compute paths. Everything here is written as plain nested loops or
// recursion so it can serve as an oracle for the optimized code.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

// Direct cross-correlation, six nested loops, zero padding.
// input:  [N][Cin][H][W] flattened row-major
// kernel: [Cout][Cin][kh][kw]
inline std::vector<double> conv2d_ref(const std::vector<double>& in, std::size_t N,
                                      std::size_t Cin, std::size_t H, std::size_t W,
                                      const std::vector<double>& ker, std::size_t Cout,
                                      std::size_t kh, std::size_t kw, std::size_t sh,
                                      std::size_t sw, std::size_t ph, std::size_t pw) {
    const std::size_t Ho = (H + 2 * ph - kh) / sh + 1;
    const std::size_t Wo = (W + 2 * pw - kw) / sw + 1;
    std::vector<double> out(N * Cout * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ih =
                                    static_cast<std::ptrdiff_t>(oh * sh + ky) -
                                    static_cast<std::ptrdiff_t>(ph);
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * sw + kx) -
                                    static_cast<std::ptrdiff_t>(pw);
                                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) ||
                                    iw >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                acc += in[((n * Cin + ci) * H + ih) * W + iw] *
                                       ker[((co * Cin + ci) * kh + ky) * kw + kx];
                            }
                    out[((n * Cout + co) * Ho + oh) * Wo + ow] = acc;
                }
    return out;
}

// Per-window max / mean, nested loops, no padding.
inline std::vector<double> pool2d_ref(const std::vector<double>& in, std::size_t N,
                                      std::size_t C, std::size_t H, std::size_t W,
                                      std::size_t wh, std::size_t ww, std::size_t sh,
                                      std::size_t sw, bool take_max) {
    const std::size_t Ho = (H - wh) / sh + 1;
    const std::size_t Wo = (W - ww) / sw + 1;
    std::vector<double> out(N * C * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double best = -1e300;
                    double sum = 0.0;
                    for (std::size_t ky = 0; ky < wh; ++ky)
                        for (std::size_t kx = 0; kx < ww; ++kx) {
                            const double v = in[((n * C + c) * H + oh * sh + ky) * W + ow * sw + kx];
                            best = std::max(best, v);
                            sum += v;
                        }
                    out[((n * C + c) * Ho + oh) * Wo + ow] =
                        take_max ? best : sum / static_cast<double>(wh * ww);
                }
    return out;
}

// Minimal edit distance by exhaustive script search (iterative deepening),
// no dynamic-programming table involved.
inline bool edit_reachable(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                           std::size_t i, std::size_t j, int budget) {
    if (budget < 0) return false;
    if (i == a.size() && j == b.size()) return true;
    if (i < a.size() && j < b.size() && a[i] == b[j] && edit_reachable(a, b, i + 1, j + 1, budget))
        return true;
    // substitute
    if (i < a.size() && j < b.size() && edit_reachable(a, b, i + 1, j + 1, budget - 1)) return true;
    // delete from a
    if (i < a.size() && edit_reachable(a, b, i + 1, j, budget - 1)) return true;
    // insert b[j]
    if (j < b.size() && edit_reachable(a, b, i, j + 1, budget - 1)) return true;
    return false;
}

inline std::size_t edit_distance_exhaustive(const std::vector<std::size_t>& a,
                                            const std::vector<std::size_t>& b) {
    for (int d = 0; d <= static_cast<int>(a.size() + b.size()); ++d)
        if (edit_reachable(a, b, 0, 0, d)) return static_cast<std::size_t>(d);
    throw std::logic_error("edit_distance_exhaustive: unreachable");
}

// Central finite differences for d loss / d x[i], loss re-evaluated from scratch.
inline double central_difference(std::vector<double>& x, std::size_t i,
                                 const std::function<double()>& loss, double h = 1e-5) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    return (up - down) / (2.0 * h);
}

inline double rel_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

// One Adam step on a scalar parameter, textbook form with bias correction.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    std::uint64_t t = 0;
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    explicit ScalarAdam(double lr_) : lr(lr_) {}
    double step(double theta, double grad) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        return theta - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

}  // namespace oracles
