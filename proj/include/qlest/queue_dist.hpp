/*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*/
#pragma once

#include "qlest/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace qlest {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log C(n, k); -inf outside 0 <= k <= n.
inline double log_binom(long n, long k)
{
    if (n < 0 || k < 0 || k > n)
        return kNegInf;
    if (k == 0 || k == n)
        return 0.0;
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

/// C(n, k) with C = 0 for k < 0, k > n or n < 0.
inline double binom(long n, long k)
{
    if (n < 0 || k < 0 || k > n)
        return 0.0;
    if (n > 60)
        return std::exp(log_binom(n, k));
    k = std::min(k, n - k);
    double c = 1.0;
    for (long i = 1; i <= k; ++i)
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(c);
}

/// count * log(base) with the convention 0 * log(0) = 0.
inline double log_power(double log_base, long count) { return count == 0 ? 0.0 : static_cast<double>(count) * log_base; }

/// log pi(k, mu) = k log mu - mu - log k!.
inline double log_poisson(long k, double mu)
{
    if (k < 0)
        return kNegInf;
    if (mu == 0.0)
        return k == 0 ? 0.0 : kNegInf;
    return static_cast<double>(k) * std::log(mu) - mu - std::lgamma(static_cast<double>(k) + 1.0);
}

inline double poisson_pmf(long k, double mu) { return std::exp(log_poisson(k, mu)); }

/// P(K > n) for K ~ Poisson(mu), summed term by term.
inline double poisson_upper_tail(std::size_t n, double mu)
{
    if (mu == 0.0)
        return 0.0;
    double tail = 0.0;
    for (long k = static_cast<long>(n) + 1;; ++k) {
        const double term = poisson_pmf(k, mu);
        tail += term;
        if ((static_cast<double>(k) > mu && term <= 1e-18 * tail) || term == 0.0 ||
            k > static_cast<long>(n) + 100000)
            break;
    }
    return tail;
}

/// Support bound used for every truncated pmf:
/// ceil(mu_max + 10 sqrt(mu_max + 1)) + m + x_p + 20.
inline std::size_t truncation_bound(double mu_max, std::size_t m, std::size_t x_p)
{
    return static_cast<std::size_t>(std::ceil(mu_max + 10.0 * std::sqrt(mu_max + 1.0))) + m + x_p + 20;
}

/// Truncated pmf on {0, ..., N_max}.
struct QueuePmf {
    std::vector<double> probs;
    /// Prior probability mass beyond N_max, before normalization.
    double tail_mass_bound = 0.0;

    std::size_t n_max() const noexcept { return probs.empty() ? 0 : probs.size() - 1; }

    double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

    double mean() const
    {
        double s = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k)
            s += static_cast<double>(k) * probs[k];
        return s;
    }

    static QueuePmf point_mass(std::size_t at)
    {
        QueuePmf p;
        p.probs.assign(at + 1, 0.0);
        p.probs[at] = 1.0;
        return p;
    }
};

/// Truncated joint pmf on {0..N_max}^3, indexed (a, b, c).
struct JointQueuePmf {
    std::size_t n_max = 0;
    std::vector<double> probs;
    double tail_mass_bound = 0.0;

    std::size_t side() const noexcept { return n_max + 1; }
    std::size_t index(std::size_t a, std::size_t b, std::size_t c) const noexcept
    {
        return (a * side() + b) * side() + c;
    }
    double operator()(std::size_t a, std::size_t b, std::size_t c) const { return probs[index(a, b, c)]; }

    double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

    QueuePmf marginal(std::size_t lane) const
    {
        QueuePmf out;
        out.probs.assign(side(), 0.0);
        out.tail_mass_bound = tail_mass_bound;
        for (std::size_t a = 0; a < side(); ++a)
            for (std::size_t b = 0; b < side(); ++b)
                for (std::size_t c = 0; c < side(); ++c) {
                    const std::array<std::size_t, 3> abc{a, b, c};
                    out.probs[abc.at(lane)] += (*this)(a, b, c);
                }
        return out;
    }
};

/// Inputs of the conditional queue-length laws for one 3-lane approach.
struct StockParams {
    /// Expected stocks mu_i = lambda_i * r_i.
    std::array<double, 3> mu{};
    std::array<double, 3> lambdas{};
    double p = 0.0;
    /// Within-lane position of the last probe, 0 when there is none.
    std::size_t m = 0;
    /// Total probes queued.
    std::size_t x_p = 0;
    /// Estimated probes per lane.
    std::array<std::size_t, 3> probe_counts{};

    double mu_max() const { return std::max({mu[0], mu[1], mu[2]}); }
};

/// Independent Poisson(mu) law of one lane, truncated to {0..N_max}.
inline QueuePmf prop1_pmf(double mu, std::size_t n_max)
{
    if (!(mu >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "stock must be >= 0");
    QueuePmf out;
    out.probs.resize(n_max + 1);
    for (std::size_t k = 0; k <= n_max; ++k)
        out.probs[k] = poisson_pmf(static_cast<long>(k), mu);
    out.tail_mass_bound = poisson_upper_tail(n_max, mu);
    const double z = out.total();
    for (auto& x : out.probs)
        x /= z;
    return out;
}

namespace detail {

inline void require_probe_observation(const StockParams& s)
{
    if (s.m == 0 || s.x_p == 0)
        throw Error(ErrorCode::DegenerateObservation, "probe-conditioned law needs m >= 1 and x_p >= 1");
    if (!(s.p >= 0.0 && s.p <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "penetration ratio outside [0,1]");
    for (double mu : s.mu)
        if (!(mu >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "stock must be >= 0");
}

/// log[(1-p)^k pi(k, mu)] for k = 0..n_max.
inline std::vector<double> thinned_poisson_logs(double mu, double p, std::size_t n_max)
{
    const double log_q = std::log1p(-p);
    std::vector<double> out(n_max + 1);
    for (std::size_t k = 0; k <= n_max; ++k)
        out[k] = log_power(log_q, static_cast<long>(k)) + log_poisson(static_cast<long>(k), mu);
    return out;
}

} // namespace detail

/// Calls visit(a, b, c, weight) for every cell of {0..N_max}^3 inside the
/// support {max(a,b,c) >= m, a+b+c >= x_p}, with
///
///   weight = sigma_{a,b,c} (1-p)^{a+b+c} pi(a,mu_a) pi(b,mu_b) pi(c,mu_c)
///   sigma_{a,b,c} = C(m - 1 + min(m,a,b,c) + mid(a,b,c), x_p - 1)
///
/// scaled by a common factor so that the largest weight is 1. Returns the
/// number of cells with positive weight.
template <class Visit>
std::size_t for_each_prop2_weight(const StockParams& s, std::size_t n_max, Visit&& visit)
{
    detail::require_probe_observation(s);
    const std::size_t side = n_max + 1;
    const auto la = detail::thinned_poisson_logs(s.mu[0], s.p, n_max);
    const auto lb = detail::thinned_poisson_logs(s.mu[1], s.p, n_max);
    const auto lc = detail::thinned_poisson_logs(s.mu[2], s.p, n_max);

    // sigma depends on (min(m, lo), mid) only.
    const std::size_t m = s.m;
    std::vector<double> log_sigma((m + 1) * side);
    for (std::size_t lo = 0; lo <= m; ++lo)
        for (std::size_t mid = 0; mid < side; ++mid)
            log_sigma[lo * side + mid] =
                log_binom(static_cast<long>(m - 1 + lo + mid), static_cast<long>(s.x_p) - 1);

    auto cell_log = [&](std::size_t a, std::size_t b, std::size_t c) {
        const std::size_t hi = std::max({a, b, c});
        const std::size_t lo = std::min({a, b, c});
        const std::size_t mid = a + b + c - hi - lo;
        return la[a] + lb[b] + lc[c] + log_sigma[std::min(lo, m) * side + mid];
    };
    auto in_support = [&](std::size_t a, std::size_t b, std::size_t c) {
        return std::max({a, b, c}) >= m && a + b + c >= s.x_p;
    };

    double peak = kNegInf;
    for (std::size_t a = 0; a < side; ++a) {
        if (la[a] == kNegInf)
            continue;
        for (std::size_t b = 0; b < side; ++b) {
            if (lb[b] == kNegInf)
                continue;
            for (std::size_t c = 0; c < side; ++c)
                if (in_support(a, b, c))
                    peak = std::max(peak, cell_log(a, b, c));
        }
    }
    if (peak == kNegInf)
        throw Error(ErrorCode::DegenerateObservation, "observation has zero probability under the model");

    std::size_t cells = 0;
    for (std::size_t a = 0; a < side; ++a) {
        if (la[a] == kNegInf)
            continue;
        for (std::size_t b = 0; b < side; ++b) {
            if (lb[b] == kNegInf)
                continue;
            for (std::size_t c = 0; c < side; ++c) {
                if (!in_support(a, b, c))
                    continue;
                const double w = std::exp(cell_log(a, b, c) - peak);
                if (w > 0.0) {
                    visit(a, b, c, w);
                    ++cells;
                }
            }
        }
    }
    return cells;
}

/// Joint law of (A, B, C) given the last-probe position m and the probe total x_p.
inline JointQueuePmf prop2_joint(const StockParams& s, std::size_t n_max)
{
    JointQueuePmf out;
    out.n_max = n_max;
    out.probs.assign(out.side() * out.side() * out.side(), 0.0);
    double z = 0.0;
    for_each_prop2_weight(s, n_max, [&](std::size_t a, std::size_t b, std::size_t c, double w) {
        out.probs[out.index(a, b, c)] = w;
        z += w;
    });
    for (auto& x : out.probs)
        x /= z;
    for (double mu : s.mu)
        out.tail_mass_bound += poisson_upper_tail(n_max, mu);
    return out;
}

/// Marginal means of a joint pmf.
inline std::array<double, 3> prop2_expectations(const JointQueuePmf& joint)
{
    std::array<double, 3> e{};
    const std::size_t side = joint.side();
    for (std::size_t a = 0; a < side; ++a)
        for (std::size_t b = 0; b < side; ++b)
            for (std::size_t c = 0; c < side; ++c) {
                const double w = joint(a, b, c);
                e[0] += static_cast<double>(a) * w;
                e[1] += static_cast<double>(b) * w;
                e[2] += static_cast<double>(c) * w;
            }
    return e;
}

/// Marginal means straight from the weights, without materializing the cube.
inline std::array<double, 3> prop2_expectations(const StockParams& s, std::size_t n_max)
{
    double z = 0.0;
    std::array<double, 3> e{};
    for_each_prop2_weight(s, n_max, [&](std::size_t a, std::size_t b, std::size_t c, double w) {
        z += w;
        e[0] += static_cast<double>(a) * w;
        e[1] += static_cast<double>(b) * w;
        e[2] += static_cast<double>(c) * w;
    });
    for (auto& x : e)
        x /= z;
    return e;
}

/// S_mu^{m,nu} = sum_{k >= max(m,nu)} sum_{j=1}^{min(k,m)} C(m-1, j-1) p^j (1-p)^{k-j} pi(k, mu),
/// truncated at k = N_max.
inline double S_term(double mu, std::size_t m, std::size_t nu, double p, std::size_t n_max)
{
    if (m == 0)
        throw Error(ErrorCode::InvalidArgument, "S term needs m >= 1");
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    double s = 0.0;
    for (std::size_t k = std::max(m, nu); k <= n_max; ++k) {
        const double lp = log_poisson(static_cast<long>(k), mu);
        if (lp == kNegInf)
            continue;
        for (std::size_t j = 1; j <= std::min(k, m); ++j) {
            const double t = log_binom(static_cast<long>(m) - 1, static_cast<long>(j) - 1) +
                             log_power(log_p, static_cast<long>(j)) + log_power(log_q, static_cast<long>(k - j)) + lp;
            s += std::exp(t);
        }
    }
    return s;
}

/// Law of one lane's queue given its estimated probe count and the
/// last-probe position m. Lane `lane` plays the role of lane a; the other
/// two lanes enter symmetrically through their S terms.
///
/// Throws InconsistentObservation when m is smaller than the lane's probe
/// count (empty support).
inline QueuePmf prop3_pmf(std::size_t lane, const StockParams& s, std::size_t n_max)
{
    if (lane > 2)
        throw Error(ErrorCode::InvalidArgument, "lane index must be 0, 1 or 2");
    if (!(s.p >= 0.0 && s.p <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "penetration ratio outside [0,1]");
    const std::size_t other1 = lane == 0 ? 1 : 0;
    const std::size_t other2 = lane == 2 ? 1 : 2;
    const double mu = s.mu[lane];
    const std::size_t ap = s.probe_counts[lane];
    const auto base = detail::thinned_poisson_logs(mu, s.p, n_max);

    QueuePmf out;
    out.probs.assign(n_max + 1, 0.0);
    out.tail_mass_bound = poisson_upper_tail(n_max, mu);

    std::vector<double> logw(n_max + 1, kNegInf);
    if (ap == 0) {
        logw = base;
    }
    else {
        if (s.m < ap)
            throw Error(ErrorCode::InconsistentObservation,
                        "last-probe position " + std::to_string(s.m) + " below lane probe count " + std::to_string(ap));
        const double own = s.lambdas[lane] * binom(static_cast<long>(s.m) - 1, static_cast<long>(ap) - 1);
        const double others = s.lambdas[other1] * S_term(s.mu[other1], s.m, ap, s.p, n_max) +
                              s.lambdas[other2] * S_term(s.mu[other2], s.m, ap, s.p, n_max);
        for (std::size_t a = ap; a <= n_max; ++a) {
            const double coef = own + others * binom(static_cast<long>(a), static_cast<long>(ap));
            if (coef > 0.0)
                logw[a] = std::log(coef) + base[a];
        }
    }

    const double peak = *std::max_element(logw.begin(), logw.end());
    if (peak == kNegInf)
        throw Error(ErrorCode::DegenerateObservation, "lane law has no mass");
    double z = 0.0;
    for (std::size_t a = 0; a <= n_max; ++a) {
        out.probs[a] = std::exp(logw[a] - peak);
        z += out.probs[a];
    }
    for (auto& x : out.probs)
        x /= z;
    return out;
}

inline double prop3_expectation(const QueuePmf& pmf) { return pmf.mean(); }

} // namespace qlest
