#include "balbid/armax.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "balbid/error.hpp"

namespace balbid::price {

double max_root_modulus(std::span<const double> c) {
    const auto n = static_cast<Eigen::Index>(c.size());
    if (n == 0) return 0.0;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = c[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    const Eigen::VectorXcd roots = companion.eigenvalues();
    return roots.cwiseAbs().maxCoeff();
}

namespace {

Eigen::VectorXcd companion_roots(std::span<const double> c) {
    const auto n = static_cast<Eigen::Index>(c.size());
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = c[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    return companion.eigenvalues();
}

}  // namespace

double min_common_root_distance(std::span<const double> ar, std::span<const double> ma) {
    if (ar.empty() || ma.empty()) return std::numeric_limits<double>::infinity();
    std::vector<double> neg_ma(ma.begin(), ma.end());
    for (double& b : neg_ma) b = -b;
    const Eigen::VectorXcd a = companion_roots(ar);
    const Eigen::VectorXcd m = companion_roots(neg_ma);
    double d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        for (Eigen::Index j = 0; j < m.size(); ++j) d = std::min(d, std::abs(a[i] - m[j]));
    }
    return d;
}

namespace {

// Invertibility margin for the MA polynomial during optimisation.
constexpr double kMaRootLimit = 0.995;

struct Layout {
    int p = 0;
    int q = 0;
    int k = 0;
    int size() const { return 1 + p + q + k; }
    int ar(int i) const { return 1 + i; }
    int ma(int j) const { return 1 + p + j; }
    int ex(int e) const { return 1 + p + q + e; }
};

bool ma_invertible(const Eigen::VectorXd& theta, const Layout& l) {
    if (l.q == 0) return true;
    std::vector<double> neg(static_cast<std::size_t>(l.q));
    for (int j = 0; j < l.q; ++j) neg[static_cast<std::size_t>(j)] = -theta[l.ma(j)];
    return max_root_modulus(neg) < kMaRootLimit;
}

struct Problem {
    std::span<const std::optional<double>> y;
    const Eigen::MatrixXd& x;
    Layout layout;
    std::vector<char> in_sample;  // contributes to the likelihood
    std::vector<char> has_resid;  // residual defined (own value and AR lags observed)
    std::size_t n_sample = 0;
};

Problem make_problem(std::span<const std::optional<double>> y, const Eigen::MatrixXd& x, int p,
                     int q, int sample_start) {
    Problem pr{y, x, Layout{p, q, static_cast<int>(x.cols())}, {}, {}, 0};
    const std::size_t n = y.size();
    pr.in_sample.assign(n, 0);
    pr.has_resid.assign(n, 0);
    const std::size_t start = static_cast<std::size_t>(std::max(sample_start, p));
    for (std::size_t t = 0; t < n; ++t) {
        if (!y[t] || t < static_cast<std::size_t>(p)) continue;
        bool lags_ok = true;
        for (int i = 1; i <= p; ++i) lags_ok = lags_ok && y[t - static_cast<std::size_t>(i)].has_value();
        if (!lags_ok) continue;
        pr.has_resid[t] = 1;
        if (t < start) continue;
        // The common sample also needs the lags up to sample_start observed so
        // every grid cell sees the same observations.
        bool common_ok = true;
        for (std::size_t i = static_cast<std::size_t>(p) + 1; i <= start && i <= t; ++i) {
            common_ok = common_ok && y[t - i].has_value();
        }
        if (common_ok) {
            pr.in_sample[t] = 1;
            ++pr.n_sample;
        }
    }
    return pr;
}

// Residuals (and optionally their Jacobian) for parameter vector theta.
double residuals(const Problem& pr, const Eigen::VectorXd& theta, std::vector<double>& eps,
                 Eigen::MatrixXd* jac) {
    const Layout& l = pr.layout;
    const std::size_t n = pr.y.size();
    eps.assign(n, 0.0);
    Eigen::MatrixXd deriv;
    if (jac) {
        deriv = Eigen::MatrixXd::Zero(l.size(), static_cast<Eigen::Index>(n));
        jac->resize(static_cast<Eigen::Index>(pr.n_sample), l.size());
    }
    Eigen::VectorXd z(l.size());
    double ssr = 0.0;
    Eigen::Index row = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (!pr.has_resid[t]) continue;
        z[0] = 1.0;
        double mu = theta[0];
        for (int i = 0; i < l.p; ++i) {
            const double v = *pr.y[t - 1 - static_cast<std::size_t>(i)];
            z[l.ar(i)] = v;
            mu += theta[l.ar(i)] * v;
        }
        for (int j = 0; j < l.q; ++j) {
            const std::size_t lag = static_cast<std::size_t>(j) + 1;
            const double e = t >= lag ? eps[t - lag] : 0.0;
            z[l.ma(j)] = e;
            mu += theta[l.ma(j)] * e;
        }
        for (int e = 0; e < l.k; ++e) {
            const double v = pr.x(static_cast<Eigen::Index>(t), e);
            z[l.ex(e)] = v;
            mu += theta[l.ex(e)] * v;
        }
        eps[t] = *pr.y[t] - mu;
        if (jac) {
            Eigen::VectorXd d = -z;
            for (int j = 0; j < l.q; ++j) {
                const std::size_t lag = static_cast<std::size_t>(j) + 1;
                if (t >= lag) d -= theta[l.ma(j)] * deriv.col(static_cast<Eigen::Index>(t - lag));
            }
            deriv.col(static_cast<Eigen::Index>(t)) = d;
        }
        if (pr.in_sample[t]) {
            ssr += eps[t] * eps[t];
            if (jac) jac->row(row++) = deriv.col(static_cast<Eigen::Index>(t)).transpose();
        }
    }
    return ssr;
}

// Ordinary least squares of y_t on the given regressor builder over the sample.
template <class RowFn>
std::optional<Eigen::VectorXd> ols(const Problem& pr, int cols, RowFn&& row_of) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(pr.n_sample), cols);
    Eigen::VectorXd b(static_cast<Eigen::Index>(pr.n_sample));
    Eigen::Index r = 0;
    for (std::size_t t = 0; t < pr.y.size(); ++t) {
        if (!pr.in_sample[t]) continue;
        a.row(r) = row_of(t);
        b[r] = *pr.y[t];
        ++r;
    }
    if (r < cols) return std::nullopt;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < cols) {
        // Rank-deficient design (e.g. a constant exogenous column): least
        // squares via complete orthogonal decomposition gives the
        // minimum-norm solution.
        Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(b);
        if (!sol.allFinite()) return std::nullopt;
        return sol;
    }
    Eigen::VectorXd sol = qr.solve(b);
    if (!sol.allFinite()) return std::nullopt;
    return sol;
}

Eigen::VectorXd initial_guess(const Problem& pr) {
    const Layout& l = pr.layout;
    auto base_row = [&](std::size_t t, Eigen::RowVectorXd& row) {
        row[0] = 1.0;
        for (int i = 0; i < l.p; ++i) row[l.ar(i)] = *pr.y[t - 1 - static_cast<std::size_t>(i)];
        for (int e = 0; e < l.k; ++e) row[l.ex(e)] = pr.x(static_cast<Eigen::Index>(t), e);
    };
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(l.size());

    if (l.q == 0) {
        auto sol = ols(pr, l.size(), [&](std::size_t t) {
            Eigen::RowVectorXd row(l.size());
            base_row(t, row);
            return row;
        });
        if (sol) theta = *sol;
        return theta;
    }

    // Hannan-Rissanen: residuals from a long autoregression stand in for the
    // unobserved innovations.
    const std::size_t n = pr.y.size();
    const int long_order = std::min(std::max(2 * (l.p + l.q), 4),
                                    std::max(1, static_cast<int>(pr.n_sample / 4)));
    Problem ar_long = make_problem(pr.y, pr.x, long_order, 0, long_order);
    std::vector<double> innov(n, 0.0);
    if (ar_long.n_sample > static_cast<std::size_t>(long_order + l.k + 1)) {
        Layout al{long_order, 0, l.k};
        ar_long.layout = al;
        auto sol = ols(ar_long, al.size(), [&](std::size_t t) {
            Eigen::RowVectorXd row(al.size());
            row[0] = 1.0;
            for (int i = 0; i < al.p; ++i) row[al.ar(i)] = *pr.y[t - 1 - static_cast<std::size_t>(i)];
            for (int e = 0; e < al.k; ++e) row[al.ex(e)] = pr.x(static_cast<Eigen::Index>(t), e);
            return row;
        });
        if (sol) {
            std::vector<double> e;
            residuals(ar_long, *sol, e, nullptr);
            innov = e;
        }
    }
    auto sol = ols(pr, l.size(), [&](std::size_t t) {
        Eigen::RowVectorXd row(l.size());
        base_row(t, row);
        for (int j = 0; j < l.q; ++j) {
            const std::size_t lag = static_cast<std::size_t>(j) + 1;
            row[l.ma(j)] = t >= lag ? innov[t - lag] : 0.0;
        }
        return row;
    });
    if (sol) theta = *sol;
    if (!ma_invertible(theta, l)) {
        for (int j = 0; j < l.q; ++j) theta[l.ma(j)] = 0.0;
    }
    return theta;
}

struct CellFit {
    Eigen::VectorXd theta;
    double ssr = std::numeric_limits<double>::infinity();
    bool converged = false;
};

CellFit minimise(const Problem& pr, const ArmaxOptions& opt) {
    CellFit fit;
    fit.theta = initial_guess(pr);
    std::vector<double> eps;
    if (pr.layout.q == 0) {
        // Conditional likelihood with no MA terms is exactly least squares.
        fit.ssr = residuals(pr, fit.theta, eps, nullptr);
        fit.converged = std::isfinite(fit.ssr);
        return fit;
    }

    Eigen::MatrixXd jac;
    double ssr = residuals(pr, fit.theta, eps, &jac);
    double lambda = 1e-3;
    for (int it = 0; it < opt.max_iterations; ++it) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(pr.n_sample));
        Eigen::Index row = 0;
        for (std::size_t t = 0; t < eps.size(); ++t) {
            if (pr.in_sample[t]) r[row++] = eps[t];
        }
        const Eigen::VectorXd grad = jac.transpose() * r;
        const Eigen::MatrixXd h = jac.transpose() * jac;
        Eigen::VectorXd diag = h.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        for (int tries = 0; tries < 20; ++tries) {
            Eigen::MatrixXd a = h;
            a.diagonal() += lambda * diag;
            const Eigen::VectorXd step = a.ldlt().solve(-grad);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = fit.theta + step;
            if (!ma_invertible(trial, pr.layout)) {
                lambda *= 10.0;
                continue;
            }
            std::vector<double> trial_eps;
            Eigen::MatrixXd trial_jac;
            const double trial_ssr = residuals(pr, trial, trial_eps, &trial_jac);
            if (std::isfinite(trial_ssr) && trial_ssr <= ssr) {
                const double rel = (ssr - trial_ssr) / std::max(ssr, 1e-300);
                fit.theta = trial;
                eps = std::move(trial_eps);
                jac = std::move(trial_jac);
                ssr = trial_ssr;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel < opt.tolerance) fit.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No descent direction left at any damping: a (local) minimum.
            fit.converged = true;
        }
        if (fit.converged) break;
    }
    fit.ssr = ssr;
    return fit;
}

ArmaxModel assemble(const Problem& pr, const CellFit& fit) {
    const Layout& l = pr.layout;
    ArmaxModel m;
    m.p = l.p;
    m.q = l.q;
    m.intercept = fit.theta[0];
    for (int i = 0; i < l.p; ++i) m.ar.push_back(fit.theta[l.ar(i)]);
    for (int j = 0; j < l.q; ++j) m.ma.push_back(fit.theta[l.ma(j)]);
    for (int e = 0; e < l.k; ++e) m.exog.push_back(fit.theta[l.ex(e)]);
    m.n_effective = pr.n_sample;
    const double n = static_cast<double>(pr.n_sample);
    m.sigma2 = fit.ssr / n;
    // Guard against an exact fit; log(0) would make AIC -inf.
    const double s2 = std::max(m.sigma2, 1e-300);
    m.log_likelihood = -0.5 * n * (std::log(2.0 * std::numbers::pi * s2) + 1.0);
    m.aic = -2.0 * m.log_likelihood + 2.0 * static_cast<double>(m.num_parameters() + 1);
    m.converged = fit.converged;
    m.stationary = max_root_modulus(m.ar) < 1.0;
    std::vector<double> neg_ma;
    for (double b : m.ma) neg_ma.push_back(-b);
    m.invertible = max_root_modulus(neg_ma) < 1.0;
    residuals(pr, fit.theta, m.residuals, nullptr);
    return m;
}

std::size_t observed_count(std::span<const std::optional<double>> y) {
    return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](const auto& v) { return v.has_value(); }));
}

void check_inputs(std::span<const std::optional<double>> series, const Eigen::MatrixXd& exog) {
    if (static_cast<Eigen::Index>(series.size()) != exog.rows()) {
        throw ContractError(fmt::format("ARMAX: series length {} but {} exogenous rows",
                                        series.size(), exog.rows()));
    }
    if (!exog.allFinite()) throw ContractError("ARMAX: missing exogenous value");
}

}  // namespace

ArmaxModel fit_armax_order(std::span<const std::optional<double>> series,
                           const Eigen::MatrixXd& exog, int p, int q, const ArmaxOptions& options,
                           int sample_start) {
    check_inputs(series, exog);
    if (p < 0 || q < 0) throw ContractError("ARMAX: orders must be non-negative");
    const Problem pr = make_problem(series, exog, p, q, sample_start < 0 ? p : sample_start);
    const auto npar = static_cast<std::size_t>(pr.layout.size());
    if (pr.n_sample <= npar) {
        throw FitError(fmt::format("ARMAX({},{}): {} usable observations for {} parameters", p, q,
                                   pr.n_sample, npar));
    }
    const CellFit fit = minimise(pr, options);
    if (!std::isfinite(fit.ssr) || !fit.theta.allFinite()) {
        throw FitError(fmt::format("ARMAX({},{}): estimation failed", p, q));
    }
    ArmaxModel m = assemble(pr, fit);
    m.state = condition(m, series, exog);
    return m;
}

ArmaxModel fit_armax(std::span<const std::optional<double>> series, const Eigen::MatrixXd& exog,
                     const ArmaxOptions& options, std::vector<std::string> exog_names) {
    check_inputs(series, exog);
    if (options.max_p < 0 || options.max_q < 0) {
        throw ContractError("ARMAX: maximum orders must be non-negative");
    }
    const std::size_t k = static_cast<std::size_t>(exog.cols());
    const std::size_t needed =
        std::max<std::size_t>(5 * (static_cast<std::size_t>(options.max_p + options.max_q) + k), 2);
    const std::size_t observed = observed_count(series);
    if (observed < needed) {
        throw FitError(fmt::format("ARMAX: insufficient data ({} observations, need {})", observed,
                                   needed));
    }

    // Exhaustive grid in (p+q, p) order so a strict '<' breaks ties toward
    // smaller models.
    std::vector<std::pair<int, int>> cells;
    for (int p = 0; p <= options.max_p; ++p) {
        for (int q = 0; q <= options.max_q; ++q) cells.emplace_back(p, q);
    }
    std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
        if (a.first + a.second != b.first + b.second) return a.first + a.second < b.first + b.second;
        return a.first < b.first;
    });

    std::optional<ArmaxModel> best;
    std::vector<AicEntry> table;
    for (const auto& [p, q] : cells) {
        AicEntry entry{p, q, std::numeric_limits<double>::infinity(), false, false};
        const Problem pr = make_problem(series, exog, p, q, options.max_p);
        if (pr.n_sample > static_cast<std::size_t>(pr.layout.size())) {
            const CellFit fit = minimise(pr, options);
            if (std::isfinite(fit.ssr) && fit.theta.allFinite()) {
                ArmaxModel m = assemble(pr, fit);
                entry.aic = m.aic;
                std::vector<double> neg_ma;
                for (double b : m.ma) neg_ma.push_back(-b);
                entry.near_unit_root = max_root_modulus(m.ar) >= options.root_limit ||
                                       max_root_modulus(neg_ma) >= options.root_limit;
                entry.common_root =
                    min_common_root_distance(m.ar, m.ma) < options.common_root_tolerance;
                entry.ok = std::isfinite(m.aic) && !entry.near_unit_root && !entry.common_root;
                entry.converged = m.converged;
                if (entry.ok && (!best || m.aic < best->aic)) best = std::move(m);
            }
        }
        table.push_back(entry);
    }
    if (!best) throw FitError("ARMAX: estimation failed for every grid cell");

    best->aic_table = std::move(table);
    best->exog_names = std::move(exog_names);
    best->state = condition(*best, series, exog);
    return *best;
}

ArmaxState condition(const ArmaxModel& model, std::span<const std::optional<double>> history,
                     const Eigen::MatrixXd& exog_history) {
    check_inputs(history, exog_history);
    if (exog_history.cols() != static_cast<Eigen::Index>(model.exog.size())) {
        throw ContractError("ARMAX: exogenous dimension mismatch");
    }
    const std::size_t n = history.size();
    const std::size_t p = model.ar.size(), q = model.ma.size();

    double mean = model.intercept;
    if (const std::size_t obs = observed_count(history); obs > 0) {
        mean = 0.0;
        for (const auto& v : history) {
            if (v) mean += *v;
        }
        mean /= static_cast<double>(obs);
    }

    std::vector<double> filled(n, 0.0), eps(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        if (t < p) {
            filled[t] = history[t].value_or(mean);
            continue;
        }
        double mu = model.intercept;
        for (std::size_t i = 0; i < p; ++i) mu += model.ar[i] * filled[t - 1 - i];
        for (std::size_t j = 0; j < q; ++j) {
            if (t >= j + 1) mu += model.ma[j] * eps[t - 1 - j];
        }
        for (std::size_t e = 0; e < model.exog.size(); ++e) {
            mu += model.exog[e] * exog_history(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(e));
        }
        if (history[t]) {
            filled[t] = *history[t];
            eps[t] = filled[t] - mu;
        } else {
            filled[t] = mu;
        }
    }

    ArmaxState s;
    for (std::size_t i = 0; i < p; ++i) s.values.push_back(i < n ? filled[n - 1 - i] : mean);
    for (std::size_t j = 0; j < q; ++j) s.residuals.push_back(j < n ? eps[n - 1 - j] : 0.0);
    return s;
}

double forecast_price(const ArmaxModel& model, const ArmaxState& state,
                      const Eigen::MatrixXd& exog_path, int steps) {
    if (steps < 1) throw ContractError("forecast_price: steps must be >= 1");
    if (exog_path.rows() != steps || exog_path.cols() != static_cast<Eigen::Index>(model.exog.size())) {
        throw ContractError(fmt::format("forecast_price: expected {}x{} exogenous path, got {}x{}",
                                        steps, model.exog.size(), exog_path.rows(), exog_path.cols()));
    }
    if (!exog_path.allFinite()) throw ContractError("forecast_price: missing exogenous value");
    if (state.values.size() < model.ar.size() || state.residuals.size() < model.ma.size()) {
        throw ContractError("forecast_price: residual history not populated");
    }
    std::vector<double> values = state.values;
    std::vector<double> resid = state.residuals;
    double f = 0.0;
    for (int s = 0; s < steps; ++s) {
        f = model.intercept;
        for (std::size_t i = 0; i < model.ar.size(); ++i) f += model.ar[i] * values[i];
        for (std::size_t j = 0; j < model.ma.size(); ++j) f += model.ma[j] * resid[j];
        for (std::size_t e = 0; e < model.exog.size(); ++e) {
            f += model.exog[e] * exog_path(s, static_cast<Eigen::Index>(e));
        }
        values.insert(values.begin(), f);
        resid.insert(resid.begin(), 0.0);
    }
    return f;
}

nlohmann::json to_json(const ArmaxModel& model) {
    nlohmann::json j;
    j["order"] = {model.p, model.q};
    j["intercept"] = model.intercept;
    j["ar"] = model.ar;
    j["ma"] = model.ma;
    j["exog"] = model.exog;
    j["exog_names"] = model.exog_names;
    j["sigma2"] = model.sigma2;
    j["log_likelihood"] = model.log_likelihood;
    j["aic"] = model.aic;
    j["n_effective"] = model.n_effective;
    j["converged"] = model.converged;
    j["stationary"] = model.stationary;
    j["invertible"] = model.invertible;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& e : model.aic_table) {
        table.push_back({{"p", e.p}, {"q", e.q}, {"aic", e.ok ? nlohmann::json(e.aic) : nlohmann::json()},
                         {"converged", e.converged}, {"near_unit_root", e.near_unit_root},
                         {"common_root", e.common_root}});
    }
    j["aic_table"] = table;
    return j;
}

}  // namespace balbid::price
