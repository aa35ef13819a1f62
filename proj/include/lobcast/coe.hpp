#pragma once

// Continuous-time output-error model
//
//   R(t) = B(p)/A(p) BI(t) + e(t),
//   A(p) = p^na + a1 p^(na-1) + ... + a_na,   B(p) = b0 p^nb + ... + b_nb,
//
// identified from irregularly sampled events with the simplified refined
// instrumental variable method (SRIVC), and simulated forward to predict the
// return at a future event time.
//
// Sampled-data handling: the input is zero-order held between events. Every
// continuous filter is discretized exactly over each inter-event interval.
// The output's intersample path is taken as the auxiliary-model output plus
// a residual interpolated linearly between events, so the prefilter sees the
// model's smooth response and only the (small) misfit is interpolated.

#include "lobcast/errors.hpp"
#include "lobcast/stats.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lobcast::coe {

struct CoeParams {
    std::vector<double> a;  // a1 .. a_na
    std::vector<double> b;  // b0 .. b_nb

    [[nodiscard]] std::size_t na() const noexcept { return a.size(); }
    [[nodiscard]] std::size_t nb() const noexcept { return b.empty() ? 0 : b.size() - 1; }

    /// Steady-state gain b_nb / a_na.
    [[nodiscard]] double dc_gain() const { return b.back() / a.back(); }
};

struct CoeFitConfig {
    std::size_t na{2};
    std::size_t nb{1};
    std::size_t max_iterations{30};
    double tolerance{1e-4};  // relative parameter change
    // initial state-variable filter bandwidth; <= 0 picks the median event rate
    double prefilter_bandwidth{0.0};
    double regularization{1e-10};
    double informative_fit_percent{5.0};
};

enum class CoeFailure { insufficient_data, singular, unstable };

class CoeFitError : public std::runtime_error {
public:
    CoeFitError(CoeFailure kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] CoeFailure kind() const noexcept { return kind_; }

private:
    CoeFailure kind_;
};

struct CoeDiagnostics {
    std::size_t iterations{0};
    bool converged{false};
    bool regularized{false};
    bool non_informative{false};
    double residual_rms{0.0};
    double fit_percent{0.0};
    // RMS output error of the auxiliary model used at each iteration
    std::vector<double> output_error_trace;
};

struct CoeFit {
    CoeParams params;
    CoeDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// Polynomials

/// Roots of p^n + a1 p^(n-1) + ... + a_n.
[[nodiscard]] inline std::vector<std::complex<double>> roots(std::span<const double> a) {
    const auto n = static_cast<Eigen::Index>(a.size());
    if (n == 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = -a[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    std::vector<std::complex<double>> r(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return r;
}

[[nodiscard]] inline bool is_stable(std::span<const double> a) {
    for (const auto& r : roots(a))
        if (!(r.real() < 0.0)) return false;
    return true;
}

/// Monic polynomial coefficients [a1..an] from its roots.
[[nodiscard]] inline std::vector<double> from_roots(const std::vector<std::complex<double>>& r) {
    std::vector<std::complex<double>> c{1.0};
    for (const auto& root : r) {
        std::vector<std::complex<double>> next(c.size() + 1, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i] += c[i];
            next[i + 1] -= c[i] * root;
        }
        c = std::move(next);
    }
    std::vector<double> a(r.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = c[i + 1].real();
    return a;
}

/// Reflects roots with non-negative real part into the open left half-plane.
[[nodiscard]] inline std::vector<double> stabilize(std::span<const double> a) {
    auto r = roots(a);
    for (auto& root : r) {
        if (root.real() >= 0.0) root = {-std::max(root.real(), 1e-6), root.imag()};
    }
    return from_roots(r);
}

// ---------------------------------------------------------------------------
// State space

struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D{0.0};
};

/// Controllable canonical form with states [f, p f, ..., p^(na-1) f], f = u / A(p).
[[nodiscard]] inline Eigen::MatrixXd companion_matrix(std::span<const double> a) {
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j + 1 < n; ++j) A(j, j + 1) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) A(n - 1, j) = -a[static_cast<std::size_t>(n - 1 - j)];
    return A;
}

[[nodiscard]] inline StateSpace to_state_space(const CoeParams& p) {
    const std::size_t na = p.na();
    const std::size_t nb = p.nb();
    if (na == 0 || p.b.empty() || nb > na) throw std::invalid_argument("CoeParams: require na >= nb and na >= 1");
    StateSpace ss;
    ss.A = companion_matrix(p.a);
    ss.B = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(na));
    ss.B(static_cast<Eigen::Index>(na - 1)) = 1.0;
    ss.C = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(na));
    for (std::size_t i = 0; i <= nb; ++i) {
        const std::size_t power = nb - i;
        if (power < na) {
            ss.C(static_cast<Eigen::Index>(power)) += p.b[i];
        } else {  // p^na f = u - sum a_{na-j} p^j f
            ss.D = p.b[i];
            for (std::size_t j = 0; j < na; ++j) ss.C(static_cast<Eigen::Index>(j)) -= p.b[i] * p.a[na - 1 - j];
        }
    }
    return ss;
}

/// Exact zero-order-hold transition over an interval h:
/// x(h) = Phi x(0) + Gamma w for piecewise-constant input w.
struct ZohStep {
    Eigen::MatrixXd Phi;
    Eigen::MatrixXd Gamma;
};

[[nodiscard]] inline ZohStep zoh(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G, double h) {
    const Eigen::Index n = F.rows();
    const Eigen::Index m = G.cols();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = F * h;
    M.topRightCorner(n, m) = G * h;
    const Eigen::MatrixXd E = M.exp();
    return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

/// Forward simulator for an identified model.
class CoeModel {
public:
    explicit CoeModel(CoeParams params) : params_(std::move(params)), ss_(to_state_space(params_)) {}

    [[nodiscard]] const CoeParams& params() const noexcept { return params_; }
    [[nodiscard]] Eigen::VectorXd zero_state() const { return Eigen::VectorXd::Zero(ss_.A.rows()); }

    /// Holds input u for h seconds.
    void advance(Eigen::VectorXd& x, double u, double h) const {
        if (h < 0.0) throw ContractViolation("CoeModel::advance: negative interval");
        if (h == 0.0) return;
        const auto step = zoh(ss_.A, ss_.B, h);
        x = step.Phi * x + step.Gamma.col(0) * u;
    }

    [[nodiscard]] double output(const Eigen::VectorXd& x, double u) const { return ss_.C.dot(x) + ss_.D * u; }

    /// State at each event time when input bi[k] is held on [t_k, t_{k+1}).
    /// The first state is zero.
    [[nodiscard]] std::vector<Eigen::VectorXd> states_at_events(std::span<const double> times,
                                                                std::span<const double> bi) const {
        if (times.size() != bi.size()) throw std::invalid_argument("states_at_events: size mismatch");
        std::vector<Eigen::VectorXd> out;
        out.reserve(times.size());
        Eigen::VectorXd x = zero_state();
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (k > 0) {
                if (times[k] < times[k - 1]) throw ContractViolation("states_at_events: times must be sorted");
                advance(x, bi[k - 1], times[k] - times[k - 1]);
            }
            out.push_back(x);
        }
        return out;
    }

    /// Simulated (noise-free) output at each event time.
    [[nodiscard]] std::vector<double> simulate(std::span<const double> times, std::span<const double> bi) const {
        const auto states = states_at_events(times, bi);
        std::vector<double> y(times.size());
        for (std::size_t k = 0; k < times.size(); ++k) {
            // output at t_k sees the input held since t_{k-1}
            const double u = k > 0 ? bi[k - 1] : 0.0;
            y[k] = output(states[k], u);
        }
        return y;
    }

    /// Output after holding `u` for `h` seconds from state `x`.
    [[nodiscard]] double predict_from(const Eigen::VectorXd& x, double u, double h) const {
        Eigen::VectorXd z = x;
        advance(z, u, h);
        return output(z, u);
    }

private:
    CoeParams params_;
    StateSpace ss_;
};

/// Predicted return at t_hat: simulate the history from rest (input bi[k] on
/// [t_k, t_{k+1})), then hold bi_now from the last history time to t_hat.
[[nodiscard]] inline double coe_predict(const CoeParams& params, std::span<const double> times,
                                        std::span<const double> bi, double bi_now, double t_hat) {
    if (times.empty()) throw std::invalid_argument("coe_predict: empty history");
    if (t_hat < times.back()) throw ContractViolation("coe_predict: t_hat precedes the last history event");
    const CoeModel model(params);
    const auto states = model.states_at_events(times, bi);
    return model.predict_from(states.back(), bi_now, t_hat - times.back());
}

// ---------------------------------------------------------------------------
// SRIVC

namespace detail {

struct IvPass {
    Eigen::MatrixXd normal;  // sum zeta phi^T
    Eigen::VectorXd rhs;     // sum zeta p^na y_f
    double output_error_rms{0.0};
};

// One filtering pass. `a_hat`, `b_hat` define the prefilter 1/A_hat and the
// auxiliary model B_hat/A_hat; with use_instruments = false the regressor
// itself is the instrument (least-squares state-variable filter step).
inline IvPass iv_pass(std::span<const double> t, std::span<const double> u, std::span<const double> y,
                      const std::vector<double>& a_hat, const std::vector<double>& b_hat, std::size_t nb,
                      bool use_instruments, double burn_time) {
    const auto na = static_cast<Eigen::Index>(a_hat.size());
    const Eigen::Index np = na + static_cast<Eigen::Index>(nb) + 1;
    const StateSpace model = to_state_space(CoeParams{a_hat, b_hat});
    const Eigen::MatrixXd& Ac = model.A;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(na);
    e(na - 1) = 1.0;

    // residuals of the auxiliary model at the events
    const std::vector<double> xhat = CoeModel(CoeParams{a_hat, b_hat}).simulate(t, u);
    std::vector<double> res(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) res[k] = y[k] - xhat[k];

    // z = [m (model / input filter), g (filtered model output), q (filtered residual),
    //      rho (residual, linear between events), sigma (its slope)]
    const Eigen::Index n = 3 * na + 2;
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    F.block(0, 0, na, na) = Ac;
    F.block(na, 0, na, na) = e * model.C;
    F.block(na, na, na, na) = Ac;
    F.block(2 * na, 2 * na, na, na) = Ac;
    F.block(2 * na, 3 * na, na, 1) = e;
    F(3 * na, 3 * na + 1) = 1.0;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, 1);
    G.block(0, 0, na, 1) = e;
    G.block(na, 0, na, 1) = e * model.D;

    IvPass out;
    out.normal = Eigen::MatrixXd::Zero(np, np);
    out.rhs = Eigen::VectorXd::Zero(np);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd phi(np), zeta(np);
    double err2 = 0.0;
    std::size_t err_n = 0;

    for (std::size_t k = 0; k < t.size(); ++k) {
        const Eigen::VectorXd m = z.segment(0, na);
        const Eigen::VectorXd g = z.segment(na, na);
        const Eigen::VectorXd q = z.segment(2 * na, na);
        const double u_prev = k > 0 ? u[k - 1] : 0.0;
        const double r = res[k];
        const Eigen::VectorXd yf = g + q;

        if (t[k] - t.front() >= burn_time) {
            err2 += r * r;
            ++err_n;
            // p^na y_f at t_k, using the measured output
            double target = y[k];
            for (Eigen::Index j = 0; j < na; ++j) target -= a_hat[static_cast<std::size_t>(na - 1 - j)] * yf(j);
            // p^nb u_f: a state unless nb == na (then the filter equation gives it)
            auto u_deriv = [&](std::size_t power) {
                if (static_cast<Eigen::Index>(power) < na) return m(static_cast<Eigen::Index>(power));
                double v = u_prev;
                for (Eigen::Index j = 0; j < na; ++j) v -= a_hat[static_cast<std::size_t>(na - 1 - j)] * m(j);
                return v;
            };
            for (Eigen::Index i = 0; i < na; ++i) {
                phi(i) = -yf(na - 1 - i);
                zeta(i) = use_instruments ? -g(na - 1 - i) : phi(i);
            }
            for (std::size_t i = 0; i <= nb; ++i) {
                const auto idx = na + static_cast<Eigen::Index>(i);
                phi(idx) = u_deriv(nb - i);
                zeta(idx) = phi(idx);
            }
            out.normal.noalias() += zeta * phi.transpose();
            out.rhs.noalias() += zeta * target;
        }

        if (k + 1 < t.size()) {
            const double h = t[k + 1] - t[k];
            z(3 * na) = r;
            z(3 * na + 1) = (res[k + 1] - r) / h;
            const auto step = zoh(F, G, h);
            z = step.Phi * z + step.Gamma.col(0) * u[k];
        }
    }
    out.output_error_rms = err_n > 0 ? std::sqrt(err2 / static_cast<double>(err_n)) : 0.0;
    return out;
}

inline std::vector<double> poly_power(double root_magnitude, std::size_t order) {
    std::vector<std::complex<double>> r(order, std::complex<double>(-root_magnitude, 0.0));
    return from_roots(r);
}

inline double slowest_pole(const std::vector<double>& a) {
    double slow = std::numeric_limits<double>::infinity();
    for (const auto& r : roots(a)) slow = std::min(slow, std::abs(r.real()));
    return slow;
}

}  // namespace detail

/// Identifies CoeParams from events (t_k, BI_k, R_k). BI_k is held on
/// [t_k, t_{k+1}); R_k is the output sampled at t_k.
[[nodiscard]] inline CoeFit srivc_fit(std::span<const double> times, std::span<const double> bi,
                                      std::span<const double> r, const CoeFitConfig& cfg = {}) {
    if (times.size() != bi.size() || times.size() != r.size())
        throw std::invalid_argument("srivc_fit: times, bi and r must have equal length");
    if (cfg.nb > cfg.na || cfg.na == 0) throw std::invalid_argument("srivc_fit: require na >= nb, na >= 1");
    if (cfg.max_iterations == 0 || !(cfg.tolerance > 0.0))
        throw std::invalid_argument("srivc_fit: max_iterations >= 1 and tolerance > 0 required");
    const std::size_t np = cfg.na + cfg.nb + 1;
    if (times.size() < 10 * np)
        throw CoeFitError(CoeFailure::insufficient_data,
                          "srivc_fit: need at least " + std::to_string(10 * np) + " events, got " +
                              std::to_string(times.size()));
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ContractViolation("srivc_fit: times must be strictly increasing");

    // unit-variance scaling of input and output keeps the normal equations balanced
    const double su = stats::stddev(bi);
    const double sy = stats::stddev(r);
    if (!(su > 0.0) || !(sy > 0.0))
        throw CoeFitError(CoeFailure::insufficient_data, "srivc_fit: input or output has zero variance");
    std::vector<double> u(bi.begin(), bi.end()), y(r.begin(), r.end());
    for (auto& v : u) v /= su;
    for (auto& v : y) v /= sy;

    std::vector<double> gaps(times.size() - 1);
    for (std::size_t k = 0; k + 1 < times.size(); ++k) gaps[k] = times[k + 1] - times[k];
    const double bandwidth = cfg.prefilter_bandwidth > 0.0 ? cfg.prefilter_bandwidth : 1.0 / stats::median(gaps);
    const double span = times.back() - times.front();

    std::vector<double> a_hat = detail::poly_power(bandwidth, cfg.na);
    std::vector<double> b_hat(cfg.nb + 1, 0.0);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));

    CoeFit fit;
    auto& diag = fit.diagnostics;
    std::optional<Eigen::VectorXd> last_stable;

    for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
        const double burn = std::min(10.0 / detail::slowest_pole(a_hat), 0.25 * span);
        const auto pass = detail::iv_pass(times, u, y, a_hat, b_hat, cfg.nb, iter > 0, burn);
        if (iter > 0) diag.output_error_trace.push_back(pass.output_error_rms);

        Eigen::VectorXd next;
        {
            Eigen::FullPivLU<Eigen::MatrixXd> lu(pass.normal);
            const double scale = pass.normal.cwiseAbs().maxCoeff();
            if (lu.rank() == static_cast<Eigen::Index>(np) && lu.rcond() > 1e-14) {
                next = lu.solve(pass.rhs);
            }
            if (next.size() == 0 || !next.allFinite()) {
                diag.regularized = true;
                const Eigen::MatrixXd reg =
                    pass.normal + cfg.regularization * std::max(scale, 1.0) *
                                      Eigen::MatrixXd::Identity(pass.normal.rows(), pass.normal.cols());
                next = reg.colPivHouseholderQr().solve(pass.rhs);
                if (!next.allFinite())
                    throw CoeFitError(CoeFailure::singular, "srivc_fit: singular normal equations");
            }
        }

        if (last_stable && !is_stable(std::vector<double>(next.data(), next.data() + cfg.na))) {
            // damp an unstable step back toward the last stable estimate
            for (int halving = 0; halving < 30; ++halving) {
                next = 0.5 * (next + *last_stable);
                if (is_stable(std::vector<double>(next.data(), next.data() + cfg.na))) break;
            }
        }
        const double change = (next - theta).norm() / std::max(next.norm(), 1e-12);
        theta = next;
        diag.iterations = iter + 1;

        std::vector<double> a_new(theta.data(), theta.data() + cfg.na);
        if (is_stable(a_new)) {
            last_stable = theta;
            a_hat = a_new;
        } else {
            a_hat = stabilize(a_new);
        }
        b_hat.assign(theta.data() + cfg.na, theta.data() + np);

        if (iter > 0 && change < cfg.tolerance && last_stable && *last_stable == theta) {
            diag.converged = true;
            break;
        }
    }

    if (!last_stable) throw CoeFitError(CoeFailure::unstable, "srivc_fit: no stable estimate at any iteration");
    const Eigen::VectorXd& best = *last_stable;
    fit.params.a.assign(best.data(), best.data() + cfg.na);
    fit.params.b.assign(best.data() + cfg.na, best.data() + np);
    for (auto& bv : fit.params.b) bv *= sy / su;

    const CoeModel model(fit.params);
    const auto sim = model.simulate(times, bi);
    double ss_res = 0.0, ss_tot = 0.0;
    const double ybar = stats::mean(r);
    for (std::size_t k = 0; k < r.size(); ++k) {
        ss_res += (r[k] - sim[k]) * (r[k] - sim[k]);
        ss_tot += (r[k] - ybar) * (r[k] - ybar);
    }
    diag.residual_rms = std::sqrt(ss_res / static_cast<double>(r.size()));
    diag.fit_percent = ss_tot > 0.0 ? 100.0 * (1.0 - std::sqrt(ss_res / ss_tot)) : 0.0;
    diag.non_informative = diag.fit_percent < cfg.informative_fit_percent;
    return fit;
}

}  // namespace lobcast::coe
