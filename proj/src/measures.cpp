#include "alignsim/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "alignsim/io.hpp"
#include "alignsim/transport.hpp"

namespace alignsim {

namespace {

double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void check_measure(const AtomicMeasure& mu, const char* who) {
    if (mu.dim < 1) throw ConfigError(std::string(who) + ": dim must be >= 1");
    if (mu.points.size() != mu.weights.size() * static_cast<std::size_t>(mu.dim))
        throw ConfigError(std::string(who) + ": points/weights length mismatch");
    for (std::size_t i = 0; i < mu.weights.size(); ++i) {
        if (!(mu.weights[i] >= 0.0))
            throw ConfigError(std::string(who) + ": negative or non-finite weight at atom " +
                              std::to_string(i));
    }
    for (double x : mu.points)
        if (!std::isfinite(x))
            throw NumericalError(std::string(who) + ": non-finite atom position");
}

// Merged support of the signed difference mu - nu: positions (first
// occurrence wins) and per-node signed mass c_i.
struct SignedDiff {
    int dim;
    std::vector<double> points;
    std::vector<double> c;
    int size() const { return static_cast<int>(c.size()); }
    std::span<const double> point(int i) const {
        return {points.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

SignedDiff signed_difference(const AtomicMeasure& mu_in, const AtomicMeasure& nu_in) {
    AtomicMeasure mu = canonicalize(mu_in);
    AtomicMeasure nu = canonicalize(nu_in);
    SignedDiff d;
    d.dim = mu.dim;
    d.points = mu.points;
    d.c = mu.weights;
    for (int j = 0; j < nu.size(); ++j) {
        auto p = nu.point(j);
        int found = -1;
        for (int i = 0; i < d.size(); ++i) {
            if (dist(d.point(i), p) <= 1e-12) {
                found = i;
                break;
            }
        }
        if (found >= 0) {
            d.c[found] -= nu.weights[j];
        } else {
            d.points.insert(d.points.end(), p.begin(), p.end());
            d.c.push_back(-nu.weights[j]);
        }
    }
    return d;
}

}  // namespace

double AtomicMeasure::total_mass() const {
    return std::accumulate(weights.begin(), weights.end(), 0.0);
}

AtomicMeasure canonicalize(const AtomicMeasure& mu, double merge_tol) {
    check_measure(mu, "canonicalize");
    AtomicMeasure out;
    out.dim = mu.dim;
    for (int i = 0; i < mu.size(); ++i) {
        auto p = mu.point(i);
        int found = -1;
        for (int j = 0; j < out.size(); ++j) {
            if (dist(out.point(j), p) <= merge_tol) {
                found = j;
                break;
            }
        }
        if (found >= 0) out.weights[found] += mu.weights[i];
        else {
            out.points.insert(out.points.end(), p.begin(), p.end());
            out.weights.push_back(mu.weights[i]);
        }
    }
    return out;
}

bool is_probability(const AtomicMeasure& mu, double tol) {
    return std::abs(mu.total_mass() - 1.0) <= tol;
}

double moment(const AtomicMeasure& mu, int order) {
    check_measure(mu, "moment");
    if (order != 1 && order != 2) throw ConfigError("moment: order must be 1 or 2");
    double s = 0.0;
    for (int i = 0; i < mu.size(); ++i) {
        double r = dist(mu.point(i), std::vector<double>(mu.dim, 0.0));
        s += mu.weights[i] * (order == 1 ? r : r * r);
    }
    return s;
}

double moment(const AtomicMeasure& mu, int order, std::span<const double> field) {
    check_measure(mu, "moment");
    if (order != 1) throw ConfigError("moment: field variant requires order 1");
    if (field.size() != mu.points.size())
        throw ConfigError("moment: field length mismatch");
    std::vector<double> origin(mu.dim, 0.0);
    double s = 0.0;
    for (int i = 0; i < mu.size(); ++i) {
        double r = dist(mu.point(i), origin);
        double v = dist(field.subspan(static_cast<std::size_t>(i) * mu.dim, mu.dim), origin);
        s += mu.weights[i] * r * v;
    }
    return s;
}

double total_variation(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    check_measure(mu, "total_variation");
    check_measure(nu, "total_variation");
    if (mu.dim != nu.dim) throw ConfigError("total_variation: dimension mismatch");
    SignedDiff d = signed_difference(mu, nu);
    double tv = 0.0;
    for (double c : d.c) tv += std::abs(c);
    return tv;
}

double total_variation_weighted_sq(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    check_measure(mu, "total_variation_weighted_sq");
    check_measure(nu, "total_variation_weighted_sq");
    if (mu.dim != nu.dim) throw ConfigError("total_variation_weighted_sq: dimension mismatch");
    SignedDiff d = signed_difference(mu, nu);
    std::vector<double> origin(d.dim, 0.0);
    double tv = 0.0;
    for (int i = 0; i < d.size(); ++i) {
        double r = dist(d.point(i), origin);
        tv += r * r * std::abs(d.c[i]);
    }
    return tv;
}

MetricReport flat_metric(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    check_measure(mu, "flat_metric");
    check_measure(nu, "flat_metric");
    if (mu.dim != nu.dim) throw ConfigError("flat_metric: dimension mismatch");
    SignedDiff d = signed_difference(mu, nu);
    if (d.size() > 512)
        throw ConfigError("flat_metric: merged support too large (n = " +
                          std::to_string(d.size()) + " > 512)");

    std::vector<int> pos, neg;
    for (int i = 0; i < d.size(); ++i) {
        if (d.c[i] > 0) pos.push_back(i);
        else if (d.c[i] < 0) neg.push_back(i);
    }
    MetricReport rep;
    if (pos.empty() && neg.empty()) {
        rep.method = MetricMethod::closed_form;
        rep.value = 0.0;
        return rep;
    }

    // Dual of the node LP (maximize sum c_i phi_i, |phi_i| <= 1,
    // |phi_i - phi_j| <= |x_i - x_j|): ship the positive part of c to the
    // negative part at cost |x_i - x_j| per unit, or destroy/create mass at
    // cost 1 via a virtual sink/source. Strong duality makes the optimal
    // transport cost equal the LP value; flow on the virtual arcs is exactly
    // the multiplier of the |phi| <= 1 box.
    const int p = static_cast<int>(pos.size());
    const int q = static_cast<int>(neg.size());
    double tp = 0.0, tn = 0.0;
    for (int i : pos) tp += d.c[i];
    for (int i : neg) tn += -d.c[i];

    std::vector<double> supply(p + 1), demand(q + 1);
    for (int a = 0; a < p; ++a) supply[a] = d.c[pos[a]];
    supply[p] = tn;  // virtual source feeding mass creation
    for (int b = 0; b < q; ++b) demand[b] = -d.c[neg[b]];
    demand[q] = tp;  // virtual sink absorbing mass destruction

    std::vector<double> cost(static_cast<std::size_t>(p + 1) * (q + 1));
    for (int a = 0; a < p; ++a) {
        for (int b = 0; b < q; ++b)
            cost[static_cast<std::size_t>(a) * (q + 1) + b] = dist(d.point(pos[a]), d.point(neg[b]));
        cost[static_cast<std::size_t>(a) * (q + 1) + q] = 1.0;  // destroy
    }
    for (int b = 0; b < q; ++b) cost[static_cast<std::size_t>(p) * (q + 1) + b] = 1.0;  // create
    cost[static_cast<std::size_t>(p) * (q + 1) + q] = 0.0;

    TransportResult tr = solve_transport(supply, demand, cost);

    rep.method = MetricMethod::lp_exact;
    rep.value = tr.cost;
    rep.lp.iterations = tr.iterations;
    rep.lp.optimality_gap = tr.dual_gap;
    double scale = std::max(tp, tn);
    double virt = 0.0;
    for (int a = 0; a < p; ++a) virt = std::max(virt, tr.flow[static_cast<std::size_t>(a) * (q + 1) + q]);
    for (int b = 0; b < q; ++b) virt = std::max(virt, tr.flow[static_cast<std::size_t>(p) * (q + 1) + b]);
    rep.lp.sup_bound_active = virt > 1e-12 * std::max(scale, 1.0);
    return rep;
}

namespace {

// Exact W_p^p in 1D: transport between consecutive quantiles of the merged
// CDF walk. Atoms must be canonical (distinct positions).
double quantile_cost(const AtomicMeasure& a, const AtomicMeasure& b, int p) {
    std::vector<int> ia(a.size()), ib(b.size());
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    auto by_pos = [](const AtomicMeasure& m) {
        return [&m](int i, int j) { return m.points[i] < m.points[j]; };
    };
    std::sort(ia.begin(), ia.end(), by_pos(a));
    std::sort(ib.begin(), ib.end(), by_pos(b));
    double cost = 0.0;
    std::size_t i = 0, j = 0;
    double ra = a.size() ? a.weights[ia[0]] : 0.0;
    double rb = b.size() ? b.weights[ib[0]] : 0.0;
    while (i < ia.size() && j < ib.size()) {
        double m = std::min(ra, rb);
        double dx = std::abs(a.points[ia[i]] - b.points[ib[j]]);
        cost += m * (p == 1 ? dx : dx * dx);
        ra -= m;
        rb -= m;
        if (ra <= 0.0) {
            ++i;
            if (i < ia.size()) ra = a.weights[ia[i]];
        }
        if (rb <= 0.0) {
            ++j;
            if (j < ib.size()) rb = b.weights[ib[j]];
        }
    }
    return cost;
}

}  // namespace

MetricReport wasserstein(const AtomicMeasure& mu, const AtomicMeasure& nu, int p) {
    check_measure(mu, "wasserstein");
    check_measure(nu, "wasserstein");
    if (mu.dim != nu.dim) throw ConfigError("wasserstein: dimension mismatch");
    if (p != 1 && p != 2) throw ConfigError("wasserstein: p must be 1 or 2");
    if (!is_probability(mu) || !is_probability(nu))
        throw ConfigError("wasserstein: inputs must be probability measures (mass 1 +- 1e-10)");

    AtomicMeasure a = canonicalize(mu);
    AtomicMeasure b = canonicalize(nu);
    MetricReport rep;
    if (a.size() == 1 && b.size() == 1) {
        rep.method = MetricMethod::closed_form;
        rep.value = dist(a.point(0), b.point(0));
        return rep;
    }
    if (mu.dim == 1) {
        rep.method = MetricMethod::quantile_1d;
        double c = quantile_cost(a, b, p);
        rep.value = p == 1 ? c : std::sqrt(c);
        return rep;
    }
    if (static_cast<long>(a.size()) * b.size() > 65536)
        throw ConfigError("wasserstein: support product exceeds 65536 in dim >= 2");
    std::vector<double> cost(static_cast<std::size_t>(a.size()) * b.size());
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < b.size(); ++j) {
            double dx = dist(a.point(i), b.point(j));
            cost[static_cast<std::size_t>(i) * b.size() + j] = p == 1 ? dx : dx * dx;
        }
    // normalize the marginals so tiny mass drift cannot unbalance the solver
    double ma = a.total_mass(), mb = b.total_mass();
    std::vector<double> sa = a.weights, sb = b.weights;
    for (double& w : sa) w /= ma;
    for (double& w : sb) w /= mb;
    TransportResult tr = solve_transport(sa, sb, cost);
    rep.method = MetricMethod::lp_exact;
    rep.value = p == 1 ? tr.cost : std::sqrt(std::max(0.0, tr.cost));
    rep.lp.iterations = tr.iterations;
    rep.lp.optimality_gap = tr.dual_gap;
    return rep;
}

nlohmann::json measure_to_json(const AtomicMeasure& mu) {
    check_measure(mu, "measure_to_json");
    nlohmann::json pts = nlohmann::json::array();
    for (int i = 0; i < mu.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (double v : mu.point(i)) row.push_back(v);
        pts.push_back(std::move(row));
    }
    return {{"dim", mu.dim}, {"points", std::move(pts)}, {"weights", mu.weights}};
}

AtomicMeasure measure_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("dim") || !j.contains("points") || !j.contains("weights"))
        throw ConfigError("measure: need {dim, points, weights}");
    AtomicMeasure mu;
    mu.dim = j.at("dim").get<int>();
    if (mu.dim < 1) throw ConfigError("measure: dim must be >= 1");
    const auto& pts = j.at("points");
    if (!pts.is_array()) throw ConfigError("measure: points must be an array of arrays");
    for (const auto& row : pts) {
        if (!row.is_array() || static_cast<int>(row.size()) != mu.dim)
            throw ConfigError("measure: each point needs dim entries");
        for (const auto& v : row) mu.points.push_back(v.get<double>());
    }
    mu.weights = j.at("weights").get<std::vector<double>>();
    check_measure(mu, "measure_from_json");
    return mu;
}

std::string measure_to_csv(const AtomicMeasure& mu) {
    check_measure(mu, "measure_to_csv");
    std::string out;
    for (int c = 0; c < mu.dim; ++c) out += "x" + std::to_string(c) + ",";
    out += "weight\n";
    for (int i = 0; i < mu.size(); ++i) {
        for (double v : mu.point(i)) {
            out += format_double(v);
            out += ',';
        }
        out += format_double(mu.weights[i]);
        out += '\n';
    }
    return out;
}

AtomicMeasure measure_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("measure csv: empty input");
    int dim = static_cast<int>(std::count(line.begin(), line.end(), ',') );
    if (dim < 1) throw ConfigError("measure csv: header must be x0,..,weight");
    AtomicMeasure mu;
    mu.dim = dim;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t start = 0;
        std::vector<double> vals;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string cell = line.substr(start, comma == std::string::npos ? comma : comma - start);
            vals.push_back(parse_double(cell));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (static_cast<int>(vals.size()) != dim + 1)
            throw ConfigError("measure csv: row arity mismatch");
        mu.points.insert(mu.points.end(), vals.begin(), vals.end() - 1);
        mu.weights.push_back(vals.back());
    }
    check_measure(mu, "measure_from_csv");
    return mu;
}

}  // namespace alignsim
