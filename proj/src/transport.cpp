#include "alignsim/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "alignsim/common.hpp"

namespace alignsim {

// Bipartite network simplex. Nodes 0..n-1 are sources, n..n+m-1 sinks; the
// basis is a spanning tree of n+m-1 arcs (degenerate zero-flow arcs allowed).
TransportResult solve_transport(std::span<const double> supply,
                                std::span<const double> demand,
                                std::span<const double> cost) {
    const int n = static_cast<int>(supply.size());
    const int m = static_cast<int>(demand.size());
    if (n == 0 || m == 0) throw ConfigError("solve_transport: empty side");
    if (cost.size() != static_cast<std::size_t>(n) * m)
        throw ConfigError("solve_transport: cost matrix size mismatch");
    double total_s = std::accumulate(supply.begin(), supply.end(), 0.0);
    double total_d = std::accumulate(demand.begin(), demand.end(), 0.0);
    if (std::abs(total_s - total_d) > 1e-9 * std::max({total_s, total_d, 1.0}))
        throw NumericalError("solve_transport: unbalanced problem");
    for (double s : supply)
        if (s < 0) throw ConfigError("solve_transport: negative supply");
    for (double d : demand)
        if (d < 0) throw ConfigError("solve_transport: negative demand");

    struct Arc {
        int i, j;      // source, sink (sink index local)
        double flow;
    };
    std::vector<Arc> basis;
    basis.reserve(n + m - 1);

    // Northwest-corner start: exactly n+m-1 basic cells, ties resolved by
    // advancing the source side, which leaves a zero-flow basic cell.
    {
        std::vector<double> a(supply.begin(), supply.end());
        std::vector<double> b(demand.begin(), demand.end());
        int i = 0, j = 0;
        while (true) {
            double f = std::min(a[i], b[j]);
            basis.push_back({i, j, f});
            a[i] -= f;
            b[j] -= f;
            if (i == n - 1 && j == m - 1) break;
            if (i == n - 1) ++j;
            else if (j == m - 1) ++i;
            else if (a[i] <= b[j]) ++i;
            else ++j;
        }
    }

    const int nodes = n + m;
    std::vector<std::vector<std::pair<int, int>>> adj(nodes);  // (neighbor, arc idx)
    auto rebuild_adj = [&] {
        for (auto& v : adj) v.clear();
        for (int a = 0; a < static_cast<int>(basis.size()); ++a) {
            adj[basis[a].i].push_back({n + basis[a].j, a});
            adj[n + basis[a].j].push_back({basis[a].i, a});
        }
    };
    rebuild_adj();

    std::vector<double> u(n), v(m);
    std::vector<int> parent(nodes), parent_arc(nodes), order(nodes);
    std::vector<char> seen(nodes);

    double cmax = 0.0;
    for (double c : cost) cmax = std::max(cmax, std::abs(c));
    const double tol = 1e-12 * (1.0 + cmax);
    const int iter_cap = 400 * (nodes + 16);

    int iterations = 0;
    double final_min_rc = 0.0;
    while (true) {
        // potentials from the tree: u_i + v_j = c_ij on basic arcs
        std::fill(seen.begin(), seen.end(), 0);
        int head = 0, tail = 0;
        order[tail++] = 0;
        seen[0] = 1;
        u[0] = 0.0;
        while (head < tail) {
            int x = order[head++];
            for (auto [y, a] : adj[x]) {
                if (seen[y]) continue;
                seen[y] = 1;
                double c = cost[static_cast<std::size_t>(basis[a].i) * m + basis[a].j];
                if (y >= n) v[y - n] = c - u[basis[a].i];
                else u[y] = c - v[basis[a].j];
                order[tail++] = y;
            }
        }
        if (tail != nodes) throw NumericalError("solve_transport: basis not a spanning tree");

        // entering arc: most negative reduced cost, smallest index on ties
        double best = -tol;
        int bi = -1, bj = -1;
        for (int i = 0; i < n; ++i) {
            const double* row = cost.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) {
                double rc = row[j] - u[i] - v[j];
                if (rc < best) {
                    best = rc;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi < 0) {
            final_min_rc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    final_min_rc = std::min(final_min_rc, cost[static_cast<std::size_t>(i) * m + j] - u[i] - v[j]);
            break;
        }
        if (++iterations > iter_cap)
            throw NumericalError("solve_transport: iteration cap exceeded");

        // unique tree path sink(bj) -> source(bi); entering arc closes the cycle
        std::fill(seen.begin(), seen.end(), 0);
        head = tail = 0;
        order[tail++] = bi;
        seen[bi] = 1;
        parent[bi] = -1;
        parent_arc[bi] = -1;
        while (head < tail) {
            int x = order[head++];
            if (x == n + bj) break;
            for (auto [y, a] : adj[x]) {
                if (seen[y]) continue;
                seen[y] = 1;
                parent[y] = x;
                parent_arc[y] = a;
                order[tail++] = y;
            }
        }

        // Collect the cycle with orientations. The entering arc (bi -> bj) is
        // traversed source->sink and raises its flow; walking the tree path
        // from n+bj back toward bi, an arc met at a sink node is traversed
        // sink->source (against its direction) and must lower, an arc met at
        // a source node raises. Flow conservation alternates signs around the
        // bipartite cycle.
        std::vector<std::pair<int, bool>> path;  // (arc idx, lowers?)
        {
            int x = n + bj;
            while (x != bi) {
                path.push_back({parent_arc[x], x >= n});
                x = parent[x];
            }
        }
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (auto [a, lowers] : path) {
            if (!lowers) continue;
            if (basis[a].flow < theta || (basis[a].flow == theta && a < leave)) {
                theta = basis[a].flow;
                leave = a;
            }
        }
        if (leave < 0) throw NumericalError("solve_transport: unbounded pivot");

        for (auto [a, lowers] : path) basis[a].flow += lowers ? -theta : theta;
        basis[leave] = {bi, bj, theta};
        rebuild_adj();
    }

    TransportResult res;
    res.iterations = iterations;
    res.flow.assign(static_cast<std::size_t>(n) * m, 0.0);
    double c = 0.0;
    for (const Arc& a : basis) {
        res.flow[static_cast<std::size_t>(a.i) * m + a.j] += a.flow;
        c += a.flow * cost[static_cast<std::size_t>(a.i) * m + a.j];
    }
    res.cost = c;
    res.dual_gap = std::max(0.0, -final_min_rc) * total_s;
    return res;
}

}  // namespace alignsim
