#include "dcmg/netgraph.hpp"

#include <queue>
#include <sstream>

namespace dcmg {

void Topology::add_edge(int i, int j, double conductance, double dac_weight)
{
    edges_.push_back({i, j, conductance, dac_weight});
}

double Topology::weight(int i, int j, Weight w) const
{
    for (const Edge& e : edges_) {
        if ((e.i == i && e.j == j) || (e.i == j && e.j == i))
            return w == Weight::Conductance ? e.conductance : e.dac_weight;
    }
    return 0;
}

std::vector<int> Topology::neighbors(int i) const
{
    return neighbors(i, {});
}

std::vector<int> Topology::neighbors(int i, const std::vector<bool>& active) const
{
    std::vector<int> out;
    for (const Edge& e : edges_) {
        int other = -1;
        if (e.i == i)
            other = e.j;
        else if (e.j == i)
            other = e.i;
        if (other >= 0 && (active.empty() || active[other]))
            out.push_back(other);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<int>> Topology::components(const std::vector<bool>& active) const
{
    std::vector<int> label(n_, -1);
    std::vector<std::vector<int>> comps;
    for (int s = 0; s < n_; ++s) {
        if (label[s] >= 0 || (!active.empty() && !active[s]))
            continue;
        comps.emplace_back();
        std::queue<int> q;
        q.push(s);
        label[s] = int(comps.size()) - 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            comps.back().push_back(u);
            for (int v : neighbors(u, active)) {
                if (label[v] < 0) {
                    label[v] = label[u];
                    q.push(v);
                }
            }
        }
        std::sort(comps.back().begin(), comps.back().end());
    }
    return comps;
}

void Topology::validate() const
{
    if (n_ < 2)
        throw std::invalid_argument("topology needs at least two nodes");
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        const Edge& e = edges_[k];
        if (e.i < 0 || e.j < 0 || e.i >= n_ || e.j >= n_)
            throw std::invalid_argument("edge refers to an unknown node");
        if (e.i == e.j)
            throw std::invalid_argument("self loop at node " + std::to_string(e.i + 1));
        if (!(e.conductance > 0) || !(e.dac_weight > 0))
            throw std::invalid_argument("edge weights must be positive");
        for (std::size_t m = 0; m < k; ++m) {
            const Edge& f = edges_[m];
            if ((f.i == e.i && f.j == e.j) || (f.i == e.j && f.j == e.i))
                throw std::invalid_argument("duplicate edge (" + std::to_string(e.i + 1) + "," +
                                            std::to_string(e.j + 1) + ")");
        }
    }
    const auto comps = components();
    if (comps.size() > 1)
        throw std::invalid_argument("topology is disconnected: " + describe_components(comps));
}

std::string describe_components(const std::vector<std::vector<int>>& comps)
{
    std::ostringstream os;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        os << (c ? " " : "") << '{';
        for (std::size_t k = 0; k < comps[c].size(); ++k)
            os << (k ? "," : "") << comps[c][k] + 1;
        os << '}';
    }
    return os.str();
}

} // namespace dcmg
