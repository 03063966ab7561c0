#include "dcmg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dcmg {

namespace {

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool dashed = false;
};

struct Panel {
    std::string title, ylabel;
    std::vector<Series> series;
};

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v)
{
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

std::string esc(const std::string& s)
{
    std::string o;
    for (char c : s) {
        if (c == '<')
            o += "&lt;";
        else if (c == '>')
            o += "&gt;";
        else if (c == '&')
            o += "&amp;";
        else
            o += c;
    }
    return o;
}

double nice_step(double range, int target)
{
    const double raw = range / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1 : f < 3 ? 2 : f < 7 ? 5 : 10) * mag;
}

// keeps the envelope: min and max of each bucket, in time order
void decimate(const std::vector<double>& x, const std::vector<double>& y, std::size_t buckets,
              std::vector<double>& ox, std::vector<double>& oy)
{
    if (x.size() <= 2 * buckets) {
        ox = x;
        oy = y;
        return;
    }
    const std::size_t per = (x.size() + buckets - 1) / buckets;
    for (std::size_t b = 0; b < x.size(); b += per) {
        const std::size_t e = std::min(x.size(), b + per);
        std::size_t lo = b, hi = b;
        for (std::size_t k = b; k < e; ++k) {
            if (y[k] < y[lo])
                lo = k;
            if (y[k] > y[hi])
                hi = k;
        }
        for (std::size_t k : {std::min(lo, hi), std::max(lo, hi)}) {
            ox.push_back(x[k]);
            oy.push_back(y[k]);
            if (lo == hi)
                break;
        }
    }
}

std::vector<double> need(const Trace& tr, const std::string& c)
{
    if (tr.column(c) < 0) {
        std::string avail;
        for (const auto& n : tr.columns)
            avail += (avail.empty() ? "" : ", ") + n;
        throw PlotError("trace has no channel '" + c + "'; available: " + avail);
    }
    return tr.series(c);
}

int dgu_count(const Trace& tr)
{
    int n = 0;
    while (tr.column("V_" + std::to_string(n + 1)) >= 0)
        ++n;
    return n;
}

Panel build_panel(const Trace& tr, const PlotSpec& spec, const std::string& name)
{
    const std::vector<double> t = need(tr, "t");
    const int N = dgu_count(tr);
    Panel p;
    auto per_dgu = [&](const std::string& prefix) {
        for (int i = 1; i <= N; ++i)
            p.series.push_back({"DGU " + std::to_string(i), t, need(tr, prefix + std::to_string(i))});
    };
    if (name == "voltages") {
        p.title = "PCC voltages";
        p.ylabel = "V [V]";
        if (N == 0)
            need(tr, "V_1");
        per_dgu("V_");
    } else if (name == "currents") {
        if (N == 0)
            need(tr, "I_1");
        const bool pu = int(spec.rated.size()) >= N && N > 0;
        p.title = pu ? "Per-unit filter currents" : "Filter currents";
        p.ylabel = pu ? "I / I_s [p.u.]" : "I [A]";
        for (int i = 1; i <= N; ++i) {
            auto y = need(tr, "I_" + std::to_string(i));
            if (pu)
                for (double& v : y)
                    v /= spec.rated[i - 1];
            p.series.push_back({"DGU " + std::to_string(i), t, y});
        }
    } else if (name == "apvd") {
        p.title = "Average PCC voltage deviation";
        p.ylabel = "<V> - V_ref [V]";
        auto y = need(tr, "vavg");
        for (double& v : y)
            v -= spec.v_ref;
        p.series.push_back({"APVD", t, y});
    } else if (name == "indicators") {
        if (N == 0)
            need(tr, "d_1");
        p.title = "Detection indicators";
        p.ylabel = "d [V s]";
        per_dgu("d_");
        if (spec.threshold)
            p.series.push_back({"threshold", {t.front(), t.back()}, {*spec.threshold, *spec.threshold}, true});
    } else if (name == "compensation") {
        if (N == 0)
            need(tr, "C_1");
        p.title = "Compensation";
        p.ylabel = "C [V]";
        per_dgu("C_");
    } else if (name.rfind("residuals:", 0) == 0) {
        int i = 0, j = 0;
        if (std::sscanf(name.c_str() + 10, "%d,%d", &i, &j) != 2)
            throw PlotError("residual panel must be written residuals:<i>,<j>");
        const std::string link = std::to_string(i) + "_" + std::to_string(j);
        p.title = "Residual of link (" + std::to_string(i) + "," + std::to_string(j) + ")";
        p.ylabel = "|r|, threshold";
        bool any = false;
        for (int k = 1; k <= 3; ++k) {
            auto r = need(tr, "r_" + link + "_" + std::to_string(k));
            auto rb = need(tr, "rbar_" + link + "_" + std::to_string(k));
            const bool live = std::any_of(r.begin(), r.end(), [](double v) { return v != 0; });
            if (!live && (any || k < 3))
                continue;
            any = true;
            for (double& v : r)
                v = std::abs(v);
            p.series.push_back({"|r" + std::to_string(k) + "|", t, r});
            p.series.push_back({"rbar" + std::to_string(k), t, rb, true});
        }
    } else {
        throw PlotError("unknown panel '" + name +
                        "' (voltages, currents, apvd, indicators, residuals:<i>,<j>, compensation)");
    }
    return p;
}

} // namespace

std::string render_svg(const Trace& tr, const PlotSpec& spec)
{
    if (spec.panels.empty())
        throw PlotError("no panels requested");
    if (tr.rows.empty())
        throw PlotError("trace has no rows");
    std::vector<Panel> panels;
    for (const auto& name : spec.panels)
        panels.push_back(build_panel(tr, spec, name));

    const double W = 900, PH = 260, L = 80, R = 150, T = 34, B = 46;
    const double top0 = spec.title.empty() ? 0 : 28;
    const double H = top0 + PH * double(panels.size());
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
       << W << " " << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(spec.title)
           << "</text>\n";

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const Panel& p = panels[pi];
        const double y0 = top0 + PH * double(pi);
        const double px0 = L, px1 = W - R, py0 = y0 + T, py1 = y0 + PH - B;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : p.series)
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                xmin = std::min(xmin, s.x[k]);
                xmax = std::max(xmax, s.x[k]);
                if (std::isfinite(s.y[k])) {
                    ymin = std::min(ymin, s.y[k]);
                    ymax = std::max(ymax, s.y[k]);
                }
            }
        if (!(xmax > xmin))
            xmax = xmin + 1;
        if (!(ymax > ymin)) {
            const double c = ymin > 1e299 ? 0 : ymin;
            ymin = c - std::max(1e-9, std::abs(c) * 1e-3);
            ymax = c + std::max(1e-9, std::abs(c) * 1e-3);
        }
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
        auto X = [&](double v) { return px0 + (v - xmin) / (xmax - xmin) * (px1 - px0); };
        auto Y = [&](double v) { return py1 - (v - ymin) / (ymax - ymin) * (py1 - py0); };

        os << "<g>\n<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << y0 + 20
           << "\" text-anchor=\"middle\" font-size=\"13\">" << esc(p.title) << "</text>\n";
        os << "<rect x=\"" << px0 << "\" y=\"" << py0 << "\" width=\"" << px1 - px0 << "\" height=\"" << py1 - py0
           << "\" fill=\"none\" stroke=\"black\"/>\n";
        const double xs = nice_step(xmax - xmin, 8), ys = nice_step(ymax - ymin, 5);
        for (double v = std::ceil(xmin / xs) * xs; v <= xmax + 1e-12 * xs; v += xs) {
            os << "<line x1=\"" << X(v) << "\" y1=\"" << py1 << "\" x2=\"" << X(v) << "\" y2=\"" << py1 + 4
               << "\" stroke=\"black\"/><text x=\"" << X(v) << "\" y=\"" << py1 + 16 << "\" text-anchor=\"middle\">"
               << num(std::abs(v) < 1e-12 * xs ? 0 : v) << "</text>\n";
        }
        for (double v = std::ceil(ymin / ys) * ys; v <= ymax + 1e-12 * ys; v += ys) {
            os << "<line x1=\"" << px0 - 4 << "\" y1=\"" << Y(v) << "\" x2=\"" << px1 << "\" y2=\"" << Y(v)
               << "\" stroke=\"#ddd\"/><text x=\"" << px0 - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">"
               << num(std::abs(v) < 1e-12 * ys ? 0 : v) << "</text>\n";
        }
        os << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << py1 + 34 << "\" text-anchor=\"middle\">t [s]</text>\n";
        os << "<text transform=\"translate(" << px0 - 58 << "," << (py0 + py1) / 2
           << ") rotate(-90)\" text-anchor=\"middle\">" << esc(p.ylabel) << "</text>\n";

        for (std::size_t si = 0; si < p.series.size(); ++si) {
            const Series& s = p.series[si];
            const char* col = kPalette[si % 10];
            std::vector<double> dx, dy;
            decimate(s.x, s.y, 1500, dx, dy);
            os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\""
               << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
            for (std::size_t k = 0; k < dx.size(); ++k)
                os << (k ? " " : "") << num(X(dx[k])) << "," << num(Y(dy[k]));
            os << "\"/>\n";
            const double ly = py0 + 12 + 14 * double(si);
            if (ly < py1) {
                os << "<line x1=\"" << px1 + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << px1 + 30 << "\" y2=\"" << ly - 4
                   << "\" stroke=\"" << col << "\"" << (s.dashed ? " stroke-dasharray=\"5,3\"" : "")
                   << "/><text x=\"" << px1 + 35 << "\" y=\"" << ly << "\">" << esc(s.label) << "</text>\n";
            }
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace dcmg
