#pragma once

// Minimal standalone SVG line plots: mean line with a +/- std band over evaluation steps.
// Output depends only on the input numbers, so re-rendering the same CSV data is byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "polyminer/evalkit.hpp"

namespace polyminer::plot {

struct Series {
    std::string label;
    std::string color;  // any SVG colour
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> std;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Round step for about n ticks over [lo, hi].
inline double nice_step(double lo, double hi, int n) {
    const double raw = (hi - lo) / n;
    if (!(raw > 0.0)) return 1.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double f : {1.0, 2.0, 5.0, 10.0})
        if (raw <= f * mag) return f * mag;
    return 10.0 * mag;
}

} // namespace detail

inline std::string render_svg(const std::string& title, const std::string& y_label, std::span<const Series> series) {
    constexpr double W = 640, H = 400, L = 64, R = 16, T = 40, B = 48;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            const double sd = k < s.std.size() ? s.std[k] : 0.0;
            if (first) {
                x0 = x1 = s.x[k];
                y0 = s.mean[k] - sd;
                y1 = s.mean[k] + sd;
                first = false;
            }
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, s.mean[k] - sd);
            y1 = std::max(y1, s.mean[k] + sd);
        }
    y0 = std::min(y0, 0.0);
    if (y1 <= y0) y1 = y0 + 1.0;
    if (x1 <= x0) x1 = x0 + 1.0;
    const double ystep = detail::nice_step(y0, y1, 5);
    y1 = std::ceil(y1 / ystep) * ystep;

    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
        << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title)
        << "</text>\n";

    for (double y = y0; y <= y1 + 1e-9 * ystep; y += ystep) {
        svg << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << detail::num(py(y)) << "\" y2=\"" << detail::num(py(y))
            << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<text x=\"" << L - 6 << "\" y=\"" << detail::num(py(y) + 4) << "\" text-anchor=\"end\">" << detail::tick(y)
            << "</text>\n";
    }
    const double xstep = detail::nice_step(x0, x1, 6);
    for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + 1e-9 * xstep; x += xstep) {
        svg << "<text x=\"" << detail::num(px(x)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << detail::tick(x)
            << "</text>\n";
    }
    svg << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << H - B << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << L << "\" x2=\"" << L << "\" y1=\"" << T << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">step</text>\n";
    svg << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << detail::escape(y_label) << "</text>\n";

    double legend_y = T + 8;
    for (const auto& s : series) {
        if (s.x.empty()) continue;
        if (!s.std.empty()) {
            svg << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (std::size_t k = 0; k < s.x.size(); ++k) svg << detail::num(px(s.x[k])) << ',' << detail::num(py(s.mean[k] + s.std[k])) << ' ';
            for (std::size_t k = s.x.size(); k-- > 0;)
                svg << detail::num(px(s.x[k])) << ',' << detail::num(py(s.mean[k] - s.std[k])) << (k ? " " : "");
            svg << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k)
            svg << detail::num(px(s.x[k])) << ',' << detail::num(py(s.mean[k])) << (k + 1 < s.x.size() ? " " : "");
        svg << "\"/>\n";
        svg << "<line x1=\"" << W - R - 150 << "\" x2=\"" << W - R - 130 << "\" y1=\"" << legend_y << "\" y2=\"" << legend_y
            << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << W - R - 124 << "\" y=\"" << legend_y + 4 << "\">" << detail::escape(s.label) << "</text>\n";
        legend_y += 16;
    }
    svg << "</svg>\n";
    return svg.str();
}

inline Series series_from(std::span<const AggregateRow> rows, const std::string& metric, std::string label, std::string color) {
    Series s{std::move(label), std::move(color), {}, {}, {}};
    for (const auto& r : rows) {
        const auto& m = r.metrics.at(metric);
        s.x.push_back(static_cast<double>(r.step));
        s.mean.push_back(m.mean);
        s.std.push_back(m.std);
    }
    return s;
}

} // namespace polyminer::plot
