#pragma once

// Minimal static line plot: axes with tick labels, one polyline, optional
// zero line and crossing markers.  No dependencies beyond the stdlib; the
// output is a standalone SVG document string.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscwave {

struct PlotOptions {
    int width = 720;
    int height = 440;
    std::string title;
    std::string x_label = "t";
    std::string y_label = "v";
};

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Round-valued tick positions covering [lo, hi] at a readable density.
inline std::vector<double> ticks(double lo, double hi, int target = 6) {
    std::vector<double> out;
    double span = hi - lo;
    if (!(span > 0)) return out;
    double raw = span / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        step = mult * mag;
        if (span / step <= target) break;
    }
    double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + 1e-9 * span; v += step) out.push_back(v);
    return out;
}

}  // namespace detail

inline std::string render_line_plot(const std::vector<double>& t, const std::vector<double>& v,
                                    const std::vector<double>& crossings,
                                    const PlotOptions& opt = {}) {
    if (t.size() != v.size() || t.size() < 2)
        throw std::invalid_argument("render_line_plot: need matching series of length >= 2");

    double tlo = t.front(), thi = t.back();
    double vlo = *std::min_element(v.begin(), v.end());
    double vhi = *std::max_element(v.begin(), v.end());
    if (vhi == vlo) {
        vhi += 1.0;
        vlo -= 1.0;
    }
    double pad = 0.06 * (vhi - vlo);
    vlo -= pad;
    vhi += pad;

    const double ml = 64, mr = 18, mt = opt.title.empty() ? 18 : 34, mb = 46;
    const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
    auto px = [&](double tv) { return ml + pw * (tv - tlo) / (thi - tlo); };
    auto py = [&](double vv) { return mt + ph * (vhi - vv) / (vhi - vlo); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty())
        s << "<text x=\"" << opt.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
          << "font-family=\"sans-serif\" font-size=\"14\">" << opt.title << "</text>\n";

    s << "<g stroke=\"#444\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\"/>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\"/>\n";
    for (double tv : detail::ticks(tlo, thi)) {
        double x = px(tv);
        s << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
          << mt + ph + 5 << "\"/>\n";
        s << "<text x=\"" << x << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\" "
          << "stroke=\"none\" fill=\"#222\">" << detail::svg_num(tv) << "</text>\n";
    }
    for (double vv : detail::ticks(vlo, vhi)) {
        double y = py(vv);
        s << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
          << "\"/>\n";
        s << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" "
          << "stroke=\"none\" fill=\"#222\">" << detail::svg_num(vv) << "</text>\n";
    }
    s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opt.height - 8
      << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#222\">" << opt.x_label
      << "</text>\n";
    s << "<text x=\"14\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#222\" transform=\"rotate(-90 14 "
      << mt + ph / 2 << ")\">" << opt.y_label << "</text>\n";
    s << "</g>\n";

    if (vlo < 0.0 && vhi > 0.0)
        s << "<line x1=\"" << ml << "\" y1=\"" << py(0.0) << "\" x2=\"" << ml + pw << "\" y2=\""
          << py(0.0) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";

    s << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) s << ' ';
        s << detail::svg_num(px(t[i])) << ',' << detail::svg_num(py(v[i]));
    }
    s << "\"/>\n";

    for (double c : crossings) {
        if (c < tlo || c > thi) continue;
        s << "<circle cx=\"" << detail::svg_num(px(c)) << "\" cy=\"" << detail::svg_num(py(0.0))
          << "\" r=\"4\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n";
    }

    s << "</svg>\n";
    return s.str();
}

}  // namespace oscwave
