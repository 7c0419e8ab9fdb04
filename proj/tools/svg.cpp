#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace gridshield::cli {

namespace {

std::string escape(const std::string& s) {
    std::string r;
    for (char c : s) {
        switch (c) {
        case '<': r += "&lt;"; break;
        case '>': r += "&gt;"; break;
        case '&': r += "&amp;"; break;
        default: r += c;
        }
    }
    return r;
}

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

void write_svg_chart(std::ostream& out, const std::string& title, const std::vector<double>& x,
                     const std::vector<Series>& series, int width, int height) {
    const double left = 70, right = 150, top = 40, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;

    double x0 = x.empty() ? 0.0 : x.front(), x1 = x.empty() ? 1.0 : x.back();
    double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
    for (const auto& s : series)
        for (double v : s.values)
            if (std::isfinite(v)) {
                y0 = std::min(y0, v);
                y1 = std::max(y1, v);
            }
    if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return top + (y1 - v) / (y1 - y0) * ph; };

    const auto old = out.precision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << escape(title) << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        out << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << xv
            << "</text>\n";
        out << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
            << "</text>\n";
    }
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">t (s)</text>\n";

    // Thin long series down to about two points per pixel column.
    const std::size_t step = std::max<std::size_t>(1, x.size() / static_cast<std::size_t>(2 * pw));
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* colour = kPalette[k % kPalette.size()];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
        const auto& v = series[k].values;
        const std::size_t n = std::min(v.size(), x.size());
        for (std::size_t i = 0; i < n; i += step)
            if (std::isfinite(v[i])) out << sx(x[i]) << ',' << sy(v[i]) << ' ';
        if (n > 0 && (n - 1) % step != 0 && std::isfinite(v[n - 1])) out << sx(x[n - 1]) << ',' << sy(v[n - 1]);
        out << "\"/>\n";
        const double ly = top + 14 + 16.0 * k;
        out << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\""
            << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly + 4 << "\">" << escape(series[k].name)
            << "</text>\n";
    }
    out << "</svg>\n";
    out.precision(old);
}

}  // namespace gridshield::cli
