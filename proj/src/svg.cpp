#include "sag/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sag {

static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& xlabel, const std::string& ylabel,
                         const std::vector<PlotSeries>& series) {
    const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 55;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) throw std::invalid_argument("svg plot: no points");
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.05;
        ymax += 0.05;
    }
    const double ypad = 0.07 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
           "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";
    // axes
    out += "<line x1=\"" + num(ml) + "\" y1=\"" + num(H - mb) + "\" x2=\"" + num(W - mr) +
           "\" y2=\"" + num(H - mb) + "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
           num(H - mb) + "\" stroke=\"black\"/>\n";
    const int nticks = 5;
    for (int i = 0; i <= nticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / nticks;
        const double fy = ymin + (ymax - ymin) * i / nticks;
        out += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(H - mb) + "\" x2=\"" + num(px(fx)) +
               "\" y2=\"" + num(H - mb + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(H - mb + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(fx) +
               "</text>\n";
        out += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" + num(ml) +
               "\" y2=\"" + num(py(fy)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + num(ml - 9) + "\" y=\"" + num(py(fy) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(fy) +
               "</text>\n";
    }
    out += "<text x=\"" + num((ml + W - mr) / 2) + "\" y=\"" + num(H - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xlabel +
           "</text>\n";
    out += "<text x=\"18\" y=\"" + num((mt + H - mb) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " +
           num((mt + H - mb) / 2) + ")\">" + ylabel + "</text>\n";

    double ly = mt + 8;
    for (const auto& s : series) {
        std::string pts;
        std::vector<std::pair<double, double>> sorted = s.points;
        std::sort(sorted.begin(), sorted.end());
        for (const auto& [x, y] : sorted) pts += num(px(x)) + "," + num(py(y)) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"" +
               pts + "\"/>\n";
        for (const auto& [x, y] : sorted)
            out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3\" fill=\"" +
                   s.color + "\"/>\n";
        out += "<rect x=\"" + num(W - mr - 150) + "\" y=\"" + num(ly - 8) +
               "\" width=\"12\" height=\"12\" fill=\"" + s.color + "\"/>\n";
        out += "<text x=\"" + num(W - mr - 133) + "\" y=\"" + num(ly + 2) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + s.label + "</text>\n";
        ly += 18;
    }
    out += "</svg>\n";
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace sag
