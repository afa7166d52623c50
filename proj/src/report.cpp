#include "i2v/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "i2v/error.hpp"

namespace i2v::report {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) {
      os.close();
      fs::remove(tmp);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_atomic(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Blue (lo) to white to red (hi).
std::string colour(double v, double lo, double hi) {
  double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = static_cast<int>(std::lround(59 + u * (255 - 59)));
    g = static_cast<int>(std::lround(76 + u * (255 - 76)));
    b = static_cast<int>(std::lround(192 + u * (255 - 192)));
  } else {
    const double u = (t - 0.5) / 0.5;
    r = static_cast<int>(std::lround(255 - u * (255 - 180)));
    g = static_cast<int>(std::lround(255 - u * (255 - 4)));
    b = static_cast<int>(std::lround(255 - u * (255 - 38)));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string Csv::str() const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels,
                        const std::vector<std::vector<std::optional<double>>>& cells, double lo, double hi) {
  const int cell = 56, left = 150, top = 60;
  const int w = left + cell * static_cast<int>(col_labels.size()) + 20;
  const int h = top + cell * static_cast<int>(row_labels.size()) + 20;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<defs><pattern id=\"na\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
        "<path d=\"M0,6 L6,0\" stroke=\"#999\"/></pattern></defs>\n";
  os << "<text x=\"10\" y=\"18\" font-size=\"13\">" << escape_xml(title) << "</text>\n";
  for (std::size_t j = 0; j < col_labels.size(); ++j) {
    os << "<text x=\"" << left + cell * static_cast<int>(j) + cell / 2 << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\">" << escape_xml(col_labels[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < row_labels.size(); ++i) {
    const int y = top + cell * static_cast<int>(i);
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
       << escape_xml(row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < col_labels.size(); ++j) {
      const int x = left + cell * static_cast<int>(j);
      const auto& v = cells[i][j];
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
         << "\" stroke=\"#fff\" fill=\"" << (v ? colour(*v, lo, hi) : "url(#na)") << "\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
         << (v ? num(*v) : "n/a") << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  const int w = 520, h = 320, left = 60, right = 130, top = 36, bottom = 44;
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.values.size());
  }
  if (!(lo < hi)) {
    lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
    hi = lo + 2.0;
  }
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](std::size_t i) { return left + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"10\" y=\"18\" font-size=\"13\">" << escape_xml(title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(hi) << "</text>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << num(lo) << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">" << escape_xml(x_label)
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      os << num(px(i)) << "," << num(py(series[k].values[i])) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << left + pw + 8 << "\" y=\"" << top + 14 * (static_cast<int>(k) + 1) << "\" fill=\"" << c
       << "\">" << escape_xml(series[k].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_bar_plot(const std::string& title, const std::vector<Series>& series) {
  const int w = 520, h = 320, left = 60, right = 130, top = 36, bottom = 30;
  double hi = 0.0;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) hi = std::max(hi, v);
    n = std::max(n, s.values.size());
  }
  if (hi <= 0.0) hi = 1.0;
  const double pw = w - left - right, ph = h - top - bottom;
  const double slot = n ? pw / static_cast<double>(n) : pw;
  const double bar = series.empty() ? slot : slot * 0.8 / static_cast<double>(series.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"10\" y=\"18\" font-size=\"13\">" << escape_xml(title) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"#444\"/>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(hi) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = kPalette[k % std::size(kPalette)];
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      const double bh = ph * std::max(0.0, series[k].values[i]) / hi;
      os << "<rect x=\"" << num(left + slot * static_cast<double>(i) + slot * 0.1 + bar * static_cast<double>(k))
         << "\" y=\"" << num(top + ph - bh) << "\" width=\"" << num(bar) << "\" height=\"" << num(bh) << "\" fill=\""
         << c << "\"/>\n";
    }
    os << "<text x=\"" << left + pw + 8 << "\" y=\"" << top + 14 * (static_cast<int>(k) + 1) << "\" fill=\"" << c
       << "\">" << escape_xml(series[k].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace i2v::report
