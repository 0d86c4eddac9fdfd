#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "textcnn/error.hpp"
#include "textcnn/report.hpp"

namespace textcnn {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

void csv_line(std::ostringstream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  // "-0.00000" reads badly in a caption.
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

// Columns of a per-group table in layout order: layer-1 groups, Sum,
// layer-2 groups, Sum. Entries are group indices or -1 for a sum column.
struct Layout {
  std::vector<std::string> header;
  std::vector<int> columns;
  std::vector<int> column_layer;
};

Layout group_layout(const std::vector<std::string>& group_names, std::string first) {
  Layout l;
  l.header.push_back(std::move(first));
  for (int layer : {1, 2}) {
    bool any = false;
    for (std::size_t g = 0; g < group_names.size(); ++g) {
      if (!group_names[g].starts_with(std::to_string(layer) + "-")) continue;
      l.header.push_back(group_names[g]);
      l.columns.push_back(static_cast<int>(g));
      l.column_layer.push_back(layer);
      any = true;
    }
    if (any) {
      l.header.emplace_back("Sum");
      l.columns.push_back(-1);
      l.column_layer.push_back(layer);
    }
  }
  return l;
}

std::vector<std::string> layout_row(const Layout& l, std::string name,
                                    const std::vector<std::size_t>& per_group) {
  std::vector<std::string> row{std::move(name)};
  std::size_t sum = 0;
  for (std::size_t c = 0; c < l.columns.size(); ++c) {
    if (l.columns[c] >= 0) {
      const std::size_t v = per_group[static_cast<std::size_t>(l.columns[c])];
      sum += v;
      row.push_back(std::to_string(v));
    } else {
      row.push_back(std::to_string(sum));
      sum = 0;
    }
  }
  return row;
}

}  // namespace

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    if (r.size() > width.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    std::string text;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) text += "  ";
      // First column left-aligned (names), the rest right-aligned (numbers).
      const std::string pad(width[i] - r[i].size(), ' ');
      text += i == 0 ? r[i] + pad : pad + r[i];
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

std::string Table::to_csv() const {
  std::ostringstream out;
  csv_line(out, header);
  for (const auto& r : rows) csv_line(out, r);
  return out.str();
}

Table Table::from_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any) {
    fields.push_back(std::move(field));
    lines.push_back(std::move(fields));
  }
  Table t;
  if (lines.empty()) return t;
  t.header = std::move(lines.front());
  t.rows.assign(std::make_move_iterator(lines.begin() + 1), std::make_move_iterator(lines.end()));
  return t;
}

Table class_count_table(const CountTable& counts) {
  const Layout l = group_layout(counts.group_names, "Class");
  Table t;
  t.header = l.header;
  for (std::size_t r = 0; r < counts.row_names.size(); ++r)
    t.rows.push_back(layout_row(l, counts.row_names[r], counts.counts[r]));
  return t;
}

Table correlated_pairs_table(std::span<const CorrelationMatrix> groups,
                             std::span<const double> thresholds) {
  std::vector<std::string> names;
  for (const CorrelationMatrix& g : groups) names.push_back(g.name());
  const Layout l = group_layout(names, "r");
  std::vector<std::vector<std::size_t>> per_threshold(thresholds.size(),
                                                      std::vector<std::size_t>(groups.size(), 0));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::vector<std::size_t> c = count_correlated_pairs(groups[g], thresholds);
    for (std::size_t t = 0; t < thresholds.size(); ++t) per_threshold[t][g] = c[t];
  }
  Table t;
  t.header = l.header;
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    t.rows.push_back(layout_row(l, "> " + format_double(thresholds[i]), per_threshold[i]));
  return t;
}

Table bridge_table(const BridgeTable& counts) {
  Table t;
  t.header.emplace_back("");
  for (std::size_t w : counts.windows) t.header.push_back(std::to_string(w));
  t.header.emplace_back("Sum");
  for (int layer : {1, 2}) {
    std::vector<std::string> row{"L" + std::to_string(layer)};
    for (std::size_t v : counts.counts.at(static_cast<std::size_t>(layer - 1))) row.push_back(std::to_string(v));
    row.push_back(std::to_string(counts.layer_sum(layer)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string render_activation_graph_svg(const ActivationGraph& graph, const GraphLabels& labels) {
  constexpr double width = 800, height = 420;
  constexpr double left = 60, right = 20, top = 50, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t n = graph.first.size();

  double ymax = 0.0;
  for (double v : graph.first) ymax = std::max(ymax, v);
  for (double v : graph.second) ymax = std::max(ymax, v);
  if (!(ymax > 0.0)) ymax = 1.0;
  auto px = [&](std::size_t i) { return left + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double v) { return top + plot_h * (1.0 - v / ymax); };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"420\" viewBox=\"0 0 800 420\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"420\" fill=\"white\"/>\n";
  out << "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << xml_escape(labels.first) << " vs " << xml_escape(labels.second) << ", r=" << fixed(graph.r, 5)
      << "</text>\n";
  out << "<line x1=\"" << fixed(left, 2) << "\" y1=\"" << fixed(top + plot_h, 2) << "\" x2=\""
      << fixed(left + plot_w, 2) << "\" y2=\"" << fixed(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fixed(left, 2) << "\" y1=\"" << fixed(top, 2) << "\" x2=\"" << fixed(left, 2)
      << "\" y2=\"" << fixed(top + plot_h, 2) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << fixed(left - 6, 2) << "\" y=\"" << fixed(top + 4, 2)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fixed(ymax, 3) << "</text>\n";
  out << "<text x=\"" << fixed(left - 6, 2) << "\" y=\"" << fixed(top + plot_h + 4, 2)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
  out << "<text x=\"400\" y=\"" << fixed(height - 14, 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">n-gram pairs (" << n
      << ")</text>\n";
  for (std::size_t s = 1; s < graph.slice_starts.size(); ++s) {
    const double x = px(graph.slice_starts[s]);
    out << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << fixed(top, 2) << "\" x2=\"" << fixed(x, 2) << "\" y2=\""
        << fixed(top + plot_h, 2) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  }
  auto polyline = [&](const std::vector<double>& ys, const char* colour) {
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (i) out << ' ';
      out << fixed(px(i), 2) << ',' << fixed(py(ys[i]), 2);
    }
    out << "\"/>\n";
  };
  polyline(graph.first, "#1f77b4");
  polyline(graph.second, "#d62728");
  out << "<text x=\"" << fixed(left + 10, 2) << "\" y=\"" << fixed(top + 14, 2)
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">" << xml_escape(labels.first)
      << "</text>\n";
  out << "<text x=\"" << fixed(left + 10, 2) << "\" y=\"" << fixed(top + 30, 2)
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">" << xml_escape(labels.second)
      << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace textcnn
