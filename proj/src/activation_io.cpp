// Activation matrix text format (tab-separated, LF lines):
//
//   # textcnn activations v1
//   classes  <name> <name> ...
//   split    <all|train|test>
//   group    <layer>-<window>  <ngram length>  <kernel count>  <probe count>
//   kernels  <kernel id> ...
//   <probe id>  <token> x ngram length  <labels, comma-joined>  <activation per kernel>
//   ... one row per probe ...
//   end
//   (next group)
//
// Numbers use the shortest representation that round-trips exactly.

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "textcnn/analysis.hpp"
#include "textcnn/error.hpp"

namespace textcnn {

namespace {

constexpr std::string_view kMagic = "# textcnn activations v1";

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("activations", line, "bad number '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("activations", line, "bad integer '" + std::string(s) + "'");
  }
  return v;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string require(const char* what) {
    std::string line;
    if (!next(line)) throw ParseError("activations", number_, std::string("unexpected end of file, expected ") + what);
    return line;
  }

  std::size_t number() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_activation_matrix(const ActivationMatrix& matrix, std::ostream& out) {
  out << kMagic << '\n';
  out << "classes";
  for (const std::string& c : matrix.class_names) out << '\t' << c;
  out << "\nsplit\t" << matrix.probe_split << '\n';
  for (const ActivationGroup& g : matrix.groups) {
    out << "group\t" << g.name() << '\t' << g.ngram_length() << '\t' << g.kernels.size() << '\t'
        << g.probes.size() << '\n';
    out << "kernels";
    for (const KernelId& k : g.kernels) out << '\t' << k.str();
    out << '\n';
    for (std::size_t p = 0; p < g.probes.size(); ++p) {
      const NGramRecord& r = g.probes[p];
      out << r.id;
      for (const std::string& t : r.tokens) out << '\t' << t;
      out << '\t';
      for (std::size_t i = 0; i < r.labels.size(); ++i) {
        if (i) out << ',';
        out << matrix.class_names.at(r.labels[i]);
      }
      for (std::size_t k = 0; k < g.kernels.size(); ++k) out << '\t' << format_double(g.values(k, p));
      out << '\n';
    }
    out << "end\n";
  }
}

ActivationMatrix read_activation_matrix(std::istream& in) {
  LineReader reader(in);
  ActivationMatrix m;
  if (reader.require("header") != kMagic) throw ParseError("activations", 1, "not a textcnn activation matrix");

  const std::string classes_line = reader.require("classes line");
  auto fields = split_tabs(classes_line);
  if (fields.front() != "classes") throw ParseError("activations", reader.number(), "expected 'classes'");
  for (std::size_t i = 1; i < fields.size(); ++i) m.class_names.emplace_back(fields[i]);

  const std::string split_line = reader.require("split line");
  fields = split_tabs(split_line);
  if (fields.size() != 2 || fields[0] != "split") throw ParseError("activations", reader.number(), "expected 'split'");
  m.probe_split = std::string(fields[1]);

  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    fields = split_tabs(line);
    if (fields.size() != 5 || fields[0] != "group") throw ParseError("activations", reader.number(), "expected 'group'");
    ActivationGroup g;
    const KernelId head = KernelId::parse(std::string(fields[1]) + "/#0");
    g.layer = head.layer;
    g.window = head.window;
    const std::size_t n = parse_size(fields[2], reader.number());
    const std::size_t kernels = parse_size(fields[3], reader.number());
    const std::size_t probes = parse_size(fields[4], reader.number());
    if (n != g.ngram_length()) throw ParseError("activations", reader.number(), "n-gram length does not match group");

    const std::string kernel_line = reader.require("kernels line");
    fields = split_tabs(kernel_line);
    if (fields.size() != kernels + 1 || fields[0] != "kernels") {
      throw ParseError("activations", reader.number(), "kernel list does not match group header");
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      KernelId id = KernelId::parse(fields[i]);
      if (id.layer != g.layer || id.window != g.window) {
        throw ParseError("activations", reader.number(), "kernel " + id.str() + " outside group " + g.name());
      }
      g.kernels.push_back(id);
    }

    g.values = Tensor({kernels, probes});
    for (std::size_t p = 0; p < probes; ++p) {
      const std::string row = reader.require("probe row");
      fields = split_tabs(row);
      if (fields.size() != 1 + n + 1 + kernels) {
        throw ParseError("activations", reader.number(), "probe row has the wrong number of fields");
      }
      NGramRecord r;
      r.id = parse_size(fields[0], reader.number());
      for (std::size_t t = 0; t < n; ++t) r.tokens.emplace_back(fields[1 + t]);
      std::string_view labels = fields[1 + n];
      while (!labels.empty()) {
        const std::size_t comma = labels.find(',');
        const std::string_view name = labels.substr(0, comma);
        auto it = std::find(m.class_names.begin(), m.class_names.end(), name);
        if (it == m.class_names.end()) {
          throw ParseError("activations", reader.number(), "unknown class '" + std::string(name) + "'");
        }
        r.labels.push_back(static_cast<std::size_t>(it - m.class_names.begin()));
        if (comma == std::string_view::npos) break;
        labels.remove_prefix(comma + 1);
      }
      for (std::size_t k = 0; k < kernels; ++k) g.values(k, p) = parse_double(fields[2 + n + k], reader.number());
      g.probes.push_back(std::move(r));
    }
    if (reader.require("end") != "end") throw ParseError("activations", reader.number(), "expected 'end'");
    m.groups.push_back(std::move(g));
  }
  return m;
}

void write_correlation_matrix(const CorrelationMatrix& cm, std::ostream& out) {
  out << "group " << cm.name() << " K " << cm.size() << '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    for (std::size_t j = 0; j < cm.size(); ++j) {
      if (j) out << ' ';
      out << format_double(cm.r(i, j));
    }
    out << '\n';
  }
}

}  // namespace textcnn
