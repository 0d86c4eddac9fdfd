#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>

#include "textcnn/error.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn {

const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      sentences.begin(), sentences.end(), [split](const Sentence& s) { return s.split == split; }));
}

std::optional<std::size_t> Dataset::class_index(std::string_view name) const {
  auto it = std::find(class_names.begin(), class_names.end(), name);
  if (it == class_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - class_names.begin());
}

void Dataset::validate() const {
  std::set<std::string> seen(class_names.begin(), class_names.end());
  if (seen.size() != class_names.size()) throw Error("dataset " + name + ": duplicate class names");
  for (const Sentence& s : sentences) {
    if (s.label >= class_names.size()) {
      throw Error("dataset " + name + ": sentence " + std::to_string(s.id) + " has label " +
                  std::to_string(s.label) + " outside " + std::to_string(class_names.size()) +
                  " classes");
    }
  }
}

namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), is_space);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    while (!word.empty() && is_punct(word.front())) word.remove_prefix(1);
    while (!word.empty() && is_punct(word.back())) word.remove_suffix(1);
    if (!word.empty()) tokens.emplace_back(word);
    i = j;
  }
  return tokens;
}

const std::vector<std::string>& trec_classes() {
  static const std::vector<std::string> names{"ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM"};
  return names;
}

const std::vector<std::string>& sst_classes() {
  static const std::vector<std::string> names{"negative", "neutral", "positive"};
  return names;
}

std::size_t sst_relabel(int score) {
  switch (score) {
    case 0:
    case 1:
      return 0;
    case 2:
      return 1;
    case 3:
    case 4:
      return 2;
    default:
      throw Error("SST score " + std::to_string(score) + " outside 0..4");
  }
}

Dataset read_trec(std::istream& in, Split split, const std::string& source,
                  std::size_t first_id) {
  Dataset ds;
  ds.name = "TREC";
  ds.class_names = trec_classes();
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = strip_cr(raw);
    if (blank(line)) continue;
    const std::size_t space = line.find(' ');
    const std::string_view tag = line.substr(0, space);
    const std::size_t colon = tag.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(source, line_no, "expected COARSE:fine tag, got '" + std::string(tag) + "'");
    }
    const std::string_view coarse = tag.substr(0, colon);
    auto label = ds.class_index(coarse);
    if (!label) throw ParseError(source, line_no, "unknown coarse tag '" + std::string(coarse) + "'");
    Sentence s;
    s.label = *label;
    s.split = split;
    s.id = first_id + ds.sentences.size();
    s.fine_label = std::string(tag.substr(colon + 1));
    if (space != std::string_view::npos) s.tokens = tokenize(line.substr(space + 1));
    ds.sentences.push_back(std::move(s));
  }
  if (ds.sentences.empty()) throw Error(source + ": empty dataset");
  return ds;
}

Dataset load_trec(const std::filesystem::path& path, Split split, std::size_t first_id) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_trec(in, split, path.string(), first_id);
}

void write_trec(const Dataset& dataset, std::ostream& out) {
  for (const Sentence& s : dataset.sentences) {
    out << dataset.class_names.at(s.label) << ':' << (s.fine_label.empty() ? "x" : s.fine_label);
    for (const std::string& t : s.tokens) out << ' ' << t;
    out << '\n';
  }
}

namespace {

// Recursive-descent reader for "(score (score leaf) ...)" trees.
class TreeParser {
 public:
  TreeParser(std::string_view text, const std::string& source, std::size_t line)
      : text_(text), source_(source), line_(line) {}

  int parse_root(std::vector<std::string>& leaves) {
    skip_space();
    const int score = parse_node(leaves);
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters after tree (unbalanced parentheses)");
    return score;
  }

 private:
  int parse_node(std::vector<std::string>& leaves) {
    expect('(');
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected a numeric node label");
    const int score = std::stoi(std::string(text_.substr(start, pos_ - start)));
    skip_space();
    if (pos_ >= text_.size()) fail("unbalanced parentheses");
    if (text_[pos_] == '(') {
      while (pos_ < text_.size() && text_[pos_] == '(') {
        parse_node(leaves);
        skip_space();
      }
    } else {
      const std::size_t w = pos_;
      while (pos_ < text_.size() && text_[pos_] != ')' && text_[pos_] != '(' && !is_space(text_[pos_]))
        ++pos_;
      if (w == pos_) fail("empty leaf");
      for (std::string& t : tokenize(text_.substr(w, pos_ - w))) leaves.push_back(std::move(t));
      skip_space();
    }
    expect(')');
    return score;
  }

  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) {
      fail(std::string("expected '") + c + "' (unbalanced parentheses)");
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_, line_, what + " at column " + std::to_string(pos_ + 1));
  }

  std::string_view text_;
  const std::string& source_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

Dataset read_sst(std::istream& in, Split split, const std::string& source, std::size_t first_id) {
  Dataset ds;
  ds.name = "SST";
  ds.class_names = sst_classes();
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = strip_cr(raw);
    if (blank(line)) continue;
    Sentence s;
    TreeParser parser(line, source, line_no);
    const int score = parser.parse_root(s.tokens);
    if (score < 0 || score > 4) {
      throw ParseError(source, line_no, "root score " + std::to_string(score) + " outside 0..4");
    }
    s.label = sst_relabel(score);
    s.split = split;
    s.id = first_id + ds.sentences.size();
    ds.sentences.push_back(std::move(s));
  }
  if (ds.sentences.empty()) throw Error(source + ": empty dataset");
  return ds;
}

Dataset load_sst(const std::filesystem::path& path, Split split, std::size_t first_id) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_sst(in, split, path.string(), first_id);
}

void merge_into(Dataset& base, Dataset other) {
  if (base.class_names.empty()) base.class_names = other.class_names;
  if (base.name.empty()) base.name = other.name;
  if (other.class_names != base.class_names) throw Error("cannot merge datasets with different classes");
  std::size_t next = 0;
  for (const Sentence& s : base.sentences) next = std::max(next, s.id + 1);
  for (Sentence& s : other.sentences) {
    s.id = next++;
    base.sentences.push_back(std::move(s));
  }
}

std::vector<std::string> vocabulary(const Dataset& dataset) {
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  for (const Sentence& s : dataset.sentences)
    for (const std::string& t : s.tokens)
      if (seen.insert(t).second) words.push_back(t);
  return words;
}

const char* to_string(ProbeSplit split) {
  switch (split) {
    case ProbeSplit::train:
      return "train";
    case ProbeSplit::test:
      return "test";
    default:
      return "all";
  }
}

ProbeSplit parse_probe_split(std::string_view text) {
  if (text == "all") return ProbeSplit::all;
  if (text == "train") return ProbeSplit::train;
  if (text == "test") return ProbeSplit::test;
  throw Error("unknown probe split '" + std::string(text) + "' (expected all, train or test)");
}

std::vector<NGramRecord> extract_ngrams(const Dataset& dataset, std::size_t n,
                                        const EmbeddingTable& table, ProbeSplit split) {
  if (n == 0) throw Error("n-gram length must be at least 1");
  std::vector<NGramRecord> records;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<const std::string*> kept;
  std::string key;
  for (const Sentence& s : dataset.sentences) {
    if (split == ProbeSplit::train && s.split != Split::train) continue;
    if (split == ProbeSplit::test && s.split != Split::test) continue;
    kept.clear();
    for (const std::string& t : s.tokens)
      if (table.contains(t)) kept.push_back(&t);
    if (kept.size() < n) continue;
    for (std::size_t p = 0; p + n <= kept.size(); ++p) {
      key.clear();
      for (std::size_t o = 0; o < n; ++o) {
        key += *kept[p + o];
        key += '\x1f';
      }
      auto [it, inserted] = index.try_emplace(key, records.size());
      if (inserted) {
        NGramRecord r;
        r.id = records.size();
        for (std::size_t o = 0; o < n; ++o) r.tokens.push_back(*kept[p + o]);
        records.push_back(std::move(r));
      }
      NGramRecord& r = records[it->second];
      auto lab = std::lower_bound(r.labels.begin(), r.labels.end(), s.label);
      if (lab == r.labels.end() || *lab != s.label) r.labels.insert(lab, s.label);
      auto src = std::lower_bound(r.source_ids.begin(), r.source_ids.end(), s.id);
      if (src == r.source_ids.end() || *src != s.id) r.source_ids.insert(src, s.id);
    }
  }
  return records;
}

Tensor embed_tokens(std::span<const std::string> tokens, const EmbeddingTable& table) {
  Tensor m({tokens.size(), table.dim()});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto v = table.lookup(tokens[t]);
    if (!v) throw Error("token '" + tokens[t] + "' is not in vocabulary");
    std::copy(v->begin(), v->end(), m.row(t).begin());
  }
  return m;
}

Tensor embed_ngram(const NGramRecord& record, const EmbeddingTable& table) {
  return embed_tokens(record.tokens, table);
}

}  // namespace textcnn
