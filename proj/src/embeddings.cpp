#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "textcnn/error.hpp"
#include "textcnn/rng.hpp"
#include "textcnn/text_data.hpp"

namespace textcnn {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

float float_from_le(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void float_to_le(float v, char* out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
}

std::pair<std::size_t, std::size_t> read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding file: missing header");
  std::istringstream header(line);
  long long v = -1, dim = -1;
  if (!(header >> v >> dim) || v < 0 || dim <= 0) {
    throw ParseError("embedding file: header must be 'V dim', got '" + line + "'");
  }
  return {static_cast<std::size_t>(v), static_cast<std::size_t>(dim)};
}

class TableBuilder {
 public:
  explicit TableBuilder(std::size_t dim) : dim_(dim) {}

  void add(std::string word, const float* values) {
    words_.push_back(std::move(word));
    matrix_.insert(matrix_.end(), values, values + dim_);
  }

  EmbeddingTable finish() { return EmbeddingTable(dim_, std::move(words_), std::move(matrix_)); }

 private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::vector<float> matrix_;
};

EmbeddingTable read_text(std::istream& in, const std::unordered_set<std::string>* keep) {
  const auto [v, dim] = read_header(in);
  TableBuilder builder(dim);
  std::vector<float> values(dim);
  std::string line;
  std::size_t rows = 0;
  while (rows < v && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    const std::size_t line_no = rows + 1;
    const char* p = line.data();
    const char* end = p + line.size();
    const char* word_end = static_cast<const char*>(std::memchr(p, ' ', line.size()));
    if (word_end == nullptr) throw ParseError("embeddings", line_no, "row has no values");
    std::string word(p, word_end);
    p = word_end;
    std::size_t count = 0;
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (count == dim) break;
      float x = 0.0f;
      auto [next, ec] = std::from_chars(p, end, x);
      if (ec != std::errc()) throw ParseError("embeddings", line_no, "bad number in row for '" + word + "'");
      values[count++] = x;
      p = next;
    }
    while (p < end && *p == ' ') ++p;
    if (count != dim || p != end) {
      throw ParseError("embeddings", line_no,
                       "row for '" + word + "' does not have " + std::to_string(dim) + " values");
    }
    if (keep == nullptr || keep->contains(word)) builder.add(std::move(word), values.data());
  }
  if (rows != v) {
    throw ParseError("embedding file truncated: header promises " + std::to_string(v) +
                     " rows, found " + std::to_string(rows));
  }
  return builder.finish();
}

EmbeddingTable read_binary(std::istream& in, const std::unordered_set<std::string>* keep) {
  const auto [v, dim] = read_header(in);
  TableBuilder builder(dim);
  std::vector<unsigned char> raw(dim * 4);
  std::vector<float> values(dim);
  std::string word;
  for (std::size_t i = 0; i < v; ++i) {
    word.clear();
    int c = in.get();
    // word2vec's own writer emits '\n' after each vector; tolerate it.
    while (c == '\n') c = in.get();
    while (c != EOF && c != ' ') {
      word.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (c == EOF) {
      throw ParseError("embedding file truncated at word " + std::to_string(i) + " of " +
                       std::to_string(v));
    }
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw ParseError("embedding file truncated inside vector for '" + word + "'");
    }
    if (keep != nullptr && !keep->contains(word)) continue;
    for (std::size_t d = 0; d < dim; ++d) values[d] = float_from_le(raw.data() + 4 * d);
    builder.add(word, values.data());
  }
  return builder.finish();
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> words,
                               std::vector<float> matrix)
    : dim_(dim) {
  if (matrix.size() != words.size() * dim) throw ShapeError("embedding matrix size mismatch");
  words_.reserve(words.size());
  matrix_.reserve(matrix.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto [it, inserted] = index_.try_emplace(words[i], words_.size());
    if (!inserted) {
      ++duplicates_;
      continue;
    }
    words_.push_back(std::move(words[i]));
    matrix_.insert(matrix_.end(), matrix.begin() + static_cast<std::ptrdiff_t>(i * dim),
                   matrix.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
  if (duplicates_ > 0) {
    std::clog << "warning: " << duplicates_ << " duplicate embedding rows ignored (kept first)\n";
  }
}

bool EmbeddingTable::contains(std::string_view word) const { return index_.find(word) != index_.end(); }

std::optional<std::span<const float>> EmbeddingTable::lookup(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

std::span<const float> EmbeddingTable::row(std::size_t r) const {
  return std::span<const float>(matrix_).subspan(r * dim_, dim_);
}

EmbeddingTable EmbeddingTable::random(const std::vector<std::string>& vocab, std::size_t dim,
                                      std::uint64_t seed) {
  std::vector<std::string> words;
  std::vector<float> matrix;
  std::unordered_set<std::string> seen;
  for (const std::string& w : vocab) {
    if (!seen.insert(w).second) continue;
    Rng rng(derive_seed(seed, fnv1a(w)));
    for (std::size_t d = 0; d < dim; ++d) matrix.push_back(static_cast<float>(rng.uniform(-0.25, 0.25)));
    words.push_back(w);
  }
  return EmbeddingTable(dim, std::move(words), std::move(matrix));
}

EmbeddingTable read_embeddings(std::istream& in, EmbeddingFormat format,
                               const std::unordered_set<std::string>* keep) {
  return format == EmbeddingFormat::text ? read_text(in, keep) : read_binary(in, keep);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format,
                               const std::unordered_set<std::string>* keep) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_embeddings(in, format, keep);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out, EmbeddingFormat format) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.word(r);
    if (format == EmbeddingFormat::text) {
      for (float x : table.row(r)) {
        auto res = std::to_chars(buf, buf + sizeof buf, x);
        out << ' ';
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    } else {
      out << ' ';
      for (float x : table.row(r)) {
        float_to_le(x, buf);
        out.write(buf, 4);
      }
    }
  }
}

}  // namespace textcnn
