#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "textcnn/tensor.hpp"

namespace textcnn {

enum class Split { train, test };

const char* to_string(Split split);

struct Sentence {
  std::vector<std::string> tokens;
  std::size_t label = 0;
  Split split = Split::train;
  std::size_t id = 0;
  // TREC fine-grained tag, kept only so a dataset can be written back out.
  std::string fine_label;
};

struct Dataset {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<Sentence> sentences;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t count(Split split) const;
  std::optional<std::size_t> class_index(std::string_view name) const;
  // Throws if the class names repeat or a label is out of range.
  void validate() const;
};

// Whitespace split, strip leading/trailing ASCII punctuation, keep case,
// drop tokens that end up empty.
std::vector<std::string> tokenize(std::string_view text);

// The six coarse TREC question classes, in label-index order.
const std::vector<std::string>& trec_classes();
// negative, neutral, positive
const std::vector<std::string>& sst_classes();
// SST root score 0..4 -> {0,1}: negative, 2: neutral, {3,4}: positive.
std::size_t sst_relabel(int score);

// TREC line format: "COARSE:fine question text". Sentence ids start at
// `first_id` and increase by line.
Dataset read_trec(std::istream& in, Split split, const std::string& source = "<trec>",
                  std::size_t first_id = 0);
Dataset load_trec(const std::filesystem::path& path, Split split = Split::train,
                  std::size_t first_id = 0);
void write_trec(const Dataset& dataset, std::ostream& out);

// One Penn-Treebank style tree per line; only the root score is used.
Dataset read_sst(std::istream& in, Split split, const std::string& source = "<sst>",
                 std::size_t first_id = 0);
Dataset load_sst(const std::filesystem::path& path, Split split = Split::train,
                 std::size_t first_id = 0);

// Appends `other`'s sentences (renumbering ids after this dataset's).
void merge_into(Dataset& base, Dataset other);

enum class EmbeddingFormat { text, binary };

// Static word vectors. Immutable once built.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, std::vector<std::string> words, std::vector<float> matrix);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t row) const { return words_[row]; }
  std::size_t duplicates_skipped() const { return duplicates_; }

  bool contains(std::string_view word) const;
  // Empty optional for out-of-vocabulary words.
  std::optional<std::span<const float>> lookup(std::string_view word) const;
  std::span<const float> row(std::size_t r) const;

  // Deterministic pseudo-random vectors for every distinct word, uniform in
  // [-0.25, 0.25]. Each word's vector depends only on (seed, word).
  static EmbeddingTable random(const std::vector<std::string>& vocab, std::size_t dim,
                               std::uint64_t seed);

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<float> matrix_;
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
  std::size_t duplicates_ = 0;
};

// Text: "V dim" header then "word v1 .. vdim" rows. Binary: word2vec layout,
// "V dim\n" then per word the token bytes, a space, dim little-endian
// float32. When `keep` is given only those words are retained.
EmbeddingTable read_embeddings(std::istream& in, EmbeddingFormat format,
                               const std::unordered_set<std::string>* keep = nullptr);
EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format,
                               const std::unordered_set<std::string>* keep = nullptr);
void write_embeddings(const EmbeddingTable& table, std::ostream& out, EmbeddingFormat format);

std::vector<std::string> vocabulary(const Dataset& dataset);

struct NGramRecord {
  std::vector<std::string> tokens;
  std::vector<std::size_t> labels;      // sorted, distinct
  std::vector<std::size_t> source_ids;  // sorted, distinct
  std::size_t id = 0;
};

enum class ProbeSplit { all, train, test };

const char* to_string(ProbeSplit split);
ProbeSplit parse_probe_split(std::string_view text);

// OOV tokens are deleted first, then every contiguous n-gram of the
// remaining sequence is collected. Records are deduplicated by token
// sequence and ordered by first occurrence.
std::vector<NGramRecord> extract_ngrams(const Dataset& dataset, std::size_t n,
                                        const EmbeddingTable& table,
                                        ProbeSplit split = ProbeSplit::all);

// n x dim matrix, row t = embedding of token t.
Tensor embed_ngram(const NGramRecord& record, const EmbeddingTable& table);
Tensor embed_tokens(std::span<const std::string> tokens, const EmbeddingTable& table);

}  // namespace textcnn
