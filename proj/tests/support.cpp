#include "support.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace textcnn::testing {

namespace {

const std::vector<std::string> kFiller{"the", "a", "of", "in", "on", "for", "to", "and", "is", "was",
                                       "this", "that", "with", "from", "by", "at", "old", "new"};

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(rng.below(items.size()))];
}

}  // namespace

Dataset marker_corpus(std::size_t train, std::size_t test, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.name = "markers";
  d.class_names = {"alpha", "beta"};
  const std::vector<std::string> markers{"ALPHA", "BETA"};
  for (std::size_t i = 0; i < train + test; ++i) {
    Sentence s;
    s.id = i;
    s.split = i < train ? Split::train : Split::test;
    s.label = i % 2;
    const std::size_t len = 4 + static_cast<std::size_t>(rng.below(8));
    for (std::size_t t = 0; t < len; ++t) s.tokens.push_back(pick(kFiller, rng));
    const std::size_t at = static_cast<std::size_t>(rng.below(len + 1));
    s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(at), markers[s.label]);
    d.sentences.push_back(std::move(s));
  }
  return d;
}

Dataset synthetic_trec(std::size_t train, std::size_t test, std::uint64_t seed) {
  struct ClassWords {
    std::vector<std::string> openers;
    std::vector<std::string> topic;
  };
  // Indexed like trec_classes(): ABBR, DESC, ENTY, HUM, LOC, NUM.
  const std::vector<ClassWords> classes{
      {{"What does", "What is the abbreviation", "What stands for"},
       {"NASA", "CPR", "FBI", "DNA", "acronym", "initials", "mean"}},
      {{"Why do", "How does", "What is"}, {"reason", "cause", "definition", "explain", "happen", "work"}},
      {{"What animal", "What color", "Which instrument"},
       {"bird", "dog", "flower", "red", "guitar", "food", "disease"}},
      {{"Who was", "Who invented", "Who appointed the"},
       {"president", "author", "inventor", "king", "singer", "justice"}},
      {{"Where is", "What city", "Which country"}, {"river", "mountain", "capital", "state", "border", "island"}},
      {{"How many", "When did", "How much"}, {"hours", "year", "people", "miles", "cost", "percent"}},
  };
  Rng rng(seed);
  Dataset d;
  d.name = "synthetic-trec";
  d.class_names = trec_classes();
  for (std::size_t i = 0; i < train + test; ++i) {
    Sentence s;
    s.id = i;
    s.split = i < train ? Split::train : Split::test;
    s.label = static_cast<std::size_t>(rng.below(classes.size()));
    s.fine_label = "x";
    const ClassWords& c = classes[s.label];
    for (const std::string& t : tokenize(pick(c.openers, rng))) s.tokens.push_back(t);
    const std::size_t body = 3 + static_cast<std::size_t>(rng.below(7));
    for (std::size_t t = 0; t < body; ++t) {
      // A third of the body words come from another class's topic list.
      if (rng.uniform() < 0.5) {
        s.tokens.push_back(pick(kFiller, rng));
      } else if (rng.uniform() < 0.67) {
        s.tokens.push_back(pick(c.topic, rng));
      } else {
        s.tokens.push_back(pick(pick(classes, rng).topic, rng));
      }
    }
    d.sentences.push_back(std::move(s));
  }
  return d;
}

void write_split(const Dataset& dataset, Split split, const std::filesystem::path& path) {
  Dataset part = dataset;
  std::erase_if(part.sentences, [&](const Sentence& s) { return s.split != split; });
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trec(part, out);
}

std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("textcnn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace textcnn::testing
