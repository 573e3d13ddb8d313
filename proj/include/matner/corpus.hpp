#pragma once
// IOB corpus model: parsing/serialization, the fixed five-tag set,
// vocabulary construction, encoding + padding, splits, and the dataset
// statistics record.
//
// File format: UTF-8, one `token<TAB>tag` per line, one blank line between
// sentences, optional `# doc:<id>` comment lines setting the current
// document id. Lines starting with '#' that carry no TAB are comments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "matner/common.hpp"
#include "matner/matrix.hpp"
#include "matner/rng.hpp"

namespace matner {

// The five IOB classes, ids dense in [0,5). O doubles as the padding tag.
class TagSet {
 public:
  static constexpr int kNumTags = 5;
  static constexpr int kBMaterial = 0;
  static constexpr int kIMaterial = 1;
  static constexpr int kBProcess = 2;
  static constexpr int kIProcess = 3;
  static constexpr int kOutside = 4;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> kNames = {"B-material", "I-material", "B-process",
                                                    "I-process", "O"};
    return kNames;
  }

  // -1 when the string is not one of the five tags.
  static int id_of(const std::string& tag) {
    const auto& n = names();
    for (int i = 0; i < kNumTags; ++i)
      if (n[static_cast<size_t>(i)] == tag) return i;
    return -1;
  }

  static const std::string& name_of(int id) {
    if (id < 0 || id >= kNumTags) throw std::out_of_range("TagSet: bad tag id " + std::to_string(id));
    return names()[static_cast<size_t>(id)];
  }

  static bool is_valid(const std::string& tag) { return id_of(tag) >= 0; }
  static bool is_entity(int id) { return id != kOutside; }
  static bool is_material(int id) { return id == kBMaterial || id == kIMaterial; }
  static bool is_process(int id) { return id == kBProcess || id == kIProcess; }
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::string doc_id;  // empty when the source carried no document marker

  size_t size() const { return tokens.size(); }
};

struct Corpus {
  std::vector<Sentence> sentences;

  size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  bool has_document_ids() const {
    if (sentences.empty()) return false;
    for (const auto& s : sentences)
      if (s.doc_id.empty()) return false;
    return true;
  }
};

// Word <-> id maps with PAD=0 and UNK=1 reserved. Ids are assigned in first
// occurrence order, so the same corpus always yields the same map.
class Vocabulary {
 public:
  static constexpr int32_t kPadId = 0;
  static constexpr int32_t kUnkId = 1;
  static constexpr const char* kPadToken = "<PAD>";
  static constexpr const char* kUnkToken = "<UNK>";

  Vocabulary() {
    id2word_ = {kPadToken, kUnkToken};
    word2id_.emplace(kPadToken, kPadId);
    word2id_.emplace(kUnkToken, kUnkId);
  }

  static Vocabulary build(const Corpus& corpus) {
    if (corpus.empty()) throw EmptyCorpusError("build_vocab: empty corpus");
    Vocabulary v;
    for (const auto& s : corpus.sentences)
      for (const auto& w : s.tokens) v.add(w);
    return v;
  }

  // Rebuild from the non-reserved word list in id order (bundle loading).
  static Vocabulary from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) v.add(w);
    return v;
  }

  int32_t add(const std::string& word) {
    auto it = word2id_.find(word);
    if (it != word2id_.end()) return it->second;
    const auto id = static_cast<int32_t>(id2word_.size());
    id2word_.push_back(word);
    word2id_.emplace(word, id);
    return id;
  }

  // Unseen words map to UNK.
  int32_t id_of(const std::string& word) const {
    auto it = word2id_.find(word);
    return it == word2id_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& word) const { return word2id_.count(word) > 0; }

  const std::string& word_of(int32_t id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary: bad id " + std::to_string(id));
    return id2word_[static_cast<size_t>(id)];
  }

  // Total entries including PAD and UNK; this is the embedding row count.
  int32_t size() const { return static_cast<int32_t>(id2word_.size()); }

  // Words with ids >= 2, in id order.
  std::vector<std::string> non_reserved_words() const {
    return {id2word_.begin() + 2, id2word_.end()};
  }

 private:
  std::vector<std::string> id2word_;
  std::unordered_map<std::string, int32_t> word2id_;
};

// ---------------------------------------------------------------------------
// Parsing / serialization

inline Corpus parse_iob(std::istream& in) {
  Corpus corpus;
  Sentence current;
  std::string current_doc;
  std::string line;
  int line_no = 0;

  auto flush = [&]() {
    if (!current.tokens.empty()) {
      current.doc_id = current_doc;
      corpus.sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      if (line[0] == '#') {
        static const std::string kDocPrefix = "# doc:";
        if (line.compare(0, kDocPrefix.size(), kDocPrefix) == 0) {
          current_doc = line.substr(kDocPrefix.size());
          while (!current_doc.empty() && current_doc.front() == ' ') current_doc.erase(0, 1);
        }
        continue;  // other comment lines are ignored
      }
      throw ParseError(line_no, "expected token<TAB>tag, got '" + line + "'");
    }
    const std::string token = line.substr(0, tab);
    const std::string tag = line.substr(tab + 1);
    if (token.empty()) throw ParseError(line_no, "empty token");
    if (!TagSet::is_valid(tag)) throw ParseError(line_no, "unknown tag '" + tag + "'");
    current.tokens.push_back(token);
    current.tags.push_back(tag);
  }
  flush();
  if (corpus.empty()) throw EmptyCorpusError("parse_iob: no sentences in input");
  return corpus;
}

inline Corpus parse_iob(const std::string& text) {
  std::istringstream in(text);
  return parse_iob(in);
}

inline void serialize_iob(const Corpus& corpus, std::ostream& out) {
  std::string last_doc;
  bool doc_written = false;
  for (const auto& s : corpus.sentences) {
    if (!s.doc_id.empty() && (!doc_written || s.doc_id != last_doc)) {
      out << "# doc:" << s.doc_id << "\n";
      last_doc = s.doc_id;
      doc_written = true;
    }
    for (size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << '\t' << s.tags[i] << '\n';
    out << '\n';
  }
}

inline std::string serialize_iob(const Corpus& corpus) {
  std::ostringstream out;
  serialize_iob(corpus, out);
  return out.str();
}

// ---------------------------------------------------------------------------
// Encoding

struct EncodedRow {
  std::vector<int32_t> word_ids;  // length max_len, PAD beyond true_len
  std::vector<int32_t> tag_ids;   // length max_len, O beyond true_len
  int32_t true_len = 0;           // tokens kept (after truncation)
};

struct EncodedBatch {
  int32_t max_len = 0;
  int32_t num_tags = TagSet::kNumTags;
  std::vector<EncodedRow> rows;
  int64_t truncated_sentences = 0;
};

// Words map through the vocabulary (unseen -> UNK), sentences longer than
// max_len lose their tail, and both streams are post-padded (PAD / O).
inline EncodedRow encode_and_pad(const Sentence& sentence, const Vocabulary& vocab, int32_t max_len) {
  if (max_len < 1) throw std::invalid_argument("encode_and_pad: max_len must be >= 1");
  EncodedRow row;
  row.word_ids.assign(static_cast<size_t>(max_len), Vocabulary::kPadId);
  row.tag_ids.assign(static_cast<size_t>(max_len), TagSet::kOutside);
  const auto keep = std::min<size_t>(sentence.tokens.size(), static_cast<size_t>(max_len));
  for (size_t i = 0; i < keep; ++i) {
    row.word_ids[i] = vocab.id_of(sentence.tokens[i]);
    const int tag = TagSet::id_of(sentence.tags[i]);
    if (tag < 0) throw std::invalid_argument("encode_and_pad: unknown tag '" + sentence.tags[i] + "'");
    row.tag_ids[i] = tag;
  }
  row.true_len = static_cast<int32_t>(keep);
  return row;
}

inline EncodedBatch encode_corpus(const Corpus& corpus, const Vocabulary& vocab, int32_t max_len) {
  EncodedBatch batch;
  batch.max_len = max_len;
  batch.rows.reserve(corpus.size());
  for (const auto& s : corpus.sentences) {
    if (s.tokens.size() > static_cast<size_t>(max_len)) ++batch.truncated_sentences;
    batch.rows.push_back(encode_and_pad(s, vocab, max_len));
  }
  return batch;
}

// One-hot label matrix (max_len x num_tags) for one encoded row.
template <typename T = double>
Mat<T> one_hot_labels(const EncodedRow& row, int num_tags = TagSet::kNumTags) {
  Mat<T> y(static_cast<int64_t>(row.tag_ids.size()), num_tags);
  for (size_t t = 0; t < row.tag_ids.size(); ++t) y(static_cast<int64_t>(t), row.tag_ids[t]) = T(1);
  return y;
}

// ---------------------------------------------------------------------------
// Splits

// Seeded sentence-level shuffle, then partition; |test| = round(N * fraction).
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, double test_fraction, uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must be in (0,1), got " +
                                std::to_string(test_fraction));
  std::vector<size_t> idx(corpus.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_test = static_cast<size_t>(
      std::llround(static_cast<double>(corpus.size()) * test_fraction));
  const size_t n_train = corpus.size() - n_test;
  Corpus train, test;
  for (size_t i = 0; i < n_train; ++i) train.sentences.push_back(corpus.sentences[idx[i]]);
  for (size_t i = n_train; i < corpus.size(); ++i) test.sentences.push_back(corpus.sentences[idx[i]]);
  return {std::move(train), std::move(test)};
}

struct Fold {
  Corpus train;
  Corpus validation;
};

// k disjoint validation folds covering the corpus; sizes differ by <= 1.
inline std::vector<Fold> kfold(const Corpus& corpus, int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2, got " + std::to_string(k));
  if (static_cast<size_t>(k) > corpus.size())
    throw std::invalid_argument("kfold: k=" + std::to_string(k) + " exceeds corpus size " +
                                std::to_string(corpus.size()));
  std::vector<size_t> idx(corpus.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  const size_t n = corpus.size();
  const size_t base = n / static_cast<size_t>(k);
  const size_t extra = n % static_cast<size_t>(k);
  std::vector<Fold> folds(static_cast<size_t>(k));
  size_t start = 0;
  for (int f = 0; f < k; ++f) {
    const size_t len = base + (static_cast<size_t>(f) < extra ? 1 : 0);
    const size_t end = start + len;
    for (size_t i = 0; i < n; ++i) {
      auto& dst = (i >= start && i < end) ? folds[static_cast<size_t>(f)].validation
                                          : folds[static_cast<size_t>(f)].train;
      dst.sentences.push_back(corpus.sentences[idx[i]]);
    }
    start = end;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct DatasetStats {
  bool has_document_ids = false;
  int64_t documents = 0;
  int64_t entity_sentences = 0;   // sentences with any non-O tag
  int64_t annotated_words = 0;    // tokens with a non-O tag
  int64_t material_sentences = 0;
  int64_t process_sentences = 0;
  int64_t material_words = 0;
  int64_t process_words = 0;
  double avg_entity_sentences_per_document = 0;
  double avg_annotated_words_per_document = 0;
  double avg_annotated_words_per_entity_sentence = 0;
  double avg_material_words_per_document = 0;
  double avg_process_words_per_document = 0;
  double avg_material_words_per_material_sentence = 0;
  double avg_process_words_per_process_sentence = 0;
};

inline DatasetStats dataset_stats(const Corpus& corpus) {
  DatasetStats st;
  st.has_document_ids = corpus.has_document_ids();
  std::vector<std::string> docs;
  for (const auto& s : corpus.sentences) {
    bool any = false, mat = false, proc = false;
    for (const auto& tag : s.tags) {
      const int id = TagSet::id_of(tag);
      if (id < 0) throw std::invalid_argument("dataset_stats: unknown tag '" + tag + "'");
      if (!TagSet::is_entity(id)) continue;
      any = true;
      ++st.annotated_words;
      if (TagSet::is_material(id)) {
        mat = true;
        ++st.material_words;
      } else {
        proc = true;
        ++st.process_words;
      }
    }
    st.entity_sentences += any;
    st.material_sentences += mat;
    st.process_sentences += proc;
    if (st.has_document_ids &&
        std::find(docs.begin(), docs.end(), s.doc_id) == docs.end())
      docs.push_back(s.doc_id);
  }
  st.documents = static_cast<int64_t>(docs.size());

  auto ratio = [](int64_t num, int64_t den) {
    return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  if (st.has_document_ids) {
    st.avg_entity_sentences_per_document = ratio(st.entity_sentences, st.documents);
    st.avg_annotated_words_per_document = ratio(st.annotated_words, st.documents);
    st.avg_material_words_per_document = ratio(st.material_words, st.documents);
    st.avg_process_words_per_document = ratio(st.process_words, st.documents);
  }
  st.avg_annotated_words_per_entity_sentence = ratio(st.annotated_words, st.entity_sentences);
  st.avg_material_words_per_material_sentence = ratio(st.material_words, st.material_sentences);
  st.avg_process_words_per_process_sentence = ratio(st.process_words, st.process_sentences);
  return st;
}

// One `name<TAB>value` line per statistic. Document-level rows are replaced
// by a flag line when the corpus carries no document ids.
inline std::string render_stats(const DatasetStats& st) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  auto count_row = [&](const char* name, int64_t v) { out << name << '\t' << v << '\n'; };
  auto avg_row = [&](const char* name, double v) { out << name << '\t' << v << '\n'; };
  if (st.has_document_ids)
    count_row("documents", st.documents);
  else
    out << "document_ids\tmissing\n";
  count_row("entity_sentences", st.entity_sentences);
  count_row("annotated_words", st.annotated_words);
  count_row("material_sentences", st.material_sentences);
  count_row("process_sentences", st.process_sentences);
  if (st.has_document_ids) {
    avg_row("avg_entity_sentences_per_document", st.avg_entity_sentences_per_document);
    avg_row("avg_annotated_words_per_document", st.avg_annotated_words_per_document);
  }
  avg_row("avg_annotated_words_per_entity_sentence", st.avg_annotated_words_per_entity_sentence);
  if (st.has_document_ids) {
    avg_row("avg_material_words_per_document", st.avg_material_words_per_document);
    avg_row("avg_process_words_per_document", st.avg_process_words_per_document);
  }
  avg_row("avg_material_words_per_material_sentence", st.avg_material_words_per_material_sentence);
  avg_row("avg_process_words_per_process_sentence", st.avg_process_words_per_process_sentence);
  return out.str();
}

}  // namespace matner
