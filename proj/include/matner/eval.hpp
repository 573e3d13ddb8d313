#pragma once
// Entity-level evaluation: IOB span decoding, strict (and first-token)
// matching, precision/recall/F1 with per-type breakdowns, token accuracy,
// the most-frequent-tag baseline, and the comparison table renderer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "matner/common.hpp"
#include "matner/corpus.hpp"

namespace matner {

enum class EntityType { kMaterial, kProcess };

inline const char* entity_type_name(EntityType t) {
  return t == EntityType::kMaterial ? "material" : "process";
}

struct EntitySpan {
  EntityType type;
  int start = 0;  // inclusive token index
  int end = 0;    // exclusive

  bool operator==(const EntitySpan& o) const {
    return type == o.type && start == o.start && end == o.end;
  }
};

// B-X opens a span, I-X continues a same-type span, O or a type change
// closes. A dangling I-X (no open X span) is repaired as B-X.
inline std::vector<EntitySpan> decode_entities(const std::vector<std::string>& tags) {
  std::vector<EntitySpan> spans;
  bool open = false;
  EntityType open_type = EntityType::kMaterial;
  int open_start = 0;

  auto close = [&](int end) {
    if (open) spans.push_back({open_type, open_start, end});
    open = false;
  };

  for (size_t i = 0; i < tags.size(); ++i) {
    const int id = TagSet::id_of(tags[i]);
    if (id < 0) throw std::invalid_argument("decode_entities: unknown tag '" + tags[i] + "'");
    const int pos = static_cast<int>(i);
    if (id == TagSet::kOutside) {
      close(pos);
      continue;
    }
    const EntityType type = TagSet::is_material(id) ? EntityType::kMaterial : EntityType::kProcess;
    const bool begins = id == TagSet::kBMaterial || id == TagSet::kBProcess;
    if (begins || !open || open_type != type) {
      close(pos);
      open = true;
      open_type = type;
      open_start = pos;
    }
    // otherwise an I tag extends the open span
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); each is 0 when its
// denominator is 0.
inline Prf prf_from_counts(const ConfusionCounts& c) {
  Prf m;
  m.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0;
  m.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0;
  m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
  return m;
}

inline double f1_score(double precision, double recall) {
  return (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0;
}

enum class MatchMode {
  kStrict,      // type, start and end must all match
  kFirstToken,  // type and start must match; the end is not checked
};

inline const char* match_mode_name(MatchMode m) {
  return m == MatchMode::kStrict ? "strict" : "first-token";
}

struct MetricsReport {
  std::string model = "model";
  MatchMode match_mode = MatchMode::kStrict;
  ConfusionCounts overall, material, process;
  Prf overall_prf, material_prf, process_prf;
  double token_accuracy_masked = std::nan("");
  double token_accuracy_unmasked = std::nan("");

  double precision() const { return overall_prf.precision; }
  double recall() const { return overall_prf.recall; }
  double f1() const { return overall_prf.f1; }
};

// Micro counts over sentence-aligned span lists. Every gold span can match
// at most one prediction; unmatched predictions are FP, unmatched gold FN.
inline MetricsReport entity_prf(const std::vector<std::vector<EntitySpan>>& gold,
                                const std::vector<std::vector<EntitySpan>>& predicted,
                                MatchMode mode = MatchMode::kStrict) {
  if (gold.size() != predicted.size())
    throw DimensionError("entity_prf: " + std::to_string(gold.size()) + " gold sentences vs " +
                         std::to_string(predicted.size()) + " predicted");
  MetricsReport report;
  report.match_mode = mode;
  for (size_t s = 0; s < gold.size(); ++s) {
    std::vector<bool> gold_used(gold[s].size(), false);
    for (const EntitySpan& p : predicted[s]) {
      bool matched = false;
      for (size_t g = 0; g < gold[s].size(); ++g) {
        if (gold_used[g]) continue;
        const EntitySpan& gs = gold[s][g];
        const bool hit = mode == MatchMode::kStrict
                             ? gs == p
                             : (gs.type == p.type && gs.start == p.start);
        if (hit) {
          gold_used[g] = true;
          matched = true;
          break;
        }
      }
      auto& typed = p.type == EntityType::kMaterial ? report.material : report.process;
      if (matched) {
        ++report.overall.tp;
        ++typed.tp;
      } else {
        ++report.overall.fp;
        ++typed.fp;
      }
    }
    for (size_t g = 0; g < gold[s].size(); ++g) {
      if (gold_used[g]) continue;
      ++report.overall.fn;
      auto& typed = gold[s][g].type == EntityType::kMaterial ? report.material : report.process;
      ++typed.fn;
    }
  }
  report.overall_prf = prf_from_counts(report.overall);
  report.material_prf = prf_from_counts(report.material);
  report.process_prf = prf_from_counts(report.process);
  return report;
}

// Convenience: decode tag sequences on both sides, then count.
inline MetricsReport entity_prf_tags(const std::vector<std::vector<std::string>>& gold_tags,
                                     const std::vector<std::vector<std::string>>& predicted_tags,
                                     MatchMode mode = MatchMode::kStrict) {
  std::vector<std::vector<EntitySpan>> gold, pred;
  gold.reserve(gold_tags.size());
  pred.reserve(predicted_tags.size());
  for (const auto& t : gold_tags) gold.push_back(decode_entities(t));
  for (const auto& t : predicted_tags) pred.push_back(decode_entities(t));
  return entity_prf(gold, pred, mode);
}

// masked: correct/total over the first `length` positions per sentence;
// unmasked: over every position the sequences carry.
inline double token_accuracy(const std::vector<std::vector<int32_t>>& gold,
                             const std::vector<std::vector<int32_t>>& predicted,
                             const std::vector<int32_t>& lengths, bool masked) {
  if (gold.size() != predicted.size() || gold.size() != lengths.size())
    throw DimensionError("token_accuracy: sequence counts disagree");
  int64_t correct = 0, total = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size())
      throw DimensionError("token_accuracy: sentence " + std::to_string(s) + " has " +
                           std::to_string(gold[s].size()) + " gold vs " +
                           std::to_string(predicted[s].size()) + " predicted tags");
    const size_t limit = masked ? static_cast<size_t>(lengths[s]) : gold[s].size();
    if (limit > gold[s].size())
      throw DimensionError("token_accuracy: length exceeds sequence size");
    for (size_t t = 0; t < limit; ++t) {
      correct += gold[s][t] == predicted[s][t];
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

// Per-word most frequent training tag; unseen words get O, ties go to the
// lower tag id.
class MostFrequentTagBaseline {
 public:
  static MostFrequentTagBaseline train(const Corpus& corpus) {
    if (corpus.empty()) throw EmptyCorpusError("baseline: empty training corpus");
    std::unordered_map<std::string, std::array<int64_t, TagSet::kNumTags>> counts;
    for (const auto& s : corpus.sentences) {
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        const int id = TagSet::id_of(s.tags[i]);
        if (id < 0) throw std::invalid_argument("baseline: unknown tag '" + s.tags[i] + "'");
        auto& arr = counts[s.tokens[i]];
        ++arr[static_cast<size_t>(id)];
      }
    }
    MostFrequentTagBaseline b;
    for (const auto& [word, arr] : counts) {
      int best = 0;
      for (int id = 1; id < TagSet::kNumTags; ++id)
        if (arr[static_cast<size_t>(id)] > arr[static_cast<size_t>(best)]) best = id;
      b.word_tag_[word] = best;
    }
    return b;
  }

  std::vector<std::string> predict(const std::vector<std::string>& tokens) const {
    std::vector<std::string> tags;
    tags.reserve(tokens.size());
    for (const auto& w : tokens) {
      auto it = word_tag_.find(w);
      tags.push_back(TagSet::name_of(it == word_tag_.end() ? TagSet::kOutside : it->second));
    }
    return tags;
  }

 private:
  std::unordered_map<std::string, int> word_tag_;
};

// ---------------------------------------------------------------------------
// Comparison table

struct ComparisonRow {
  std::string model;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // sorted by F1 descending
};

inline ComparisonTable comparison_report(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("comparison_report: no reports");
  ComparisonTable table;
  for (const auto& r : reports)
    table.rows.push_back({r.model, r.precision(), r.recall(), r.f1()});
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.f1 > b.f1; });
  return table;
}

inline std::string render_comparison_text(const ComparisonTable& table) {
  size_t width = std::string("Model").size();
  for (const auto& r : table.rows) width = std::max(width, r.model.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width + 2)) << "Model"
      << std::right << std::setw(10) << "Precision" << std::setw(8) << "Recall" << std::setw(7)
      << "F1" << "\n";
  out.setf(std::ios::fixed);
  out.precision(3);
  for (const auto& r : table.rows)
    out << std::left << std::setw(static_cast<int>(width + 2)) << r.model << std::right
        << std::setw(10) << r.precision << std::setw(8) << r.recall << std::setw(7) << r.f1
        << "\n";
  return out.str();
}

inline std::string render_comparison_tsv(const ComparisonTable& table) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "model\tprecision\trecall\tf1\n";
  for (const auto& r : table.rows)
    out << r.model << '\t' << r.precision << '\t' << r.recall << '\t' << r.f1 << '\n';
  return out.str();
}

inline ComparisonTable parse_comparison_tsv(const std::string& text) {
  ComparisonTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream fields(line);
    ComparisonRow row;
    std::string p, r, f;
    if (!std::getline(fields, row.model, '\t') || !std::getline(fields, p, '\t') ||
        !std::getline(fields, r, '\t') || !std::getline(fields, f))
      throw std::invalid_argument("parse_comparison_tsv: malformed row '" + line + "'");
    row.precision = std::stod(p);
    row.recall = std::stod(r);
    row.f1 = std::stod(f);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Stable-key rendering of one metrics report.
inline std::string render_metrics(const MetricsReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  out << "model\t" << r.model << "\n";
  out << "match_mode\t" << match_mode_name(r.match_mode) << "\n";
  out << "precision\t" << r.precision() << "\n";
  out << "recall\t" << r.recall() << "\n";
  out << "f1\t" << r.f1() << "\n";
  out << "counts.tp\t" << r.overall.tp << "\n";
  out << "counts.fp\t" << r.overall.fp << "\n";
  out << "counts.fn\t" << r.overall.fn << "\n";
  auto typed = [&](const char* name, const ConfusionCounts& c, const Prf& p) {
    out << "per_type." << name << ".precision\t" << p.precision << "\n";
    out << "per_type." << name << ".recall\t" << p.recall << "\n";
    out << "per_type." << name << ".f1\t" << p.f1 << "\n";
    out << "per_type." << name << ".tp\t" << c.tp << "\n";
    out << "per_type." << name << ".fp\t" << c.fp << "\n";
    out << "per_type." << name << ".fn\t" << c.fn << "\n";
  };
  typed("material", r.material, r.material_prf);
  typed("process", r.process, r.process_prf);
  out << "token_accuracy.masked\t" << r.token_accuracy_masked << "\n";
  out << "token_accuracy.unmasked\t" << r.token_accuracy_unmasked << "\n";
  return out.str();
}

}  // namespace matner
