#pragma once
// Deterministic synthetic IOB corpus generator. Template sentences draw
// material and process mentions from built-in gazetteers; the category mix
// keeps the material:process sentence ratio near the ~3.7:1 seen in real
// annotation work at this scale.
//
// With ambiguous_fraction > 0, a slice of sentences uses single-token
// material words in plain O contexts ("the graphene loading was varied"),
// so the tag of those words depends on context, not on the word itself.

#include <cstdint>
#include <string>
#include <vector>

#include "matner/corpus.hpp"
#include "matner/rng.hpp"

namespace matner {

struct SynthConfig {
  int n_sentences = 100;
  uint64_t seed = 1;
  double ambiguous_fraction = 0.0;  // share of sentences using a gazetteer word as O
  int sentences_per_document = 25;
};

namespace synth_detail {

using Phrase = std::vector<std::string>;

inline const std::vector<Phrase>& materials() {
  static const std::vector<Phrase> kMaterials = {
      {"graphene"},
      {"graphene", "oxide"},
      {"reduced", "graphene", "oxide"},
      {"activated", "carbon"},
      {"carbon", "nanotube"},
      {"carbon", "aerogel"},
      {"carbon", "black"},
      {"carbon", "nanofiber"},
      {"mesoporous", "carbon"},
      {"porous", "carbon"},
      {"hard", "carbon"},
      {"MnO2"},
      {"RuO2"},
      {"NiO"},
      {"Co3O4"},
      {"V2O5"},
      {"MoS2"},
      {"TiO2"},
      {"SnO2"},
      {"ZnO"},
      {"Fe3O4"},
      {"NiCo2O4"},
      {"polyaniline"},
      {"polypyrrole"},
      {"PEDOT"},
      {"biochar"},
      {"graphite"},
      {"KOH"},
      {"Na2SO4"},
      {"H2SO4"},
  };
  return kMaterials;
}

inline const std::vector<Phrase>& processes() {
  static const std::vector<Phrase> kProcesses = {
      {"hydrothermal", "synthesis"},
      {"chemical", "vapor", "deposition"},
      {"pyrolysis"},
      {"carbonization"},
      {"electrospinning"},
      {"annealing"},
      {"calcination"},
      {"electrodeposition"},
      {"ball", "milling"},
      {"freeze", "drying"},
      {"spray", "pyrolysis"},
      {"ultrasonication"},
      {"plasma", "treatment"},
      {"thermal", "activation"},
  };
  return kProcesses;
}

// Single-token materials that the ambiguous templates reuse in O contexts.
inline const std::vector<std::string>& ambiguous_words() {
  static const std::vector<std::string> kWords = {"graphene", "biochar",     "graphite", "MnO2",
                                                  "ZnO",      "polyaniline", "PEDOT",    "TiO2"};
  return kWords;
}

inline const std::vector<std::string>& numbers() {
  static const std::vector<std::string> kNumbers = {"10",  "20",  "50",  "100", "150",
                                                    "200", "250", "300", "400", "500"};
  return kNumbers;
}

enum class Slot { kMaterial, kProcess, kAmbiguousAsO, kNumber };

struct Piece {
  bool is_slot = false;
  Slot slot = Slot::kNumber;
  std::string literal;
};

inline Piece lit(const char* w) { return Piece{false, Slot::kNumber, w}; }
inline Piece slot(Slot s) { return Piece{true, s, ""}; }

using Template = std::vector<Piece>;

inline const std::vector<Template>& material_templates() {
  static const std::vector<Template> kTemplates = {
      {lit("the"), slot(Slot::kMaterial), lit("electrode"), lit("exhibited"), lit("a"),
       lit("specific"), lit("capacitance"), lit("of"), slot(Slot::kNumber), lit("F"), lit("g-1")},
      {lit("the"), slot(Slot::kMaterial), lit("sample"), lit("showed"), lit("excellent"),
       lit("cycle"), lit("stability")},
      {lit("electrodes"), lit("based"), lit("on"), slot(Slot::kMaterial), lit("deliver"),
       lit("high"), lit("energy"), lit("density")},
      {lit("the"), lit("specific"), lit("surface"), lit("area"), lit("of"), slot(Slot::kMaterial),
       lit("was"), lit("measured")},
      {slot(Slot::kMaterial), lit("and"), slot(Slot::kMaterial), lit("composite"),
       lit("electrodes"), lit("were"), lit("prepared")},
      {lit("the"), slot(Slot::kMaterial), lit("electrode"), lit("retained"), slot(Slot::kNumber),
       lit("percent"), lit("capacitance"), lit("after"), slot(Slot::kNumber), lit("cycles")},
  };
  return kTemplates;
}

inline const std::vector<Template>& material_process_templates() {
  static const std::vector<Template> kTemplates = {
      {slot(Slot::kMaterial), lit("was"), lit("synthesized"), lit("by"), slot(Slot::kProcess),
       lit("at"), slot(Slot::kNumber), lit("C")},
      {slot(Slot::kMaterial), lit("was"), lit("prepared"), lit("via"), slot(Slot::kProcess)},
      {slot(Slot::kProcess), lit("of"), slot(Slot::kMaterial), lit("produced"), lit("a"),
       lit("porous"), lit("structure")},
  };
  return kTemplates;
}

inline const std::vector<Template>& process_templates() {
  static const std::vector<Template> kTemplates = {
      {lit("the"), slot(Slot::kProcess), lit("was"), lit("carried"), lit("out"), lit("at"),
       slot(Slot::kNumber), lit("C")},
      {lit("samples"), lit("were"), lit("treated"), lit("by"), slot(Slot::kProcess), lit("for"),
       slot(Slot::kNumber), lit("hours")},
      {slot(Slot::kProcess), lit("improves"), lit("the"), lit("surface"), lit("area"),
       lit("significantly")},
  };
  return kTemplates;
}

inline const std::vector<Template>& no_entity_templates() {
  static const std::vector<Template> kTemplates = {
      {lit("the"), lit("results"), lit("are"), lit("summarized"), lit("in"), lit("table"),
       slot(Slot::kNumber)},
      {lit("electrochemical"), lit("tests"), lit("were"), lit("performed"), lit("at"), lit("room"),
       lit("temperature")},
      {lit("the"), lit("cycling"), lit("performance"), lit("was"), lit("measured"), lit("over"),
       slot(Slot::kNumber), lit("cycles")},
  };
  return kTemplates;
}

inline const std::vector<Template>& ambiguous_templates() {
  static const std::vector<Template> kTemplates = {
      {lit("the"), slot(Slot::kAmbiguousAsO), lit("loading"), lit("was"), lit("varied"),
       lit("from"), slot(Slot::kNumber), lit("to"), slot(Slot::kNumber), lit("percent")},
      {lit("the"), slot(Slot::kAmbiguousAsO), lit("content"), lit("was"), lit("optimized"),
       lit("in"), lit("this"), lit("study")},
      {lit("the"), lit("effect"), lit("of"), slot(Slot::kAmbiguousAsO), lit("thickness"),
       lit("was"), lit("investigated")},
  };
  return kTemplates;
}

inline void append_entity(Sentence& s, const Phrase& phrase, const char* b_tag, const char* i_tag) {
  for (size_t i = 0; i < phrase.size(); ++i) {
    s.tokens.push_back(phrase[i]);
    s.tags.push_back(i == 0 ? b_tag : i_tag);
  }
}

inline Sentence realize(const Template& tpl, Rng& rng) {
  Sentence s;
  for (const Piece& p : tpl) {
    if (!p.is_slot) {
      s.tokens.push_back(p.literal);
      s.tags.push_back("O");
      continue;
    }
    switch (p.slot) {
      case Slot::kMaterial:
        append_entity(s, materials()[rng.below(materials().size())], "B-material", "I-material");
        break;
      case Slot::kProcess:
        append_entity(s, processes()[rng.below(processes().size())], "B-process", "I-process");
        break;
      case Slot::kAmbiguousAsO:
        s.tokens.push_back(ambiguous_words()[rng.below(ambiguous_words().size())]);
        s.tags.push_back("O");
        break;
      case Slot::kNumber:
        s.tokens.push_back(numbers()[rng.below(numbers().size())]);
        s.tags.push_back("O");
        break;
    }
  }
  return s;
}

}  // namespace synth_detail

inline Corpus generate_synthetic_corpus(const SynthConfig& cfg) {
  using namespace synth_detail;
  if (cfg.n_sentences < 1)
    throw std::invalid_argument("generate_synthetic_corpus: n_sentences must be >= 1");
  if (cfg.ambiguous_fraction < 0 || cfg.ambiguous_fraction > 0.2)
    throw std::invalid_argument("generate_synthetic_corpus: ambiguous_fraction must be in [0, 0.2]");

  // Category weights; the ambiguous share displaces no-entity sentences.
  const double w_material = 0.60;
  const double w_material_process = 0.15;
  const double w_process = 0.05;
  const double w_ambiguous = cfg.ambiguous_fraction;

  Rng rng = Rng(cfg.seed).substream(0x53594e54ull);  // stream tag "SYNT"
  Corpus corpus;
  corpus.sentences.reserve(static_cast<size_t>(cfg.n_sentences));
  for (int i = 0; i < cfg.n_sentences; ++i) {
    const double u = rng.next_double();
    const std::vector<Template>* pool = nullptr;
    if (u < w_material) {
      pool = &material_templates();
    } else if (u < w_material + w_material_process) {
      pool = &material_process_templates();
    } else if (u < w_material + w_material_process + w_process) {
      pool = &process_templates();
    } else if (u < w_material + w_material_process + w_process + w_ambiguous) {
      pool = &ambiguous_templates();
    } else {
      pool = &no_entity_templates();
    }
    Sentence s = realize((*pool)[rng.below(pool->size())], rng);
    const int doc = cfg.sentences_per_document > 0 ? i / cfg.sentences_per_document : 0;
    s.doc_id = "synthetic-" + std::to_string(doc);
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace matner
