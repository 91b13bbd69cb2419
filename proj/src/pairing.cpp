#include "segref/pairing.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "segref/core/kernels.hpp"

namespace segref {

std::string_view label_source_name(LabelSource s) noexcept {
  return s == LabelSource::kSynonym ? "synonym" : "paired";
}

LabelSource parse_label_source(std::string_view name) {
  if (name == "paired") return LabelSource::kPaired;
  if (name == "synonym") return LabelSource::kSynonym;
  fail(ErrorCode::kMalformed, "unknown label source '" + std::string(name) + "'");
}

namespace {

using WordSet = std::unordered_set<std::string_view>;

const WordSet& determiners() {
  static const WordSet s{
      "a",     "an",      "the",     "this",  "that",   "these", "those", "some",
      "several", "many",  "few",     "each",  "every",  "another", "its", "their",
      "his",   "her",     "our",     "my",    "your",   "any",   "both",  "one",
      "two",   "three",   "four",    "five",  "six",    "seven", "eight", "nine",
      "ten",   "a few",   "numerous", "multiple"};
  return s;
}

// Words that can never belong to a noun phrase: prepositions, conjunctions,
// pronouns, auxiliaries, and verbs common in image descriptions.
const WordSet& breakers() {
  static const WordSet s{
      // prepositions
      "of", "in", "on", "at", "with", "by", "for", "from", "to", "into", "onto", "over",
      "under", "near", "behind", "beside", "besides", "between", "above", "below",
      "across", "through", "around", "along", "against", "among", "beneath", "inside",
      "outside", "toward", "towards", "upon", "within", "without", "next", "atop",
      "underneath", "beyond", "throughout", "via", "about", "like", "than", "up", "down",
      "off", "out", "top", "front",
      // conjunctions and relatives
      "and", "or", "but", "nor", "so", "yet", "while", "as", "because", "although",
      "though", "where", "which", "who", "whom", "whose", "when", "whereas", "if",
      // pronouns and deictics
      "it", "they", "he", "she", "we", "i", "you", "them", "him", "us", "me", "there",
      "here", "what", "itself", "themselves", "other", "others",
      // auxiliaries and verbs
      "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had",
      "do", "does", "did", "can", "could", "may", "might", "will", "would", "should",
      "must", "shall", "appears", "appear", "seems", "seem", "sits", "sit", "sat",
      "stands", "stand", "stood", "lies", "lie", "lay", "placed", "located", "shows",
      "show", "shown", "features", "feature", "includes", "include", "contains",
      "contain", "holds", "hold", "held", "looks", "look", "seen", "visible", "covered",
      "filled", "surrounded", "positioned", "rests", "rest", "set", "made", "adds",
      "add", "creates", "create", "gives", "give", "suggests", "suggest", "depicts",
      "depict", "captures", "capture", "displays", "display", "wears", "wear",
      "serves", "served", "topped", "arranged", "parked", "hangs", "hung", "grows",
      "overall", "also", "not", "very", "quite", "likely", "possibly", "perhaps",
      "just", "only", "such", "all", "more", "most", "less", "well", "even", "too",
      "then", "partially", "slightly", "mostly", "clearly", "prominently"};
  return s;
}

// Modifiers that cannot be a head noun. A chunk of only these is dropped and
// trailing ones are trimmed.
const WordSet& adjectives() {
  static const WordSet s{
      "white",  "black",  "red",     "green",   "blue",   "yellow", "brown", "gray",
      "grey",   "orange", "pink",    "purple",  "golden", "silver", "dark",  "bright",
      "small",  "large",  "big",     "little",  "tall",   "short",  "long",  "tiny",
      "huge",   "wide",   "lovely",  "adorable", "shiny", "old",    "new",   "young",
      "wooden", "round",  "square",  "empty",   "full",   "clear",  "cloudy", "sunny",
      "open",   "closed", "various", "different", "same", "colorful", "beautiful",
      "cozy",   "busy",   "calm",    "fresh",   "delicious", "several", "sleek",
      "modern", "vintage", "rustic", "soft",    "warm",   "cold",   "natural"};
  return s;
}

// -ing words that are nouns rather than participles.
const WordSet& ing_nouns() {
  static const WordSet s{"building", "ceiling", "painting", "clothing", "railing",
                         "awning",   "frosting", "icing",   "dressing", "topping",
                         "stuffing", "filling", "lighting", "wedding",  "evening",
                         "morning",  "pudding", "string",   "spring",   "king",
                         "thing",    "wing",    "ring",     "sing",     "swing"};
  return s;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-';
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Token {
  std::string text;
  bool word;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      std::string word = lower(text.substr(i, j - i));
      if (word.size() > 2 && word.ends_with("'s")) word.resize(word.size() - 2);
      while (!word.empty() && (word.back() == '\'' || word.back() == '-')) word.pop_back();
      while (!word.empty() && (word.front() == '\'' || word.front() == '-')) word.erase(0, 1);
      if (!word.empty()) tokens.push_back({std::move(word), true});
      i = j;
    } else {
      tokens.push_back({std::string(1, c), false});
      ++i;
    }
  }
  return tokens;
}

bool is_participle(const std::string& w) {
  return w.size() > 4 && w.ends_with("ing") && !ing_nouns().contains(w);
}

bool has_alpha(const std::string& w) {
  return std::any_of(w.begin(), w.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

}  // namespace

std::vector<std::string> extract_noun_phrases(std::string_view description) {
  const auto tokens = tokenize(description);
  std::vector<std::string> phrases;
  std::unordered_set<std::string> seen;

  std::vector<std::string> chunk;
  bool chunk_has_content = false;

  auto flush = [&] {
    while (!chunk.empty() && (adjectives().contains(chunk.back()) ||
                              determiners().contains(chunk.back()))) {
      chunk.pop_back();
    }
    const bool has_head = !chunk.empty() && !determiners().contains(chunk.back()) &&
                          has_alpha(chunk.back());
    if (chunk_has_content && has_head) {
      std::string phrase;
      for (const auto& w : chunk) {
        if (!phrase.empty()) phrase += ' ';
        phrase += w;
      }
      if (seen.insert(phrase).second) phrases.push_back(std::move(phrase));
    }
    chunk.clear();
    chunk_has_content = false;
  };

  for (const auto& tok : tokens) {
    if (!tok.word || breakers().contains(tok.text) || is_participle(tok.text)) {
      flush();
      continue;
    }
    if (determiners().contains(tok.text)) {
      if (chunk_has_content) flush();
      chunk.push_back(tok.text);
      continue;
    }
    chunk.push_back(tok.text);
    chunk_has_content = true;
  }
  flush();
  return phrases;
}

TokenSpan root_token_span(std::string_view phrase) {
  std::size_t end = phrase.size();
  while (end > 0 && !std::isalpha(static_cast<unsigned char>(phrase[end - 1]))) --end;
  if (end == 0) fail(ErrorCode::kNoRoot, "no alphabetic token in '" + std::string(phrase) + "'");
  std::size_t begin = end;
  while (begin > 0 && std::isalpha(static_cast<unsigned char>(phrase[begin - 1]))) --begin;
  return {begin, end};
}

std::string root_of_phrase(std::string_view phrase) {
  const TokenSpan span = root_token_span(phrase);
  std::string w = lower(phrase.substr(span.begin, span.end - span.begin));

  static const std::unordered_map<std::string_view, std::string_view> irregular{
      {"people", "person"}, {"men", "man"},       {"women", "woman"},
      {"children", "child"}, {"feet", "foot"},    {"teeth", "tooth"},
      {"mice", "mouse"},    {"geese", "goose"},   {"leaves", "leaf"},
      {"knives", "knife"},  {"wolves", "wolf"},   {"shelves", "shelf"},
      {"loaves", "loaf"},   {"halves", "half"},   {"wives", "wife"}};
  static const WordSet invariant{"fries",  "series", "species", "glasses", "clothes",
                                 "pants",  "jeans",  "shorts",  "scissors", "news",
                                 "bus",    "gas",    "lens",    "chess",   "grass",
                                 "glass",  "dress",  "cactus",  "canvas"};

  if (auto it = irregular.find(w); it != irregular.end()) return std::string(it->second);
  if (invariant.contains(w)) return w;
  if (w.size() > 4 && w.ends_with("ies")) return w.substr(0, w.size() - 3) + "y";
  for (std::string_view suffix : {"ches", "shes", "xes", "zzes", "sses"}) {
    if (w.size() > suffix.size() && w.ends_with(suffix)) return w.substr(0, w.size() - 2);
  }
  if (w.size() > 3 && w.back() == 's' && !w.ends_with("ss") && !w.ends_with("us") &&
      !w.ends_with("is")) {
    w.pop_back();
  }
  return w;
}

std::vector<PairRecord> pair_labels_to_segments(const ImageBundle& bundle) {
  if (bundle.phrases.size() != bundle.phrase_embeddings.rows()) {
    fail(ErrorCode::kShapeMismatch,
         "image '" + bundle.image_id + "': " + std::to_string(bundle.phrases.size()) +
             " phrases but " + std::to_string(bundle.phrase_embeddings.rows()) +
             " phrase embeddings");
  }
  if (bundle.phrases.empty()) return {};
  if (bundle.segment_embeddings.dim() != bundle.phrase_embeddings.dim()) {
    fail(ErrorCode::kDimMismatch, "image '" + bundle.image_id +
                                      "': segment and phrase embedding dims differ");
  }
  if (bundle.segment_embeddings.rows() == 0) {
    fail(ErrorCode::kEmptyInput, "image '" + bundle.image_id + "' has no segments");
  }

  const SimilarityMatrix sim = cosine_sim(bundle.segment_embeddings, bundle.phrase_embeddings);
  std::vector<PairRecord> pairs;
  pairs.reserve(bundle.phrases.size());
  for (std::size_t j = 0; j < sim.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sim.rows(); ++i) {
      if (sim(i, j) > sim(best, j)) best = i;
    }
    pairs.push_back(PairRecord{bundle.image_id, best, bundle.phrases[j],
                               root_of_phrase(bundle.phrases[j]), sim(best, j),
                               LabelSource::kPaired});
  }
  return pairs;
}

}  // namespace segref
