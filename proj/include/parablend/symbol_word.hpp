#pragma once

// Finite words over the sign alphabet.  letters[0] is the most recent letter
// of a past: a point whose backward orbit visits the strips of letters[0],
// letters[1], ... in that order.  Periodic words repeat letters cyclically.

#include <sstream>
#include <string>
#include <vector>

#include "parablend/errors.hpp"
#include "parablend/signed_polynomial.hpp"

namespace parablend {

struct SymbolWord {
  std::vector<Letter> letters;

  [[nodiscard]] std::size_t depth() const noexcept { return letters.size(); }
  [[nodiscard]] bool empty() const noexcept { return letters.empty(); }
  [[nodiscard]] const Letter& cyclic(std::size_t i) const { return letters[i % letters.size()]; }

  // delta . w: the new letter becomes the most recent one.
  [[nodiscard]] SymbolWord prepend(const Letter& delta) const {
    SymbolWord out;
    out.letters.reserve(letters.size() + 1);
    out.letters.push_back(delta);
    out.letters.insert(out.letters.end(), letters.begin(), letters.end());
    return out;
  }

  // Periodic word seen one step later along the orbit.
  [[nodiscard]] SymbolWord shifted() const {
    SymbolWord out;
    if (letters.empty()) return out;
    out.letters.push_back(letters.back());
    out.letters.insert(out.letters.end(), letters.begin(), letters.end() - 1);
    return out;
  }

  // depth letters taken cyclically from this word.
  [[nodiscard]] SymbolWord unrolled(std::size_t depth) const {
    if (letters.empty()) throw DimensionError("cannot unroll an empty word");
    SymbolWord out;
    for (std::size_t i = 0; i < depth; ++i) out.letters.push_back(cyclic(i));
    return out;
  }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < letters.size(); ++i) {
      if (i) s += ',';
      s += letters[i].to_string();
    }
    return s;
  }

  // Comma or whitespace separated letters such as "+-,--,+-".
  static SymbolWord parse(const std::string& text) {
    std::string norm = text;
    for (auto& ch : norm)
      if (ch == ',') ch = ' ';
    std::istringstream in(norm);
    SymbolWord w;
    std::string tok;
    while (in >> tok) w.letters.push_back(Letter::parse(tok));
    if (!w.letters.empty()) {
      const int len = w.letters.front().length();
      for (const auto& l : w.letters)
        if (l.length() != len) throw DimensionError("word letters have different lengths");
    }
    return w;
  }

  bool operator==(const SymbolWord&) const = default;
};

}  // namespace parablend
