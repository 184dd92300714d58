#include "eva/porter.hpp"

#include <cstring>

namespace eva {

namespace {

// Working buffer for one word, following the reference implementation's
// index conventions: k_ is the index of the last valid character and the
// candidate stem ends at j_ (which may be -1 for an empty stem).
class Stemmer {
 public:
  explicit Stemmer(const std::string& w)
      : b_(w), k_(static_cast<int>(w.size()) - 1), j_(0) {}

  std::string run() {
    step1a();
    step1b();
    step1c();
    step2();
    step3();
    step4();
    step5();
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool is_consonant(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a':
      case 'e':
      case 'i':
      case 'o':
      case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !is_consonant(i - 1);
      default:
        return true;
    }
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  // Measure of the stem b_[0..j_]: the m in [C](VC)^m[V].
  int measure() const {
    int n = 0;
    int i = 0;
    while (true) {
      if (i > j_) return n;
      if (!is_consonant(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (is_consonant(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!is_consonant(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i) {
      if (!is_consonant(i)) return true;
    }
    return false;
  }

  bool double_consonant(int i) const {
    if (i < 1) return false;
    if (at(i) != at(i - 1)) return false;
    return is_consonant(i);
  }

  // b_[i-2..i] is consonant-vowel-consonant and the final consonant is not
  // w, x or y. Restores a trailing e on stems like "hop" (from "hoping").
  bool cvc(int i) const {
    if (i < 2 || !is_consonant(i) || is_consonant(i - 1) || !is_consonant(i - 2)) {
      return false;
    }
    const char c = at(i);
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(const char* s) {
    const int len = static_cast<int>(std::strlen(s));
    if (len > k_ + 1) return false;
    if (b_.compare(static_cast<std::size_t>(k_ + 1 - len), static_cast<std::size_t>(len), s) != 0) {
      return false;
    }
    j_ = k_ - len;
    return true;
  }

  void set_to(const char* s) {
    const int len = static_cast<int>(std::strlen(s));
    b_.replace(static_cast<std::size_t>(j_ + 1), b_.size() - static_cast<std::size_t>(j_ + 1), s);
    k_ = j_ + len;
  }

  void replace_if_m_positive(const char* s) {
    if (measure() > 0) set_to(s);
  }

  void step1a() {
    if (at(k_) != 's') return;
    if (ends("sses")) {
      k_ -= 2;
    } else if (ends("ies")) {
      set_to("i");
    } else if (at(k_ - 1) != 's') {
      --k_;
    }
  }

  void step1b() {
    if (ends("eed")) {
      if (measure() > 0) --k_;
      return;
    }
    if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) {
        set_to("ate");
      } else if (ends("bl")) {
        set_to("ble");
      } else if (ends("iz")) {
        set_to("ize");
      } else if (double_consonant(k_)) {
        const char c = at(k_);
        if (c != 'l' && c != 's' && c != 'z') --k_;
      } else {
        j_ = k_;
        if (measure() == 1 && cvc(k_)) set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  void step2() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a':
        if (ends("ational")) { replace_if_m_positive("ate"); break; }
        if (ends("tional")) { replace_if_m_positive("tion"); break; }
        break;
      case 'c':
        if (ends("enci")) { replace_if_m_positive("ence"); break; }
        if (ends("anci")) { replace_if_m_positive("ance"); break; }
        break;
      case 'e':
        if (ends("izer")) { replace_if_m_positive("ize"); break; }
        break;
      case 'l':
        if (ends("abli")) { replace_if_m_positive("able"); break; }
        if (ends("alli")) { replace_if_m_positive("al"); break; }
        if (ends("entli")) { replace_if_m_positive("ent"); break; }
        if (ends("eli")) { replace_if_m_positive("e"); break; }
        if (ends("ousli")) { replace_if_m_positive("ous"); break; }
        break;
      case 'o':
        if (ends("ization")) { replace_if_m_positive("ize"); break; }
        if (ends("ation")) { replace_if_m_positive("ate"); break; }
        if (ends("ator")) { replace_if_m_positive("ate"); break; }
        break;
      case 's':
        if (ends("alism")) { replace_if_m_positive("al"); break; }
        if (ends("iveness")) { replace_if_m_positive("ive"); break; }
        if (ends("fulness")) { replace_if_m_positive("ful"); break; }
        if (ends("ousness")) { replace_if_m_positive("ous"); break; }
        break;
      case 't':
        if (ends("aliti")) { replace_if_m_positive("al"); break; }
        if (ends("iviti")) { replace_if_m_positive("ive"); break; }
        if (ends("biliti")) { replace_if_m_positive("ble"); break; }
        break;
      default:
        break;
    }
  }

  void step3() {
    switch (at(k_)) {
      case 'e':
        if (ends("icate")) { replace_if_m_positive("ic"); break; }
        if (ends("ative")) { replace_if_m_positive(""); break; }
        if (ends("alize")) { replace_if_m_positive("al"); break; }
        break;
      case 'i':
        if (ends("iciti")) { replace_if_m_positive("ic"); break; }
        break;
      case 'l':
        if (ends("ical")) { replace_if_m_positive("ic"); break; }
        if (ends("ful")) { replace_if_m_positive(""); break; }
        break;
      case 's':
        if (ends("ness")) { replace_if_m_positive(""); break; }
        break;
      default:
        break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a':
        if (ends("al")) break;
        return;
      case 'c':
        if (ends("ance")) break;
        if (ends("ence")) break;
        return;
      case 'e':
        if (ends("er")) break;
        return;
      case 'i':
        if (ends("ic")) break;
        return;
      case 'l':
        if (ends("able")) break;
        if (ends("ible")) break;
        return;
      case 'n':
        if (ends("ant")) break;
        if (ends("ement")) break;
        if (ends("ment")) break;
        if (ends("ent")) break;
        return;
      case 'o':
        if (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) break;
        if (ends("ou")) break;
        return;
      case 's':
        if (ends("ism")) break;
        return;
      case 't':
        if (ends("ate")) break;
        if (ends("iti")) break;
        return;
      case 'u':
        if (ends("ous")) break;
        return;
      case 'v':
        if (ends("ive")) break;
        return;
      case 'z':
        if (ends("ize")) break;
        return;
      default:
        return;
    }
    if (measure() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int m = measure();
      if (m > 1 || (m == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && double_consonant(k_) && measure() > 1) --k_;
  }

  std::string b_;
  int k_;
  int j_;
};

}  // namespace

std::string porter_stem(const std::string& word) {
  if (word.size() <= 2) return word;
  return Stemmer(word).run();
}

}  // namespace eva
