#include "cartoonqa/stemmer.hpp"

#include <cctype>

namespace cartoonqa {

namespace {

// Working buffer with the Porter primitives. `end` is the length of the
// surviving word; `stem_len` is set by ends() to the length before the
// matched suffix.
struct Stem {
    std::string b;
    std::size_t end;
    std::size_t stem_len{0};

    explicit Stem(std::string w) : b(std::move(w)), end(b.size()) {}

    bool is_consonant(std::size_t i) const {
        switch (b[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u':
                return false;
            case 'y':
                return i == 0 ? true : !is_consonant(i - 1);
            default:
                return true;
        }
    }

    // measure of b[0..k): number of VC sequences in [C](VC)^m[V]
    int measure(std::size_t k) const {
        int n = 0;
        std::size_t i = 0;
        while (i < k && is_consonant(i)) ++i;
        for (;;) {
            while (i < k && !is_consonant(i)) ++i;
            if (i >= k) return n;
            ++n;
            while (i < k && is_consonant(i)) ++i;
            if (i >= k) return n;
        }
    }

    bool has_vowel(std::size_t k) const {
        for (std::size_t i = 0; i < k; ++i)
            if (!is_consonant(i)) return true;
        return false;
    }

    bool double_consonant(std::size_t j) const {
        return j >= 1 && b[j] == b[j - 1] && is_consonant(j);
    }

    // consonant-vowel-consonant ending at j where the final consonant is not w/x/y
    bool cvc(std::size_t j) const {
        if (j < 2 || !is_consonant(j) || is_consonant(j - 1) || !is_consonant(j - 2))
            return false;
        const char c = b[j];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(const char* suffix) {
        const std::size_t len = std::char_traits<char>::length(suffix);
        if (len > end) return false;
        if (b.compare(end - len, len, suffix) != 0) return false;
        stem_len = end - len;
        return true;
    }

    void set_to(const char* repl) {
        const std::size_t len = std::char_traits<char>::length(repl);
        b.replace(stem_len, end - stem_len, repl);
        end = stem_len + len;
        b.resize(end);
    }

    void chop() {
        --end;
        b.resize(end);
    }

    // rewrite matched suffix when the preceding stem has measure > 0
    bool r(const char* repl) {
        if (measure(stem_len) > 0) set_to(repl);
        return true;  // suffix matched; stop scanning alternatives
    }
};

}  // namespace

std::string porter_stem(const std::string& word) {
    if (word.size() <= 2) return word;
    for (char c : word)
        if (!std::islower(static_cast<unsigned char>(c))) return word;

    Stem s(word);

    // step 1a: plurals
    if (s.ends("sses")) s.set_to("ss");
    else if (s.ends("ies")) s.set_to("i");
    else if (s.ends("ss")) { /* keep */ }
    else if (s.ends("s")) s.set_to("");

    // step 1b: -eed / -ed / -ing
    if (s.ends("eed")) {
        if (s.measure(s.stem_len) > 0) s.set_to("ee");
    } else {
        bool stripped = false;
        if (s.ends("ed") && s.has_vowel(s.stem_len)) {
            s.set_to("");
            stripped = true;
        } else if (s.ends("ing") && s.has_vowel(s.stem_len)) {
            s.set_to("");
            stripped = true;
        }
        if (stripped) {
            if (s.ends("at")) s.set_to("ate");
            else if (s.ends("bl")) s.set_to("ble");
            else if (s.ends("iz")) s.set_to("ize");
            else if (s.double_consonant(s.end - 1)) {
                const char c = s.b[s.end - 1];
                if (c != 'l' && c != 's' && c != 'z') s.chop();
            } else if (s.measure(s.end) == 1 && s.cvc(s.end - 1)) {
                s.stem_len = s.end;
                s.set_to("e");
            }
        }
    }

    // step 1c: y -> i when a vowel precedes
    if (s.ends("y") && s.has_vowel(s.stem_len)) s.set_to("i");

    // step 2 (m>0); longest suffixes first where prefixes overlap
    if (s.ends("ational")) s.r("ate");
    else if (s.ends("tional")) s.r("tion");
    else if (s.ends("enci")) s.r("ence");
    else if (s.ends("anci")) s.r("ance");
    else if (s.ends("izer")) s.r("ize");
    else if (s.ends("abli")) s.r("able");
    else if (s.ends("alli")) s.r("al");
    else if (s.ends("entli")) s.r("ent");
    else if (s.ends("eli")) s.r("e");
    else if (s.ends("ousli")) s.r("ous");
    else if (s.ends("ization")) s.r("ize");
    else if (s.ends("ation")) s.r("ate");
    else if (s.ends("ator")) s.r("ate");
    else if (s.ends("alism")) s.r("al");
    else if (s.ends("iveness")) s.r("ive");
    else if (s.ends("fulness")) s.r("ful");
    else if (s.ends("ousness")) s.r("ous");
    else if (s.ends("aliti")) s.r("al");
    else if (s.ends("iviti")) s.r("ive");
    else if (s.ends("biliti")) s.r("ble");

    // step 3 (m>0)
    if (s.ends("icate")) s.r("ic");
    else if (s.ends("ative")) s.r("");
    else if (s.ends("alize")) s.r("al");
    else if (s.ends("iciti")) s.r("ic");
    else if (s.ends("ical")) s.r("ic");
    else if (s.ends("ful")) s.r("");
    else if (s.ends("ness")) s.r("");

    // step 4 (m>1)
    {
        bool matched = true;
        if (s.ends("al")) {}
        else if (s.ends("ance")) {}
        else if (s.ends("ence")) {}
        else if (s.ends("er")) {}
        else if (s.ends("ic")) {}
        else if (s.ends("able")) {}
        else if (s.ends("ible")) {}
        else if (s.ends("ant")) {}
        else if (s.ends("ement")) {}
        else if (s.ends("ment")) {}
        else if (s.ends("ent")) {}
        else if (s.ends("ion") && s.stem_len > 0 &&
                 (s.b[s.stem_len - 1] == 's' || s.b[s.stem_len - 1] == 't')) {}
        else if (s.ends("ou")) {}
        else if (s.ends("ism")) {}
        else if (s.ends("ate")) {}
        else if (s.ends("iti")) {}
        else if (s.ends("ous")) {}
        else if (s.ends("ive")) {}
        else if (s.ends("ize")) {}
        else matched = false;

        if (matched && s.measure(s.stem_len) > 1) s.set_to("");
    }

    // step 5a: drop a trailing e
    if (s.end > 0 && s.b[s.end - 1] == 'e') {
        const int m = s.measure(s.end);
        if (m > 1 || (m == 1 && !s.cvc(s.end - 2))) s.chop();
    }
    // step 5b: -ll -> -l for long stems
    if (s.end > 1 && s.b[s.end - 1] == 'l' && s.double_consonant(s.end - 1) &&
        s.measure(s.end) > 1)
        s.chop();

    return s.b;
}

}  // namespace cartoonqa
