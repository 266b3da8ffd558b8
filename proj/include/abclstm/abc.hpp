#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"

namespace abclstm {

/// Non-negative fraction kept in lowest terms.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
        if (den_ == 0) throw ValueError("rational with zero denominator");
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    constexpr std::int64_t num() const noexcept { return num_; }
    constexpr std::int64_t den() const noexcept { return den_; }
    constexpr double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend constexpr Rational operator*(Rational a, Rational b) { return {a.num_ * b.num_, a.den_ * b.den_}; }
    friend constexpr Rational operator/(Rational a, Rational b) { return {a.num_ * b.den_, a.den_ * b.num_}; }
    friend constexpr Rational operator+(Rational a, Rational b) {
        return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
    }
    friend constexpr bool operator==(Rational a, Rational b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend constexpr bool operator<(Rational a, Rational b) { return a.num_ * b.den_ < b.num_ * a.den_; }
    friend constexpr bool operator>(Rational a, Rational b) { return b < a; }

    std::string str() const { return std::to_string(num_) + "/" + std::to_string(den_); }

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

enum class Accidental { none, sharp, flat, natural, double_sharp, double_flat };

inline int accidental_semitones(Accidental a) {
    switch (a) {
    case Accidental::sharp: return 1;
    case Accidental::flat: return -1;
    case Accidental::double_sharp: return 2;
    case Accidental::double_flat: return -2;
    default: return 0;
    }
}

struct NoteEvent {
    char letter = 'C';                        // 'A'..'G'
    Accidental accidental = Accidental::none; // explicit only
    int octave_shift = 0;                     // lowercase +1, each ' +1, each , -1
    Rational duration{1, 8};                  // whole-note units
};

struct Rest {
    Rational duration{1, 8};
};

struct BarLine {
    std::string token; // "|", "||", "|:", ":|", "|]", "::", ...
};

/// Per-letter semitone alteration, indexed C D E F G A B.
struct KeySignature {
    std::array<int, 7> alter{};
    int fifths = 0; // sharps > 0, flats < 0

    friend bool operator==(const KeySignature&, const KeySignature&) = default;
};

/// Key change inside the body (K: line or inline [K:...]).
struct KeyChange {
    KeySignature key;
};

using TuneEvent = std::variant<NoteEvent, Rest, BarLine, KeyChange>;

struct Diagnostic {
    std::size_t line_no = 0; // 1-based within the parsed text
    std::string reason;
};

struct TuneAst {
    std::map<char, std::string> headers; // first occurrence of each field letter
    Rational default_length{1, 8};
    Rational meter{4, 4};
    KeySignature key;
    std::vector<TuneEvent> events;
    std::vector<Diagnostic> diagnostics;

    std::size_t note_count() const {
        std::size_t n = 0;
        for (const auto& e : events) n += std::holds_alternative<NoteEvent>(e);
        return n;
    }
};

inline int letter_index(char upper) {
    switch (upper) {
    case 'C': return 0;
    case 'D': return 1;
    case 'E': return 2;
    case 'F': return 3;
    case 'G': return 4;
    case 'A': return 5;
    case 'B': return 6;
    default: throw ValueError(std::string("not a note letter: ") + upper);
    }
}

/// Parses the value of a K: field: tonic with optional #/b, optional mode
/// (maj, m, min, ion, mix, dor, aeo, phr, lyd, loc), optional explicit
/// accidentals such as "^f _b". "none" and bagpipe keys give no accidentals.
inline KeySignature parse_key(std::string_view value) {
    auto lower = [](std::string_view s) {
        std::string out(s);
        for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    std::size_t pos = value.find_first_not_of(" \t");
    KeySignature key;
    if (pos == std::string_view::npos) return key;
    const std::string rest_all = lower(value.substr(pos));
    if (rest_all.rfind("none", 0) == 0 || rest_all.rfind("hp", 0) == 0) return key;

    const char tonic = static_cast<char>(std::toupper(static_cast<unsigned char>(value[pos])));
    static constexpr std::array<int, 7> major_fifths = {0, 2, 4, -1, 1, 3, 5}; // C D E F G A B
    if (tonic < 'A' || tonic > 'G') throw ParseError("invalid key signature '" + std::string(value) + "'");
    int fifths = major_fifths[static_cast<std::size_t>(letter_index(tonic))];
    ++pos;
    if (pos < value.size() && value[pos] == '#') {
        fifths += 7;
        ++pos;
    } else if (pos < value.size() && value[pos] == 'b') {
        fifths -= 7;
        ++pos;
    }
    while (pos < value.size() && (value[pos] == ' ' || value[pos] == '\t')) ++pos;

    std::size_t word_end = pos;
    while (word_end < value.size() && std::isalpha(static_cast<unsigned char>(value[word_end]))) ++word_end;
    const std::string mode = lower(value.substr(pos, word_end - pos));
    static const std::map<std::string, int> mode_offsets = {
        {"", 0},    {"maj", 0},  {"ion", 0},  {"mix", -1}, {"dor", -2}, {"m", -3},
        {"min", -3}, {"aeo", -3}, {"phr", -4}, {"lyd", 1},  {"loc", -5}, {"exp", 0},
    };
    const std::string mode3 = mode.size() > 3 ? mode.substr(0, 3) : mode;
    if (auto it = mode_offsets.find(mode3); it != mode_offsets.end()) {
        fifths += it->second;
        pos = word_end;
    } else if (word_end >= value.size() || value[word_end] != '=') {
        // anything but a trailing "clef=..." style word
        throw ParseError("invalid key mode '" + mode + "' in K:" + std::string(value));
    }
    if (fifths > 7 || fifths < -7) throw ParseError("key signature out of range: K:" + std::string(value));

    key.fifths = fifths;
    static constexpr std::array<char, 7> sharp_order = {'F', 'C', 'G', 'D', 'A', 'E', 'B'};
    static constexpr std::array<char, 7> flat_order = {'B', 'E', 'A', 'D', 'G', 'C', 'F'};
    for (int i = 0; i < fifths; ++i) key.alter[static_cast<std::size_t>(letter_index(sharp_order[static_cast<std::size_t>(i)]))] = 1;
    for (int i = 0; i < -fifths; ++i) key.alter[static_cast<std::size_t>(letter_index(flat_order[static_cast<std::size_t>(i)]))] = -1;

    // Explicit accidentals, e.g. "K:D ^g" or "K:D exp _b".
    while (pos < value.size()) {
        while (pos < value.size() && (value[pos] == ' ' || value[pos] == '\t')) ++pos;
        if (pos >= value.size()) break;
        int alter = 0;
        std::size_t p = pos;
        if (value[p] == '^') {
            alter = 1;
            if (p + 1 < value.size() && value[p + 1] == '^') alter = 2, ++p;
        } else if (value[p] == '_') {
            alter = -1;
            if (p + 1 < value.size() && value[p + 1] == '_') alter = -2, ++p;
        } else if (value[p] == '=') {
            alter = 0;
        } else {
            break; // clef=, other trailing words
        }
        ++p;
        if (p >= value.size()) break;
        const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(value[p])));
        if (letter < 'A' || letter > 'G') break;
        key.alter[static_cast<std::size_t>(letter_index(letter))] = alter;
        pos = p + 1;
    }
    return key;
}

/// M: value. "C" is 4/4, "C|" is 2/2, "none" keeps 4/4.
inline Rational parse_meter(std::string_view value) {
    std::string v;
    for (char c : value)
        if (c != ' ' && c != '\t') v += c;
    if (v.empty() || v == "none") return {4, 4};
    if (v == "C") return {4, 4};
    if (v == "C|") return {2, 2};
    const auto slash = v.find('/');
    if (slash == std::string::npos) throw ParseError("invalid meter '" + std::string(value) + "'");
    // Sums such as "2+3/8" add the numerator parts.
    std::int64_t num = 0;
    std::size_t p = 0;
    const std::string num_part = v.substr(0, slash);
    while (p < num_part.size()) {
        std::size_t q = num_part.find('+', p);
        if (q == std::string::npos) q = num_part.size();
        const std::string piece = num_part.substr(p, q - p);
        if (piece.empty() || piece.find_first_not_of("0123456789") != std::string::npos)
            throw ParseError("invalid meter '" + std::string(value) + "'");
        num += std::stoll(piece);
        p = q + 1;
    }
    const std::string den = v.substr(slash + 1);
    if (den.empty() || den.find_first_not_of("0123456789") != std::string::npos || num <= 0 || std::stoll(den) <= 0)
        throw ParseError("invalid meter '" + std::string(value) + "'");
    return {num, std::stoll(den)};
}

/// L: value such as "1/8".
inline Rational parse_unit_length(std::string_view value) {
    std::string v;
    for (char c : value)
        if (c != ' ' && c != '\t') v += c;
    const auto slash = v.find('/');
    try {
        if (slash == std::string::npos) {
            const auto n = std::stoll(v);
            if (n > 0 && v.find_first_not_of("0123456789") == std::string::npos) return {n, 1};
        } else {
            const std::string a = v.substr(0, slash), b = v.substr(slash + 1);
            if (!a.empty() && !b.empty() && a.find_first_not_of("0123456789") == std::string::npos &&
                b.find_first_not_of("0123456789") == std::string::npos && std::stoll(a) > 0 && std::stoll(b) > 0)
                return {std::stoll(a), std::stoll(b)};
        }
    } catch (const std::exception&) {
    }
    throw ParseError("invalid default note length '" + std::string(value) + "'");
}

/// A line of the form `<letter>:<rest>`.
inline bool is_field_line(std::string_view line) {
    return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':';
}

/// Field line inside a tune body. "A:|" style bar tokens are notes, not
/// fields.
inline bool is_body_field_line(std::string_view line) {
    if (!is_field_line(line)) return false;
    if (line.size() >= 3 && (line[2] == '|' || line[2] == ':')) return false;
    return true;
}

/// Running state while reading a tune body; shared across lines.
struct BodyContext {
    Rational unit{1, 8};
    Rational meter{4, 4};
    KeySignature key;
    // tuplet: remaining notes and the factor applied to each
    int tuplet_left = 0;
    Rational tuplet_factor{1, 1};
    // broken rhythm factor for the next note, set by '>' or '<'
    std::optional<Rational> broken_next;
    std::optional<std::size_t> last_timed; // index into events of the last note/rest
};

namespace detail {

class LineScanner {
public:
    LineScanner(std::string_view line, std::size_t line_no, BodyContext& ctx, std::vector<TuneEvent>& events,
                std::vector<Diagnostic>& diags)
        : s_(line), line_no_(line_no), ctx_(ctx), events_(events), diags_(diags) {}

    void run() {
        while (p_ < s_.size()) step();
    }

private:
    char peek(std::size_t off = 0) const { return p_ + off < s_.size() ? s_[p_ + off] : '\0'; }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }
    static bool is_note_letter(char c) { return (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g'); }

    void diag(std::string reason) {
        diags_.push_back({line_no_, std::move(reason) + " at column " + std::to_string(p_ + 1)});
    }

    // Skips to the closing delimiter; false if it is missing.
    bool skip_delimited(char close) {
        const auto end = s_.find(close, p_ + 1);
        if (end == std::string_view::npos) return false;
        p_ = end + 1;
        return true;
    }

    std::int64_t read_int() {
        std::int64_t v = 0;
        while (is_digit(peek()) && v < 1000000) v = v * 10 + (s_[p_++] - '0');
        return v;
    }

    // Length suffix: [n][/[m]]*. Returns the multiplier.
    std::optional<Rational> read_length() {
        std::int64_t num = 1;
        std::int64_t den = 1;
        if (is_digit(peek())) num = read_int();
        while (peek() == '/') {
            ++p_;
            if (is_digit(peek()))
                den *= read_int();
            else
                den *= 2;
            if (den > (1 << 20)) break;
        }
        if (num == 0 || den == 0) return std::nullopt;
        return Rational(num, den);
    }

    void apply_timing(Rational& d) {
        if (ctx_.broken_next) {
            d = d * *ctx_.broken_next;
            ctx_.broken_next.reset();
        }
        if (ctx_.tuplet_left > 0) {
            d = d * ctx_.tuplet_factor;
            --ctx_.tuplet_left;
        }
    }

    void push_timed(TuneEvent e) {
        ctx_.last_timed = events_.size();
        events_.push_back(std::move(e));
    }

    // Broken rhythm after a note or rest: '>' dots the previous and halves
    // the next, '<' the reverse; doubled marks use 3/4 vs 1/4 and so on.
    void read_broken_rhythm() {
        const char mark = peek();
        int n = 0;
        while (peek() == mark) {
            ++p_;
            ++n;
        }
        if (!ctx_.last_timed) {
            diag("broken rhythm without a preceding note");
            return;
        }
        const Rational shortf(1, std::int64_t{1} << n);
        const Rational longf = Rational(2, 1) + Rational(-1, std::int64_t{1} << n);
        auto& prev = events_[*ctx_.last_timed];
        Rational& pd = std::holds_alternative<NoteEvent>(prev) ? std::get<NoteEvent>(prev).duration
                                                               : std::get<Rest>(prev).duration;
        pd = pd * (mark == '>' ? longf : shortf);
        ctx_.broken_next = mark == '>' ? shortf : longf;
    }

    // accidental? letter octave-marks*; no length
    std::optional<NoteEvent> read_pitch() {
        NoteEvent n;
        if (peek() == '^') {
            ++p_;
            n.accidental = Accidental::sharp;
            if (peek() == '^') ++p_, n.accidental = Accidental::double_sharp;
        } else if (peek() == '_') {
            ++p_;
            n.accidental = Accidental::flat;
            if (peek() == '_') ++p_, n.accidental = Accidental::double_flat;
        } else if (peek() == '=') {
            ++p_;
            n.accidental = Accidental::natural;
        }
        const char c = peek();
        if (!is_note_letter(c)) {
            diag("accidental not followed by a note");
            return std::nullopt;
        }
        ++p_;
        n.letter = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        n.octave_shift = (c >= 'a') ? 1 : 0;
        while (peek() == '\'' || peek() == ',') n.octave_shift += (s_[p_++] == '\'') ? 1 : -1;
        return n;
    }

    void read_note() {
        auto n = read_pitch();
        if (!n) return;
        auto len = read_length();
        if (!len) {
            diag("zero note length");
            return;
        }
        n->duration = ctx_.unit * *len;
        apply_timing(n->duration);
        push_timed(*n);
        if (peek() == '>' || peek() == '<') read_broken_rhythm();
    }

    void read_rest() {
        const char kind = s_[p_++];
        if (kind == 'Z' || kind == 'X') {
            const std::int64_t bars = is_digit(peek()) ? read_int() : 1;
            if (bars == 0) {
                diag("zero-length multi-measure rest");
                return;
            }
            push_timed(Rest{ctx_.meter * Rational(bars)});
            return;
        }
        auto len = read_length();
        if (!len) {
            diag("zero rest length");
            return;
        }
        Rational d = ctx_.unit * *len;
        apply_timing(d);
        push_timed(Rest{d});
        if (peek() == '>' || peek() == '<') read_broken_rhythm();
    }

    // "[CEG]2": monophonic rendering keeps the first note.
    void read_chord() {
        const std::size_t start = p_;
        ++p_;
        std::optional<NoteEvent> first;
        Rational first_len{1, 1};
        while (p_ < s_.size() && peek() != ']') {
            const char c = peek();
            if (c == '^' || c == '_' || c == '=' || is_note_letter(c)) {
                auto n = read_pitch();
                if (!n) return;
                auto len = read_length();
                if (!len) {
                    diag("zero note length in chord");
                    return;
                }
                if (!first) first = n, first_len = *len;
            } else if (c == '-' || c == ' ') {
                ++p_;
            } else {
                diag(std::string("unexpected '") + c + "' in chord");
                ++p_;
            }
        }
        if (peek() != ']' || !first) {
            p_ = std::max(p_, start + 1);
            diag("unterminated or empty chord");
            return;
        }
        ++p_;
        auto len = read_length();
        if (!len) {
            diag("zero chord length");
            return;
        }
        first->duration = ctx_.unit * first_len * *len;
        apply_timing(first->duration);
        push_timed(*first);
        if (peek() == '>' || peek() == '<') read_broken_rhythm();
    }

    void apply_field(char letter, std::string_view value) {
        try {
            if (letter == 'K') {
                ctx_.key = parse_key(value);
                events_.push_back(KeyChange{ctx_.key});
            } else if (letter == 'L') {
                ctx_.unit = parse_unit_length(value);
            } else if (letter == 'M') {
                ctx_.meter = parse_meter(value);
            }
        } catch (const ParseError& e) {
            diag(e.what());
        }
    }

    void read_bar() {
        std::string tok;
        if (peek() == '[') tok += s_[p_++]; // "[|"
        while (peek() == '|' || peek() == ':' || (peek() == ']' && !tok.empty() && tok.back() == '|')) tok += s_[p_++];
        if (tok == ":" || tok == "[") {
            diag("stray '" + tok + "'");
            return;
        }
        // "|1", ":|2", "|1,2"
        if (is_digit(peek())) {
            while (is_digit(peek()) || peek() == ',' || peek() == '-') tok += s_[p_++];
        }
        events_.push_back(BarLine{tok});
    }

    void read_tuplet() {
        ++p_; // '('
        const std::int64_t p = read_int();
        std::int64_t q = 0;
        std::int64_t r = p;
        if (peek() == ':') {
            ++p_;
            if (is_digit(peek())) q = read_int();
            if (peek() == ':') {
                ++p_;
                if (is_digit(peek())) r = read_int();
            }
        }
        if (p < 2 || p > 9) {
            diag("unsupported tuplet (" + std::to_string(p));
            return;
        }
        if (q == 0) {
            const bool compound = ctx_.meter.den() == 8 && ctx_.meter.num() % 3 == 0 && ctx_.meter.num() > 3;
            switch (p) {
            case 2: q = 3; break;
            case 3: q = 2; break;
            case 4: q = 3; break;
            case 6: q = 2; break;
            case 8: q = 3; break;
            default: q = compound ? 3 : 2; break;
            }
        }
        ctx_.tuplet_factor = Rational(q, p);
        ctx_.tuplet_left = static_cast<int>(r);
    }

    void step() {
        const char c = peek();
        switch (c) {
        case ' ':
        case '\t':
        case '\\': // line continuation
        case 'y':  // spacer
        case '-':  // tie, played as separate notes
        case ')':
        case '.':
        case '~':
        case 'H':
        case 'L':
        case 'M':
        case 'O':
        case 'P':
        case 'R':
        case 'S':
        case 'T':
        case 'u':
        case 'v':
            ++p_;
            return;
        case '%':
            p_ = s_.size();
            return;
        case '"':
            if (!skip_delimited('"')) {
                diag("unterminated chord symbol");
                p_ = s_.size();
            }
            return;
        case '!':
        case '+':
            if (!skip_delimited(c)) {
                diag(std::string("unterminated decoration '") + c + "'");
                p_ = s_.size();
            }
            return;
        case '{':
            if (!skip_delimited('}')) {
                diag("unterminated grace group");
                p_ = s_.size();
            }
            return;
        case '(':
            if (is_digit(peek(1)))
                read_tuplet();
            else
                ++p_;
            return;
        case '<':
        case '>':
            read_broken_rhythm();
            return;
        case '|':
        case ':':
            read_bar();
            return;
        case '[': {
            const char n1 = peek(1);
            if (n1 == '|') {
                read_bar();
            } else if (is_digit(n1)) {
                ++p_;
                std::string tok = "[";
                while (is_digit(peek()) || peek() == ',' || peek() == '-') tok += s_[p_++];
                events_.push_back(BarLine{tok});
            } else if (std::isalpha(static_cast<unsigned char>(n1)) && peek(2) == ':') {
                const auto end = s_.find(']', p_);
                if (end == std::string_view::npos) {
                    diag("unterminated inline field");
                    p_ = s_.size();
                    return;
                }
                const char letter = n1;
                const std::string_view value = s_.substr(p_ + 3, end - (p_ + 3));
                apply_field(letter, value);
                p_ = end + 1;
            } else {
                read_chord();
            }
            return;
        }
        case 'z':
        case 'x':
        case 'Z':
        case 'X':
            read_rest();
            return;
        default:
            break;
        }
        if (c == '^' || c == '_' || c == '=' || is_note_letter(c)) {
            read_note();
            return;
        }
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x20 && u < 0x7F)
            diag(std::string("unexpected character '") + c + "'");
        else
            diag("unexpected byte " + std::to_string(static_cast<int>(u)));
        ++p_;
    }

    std::string_view s_;
    std::size_t p_ = 0;
    std::size_t line_no_;
    BodyContext& ctx_;
    std::vector<TuneEvent>& events_;
    std::vector<Diagnostic>& diags_;
};

} // namespace detail

/// Reads one body line (or a body field line) into `events`.
inline void parse_body_line(std::string_view line, std::size_t line_no, BodyContext& ctx,
                            std::vector<TuneEvent>& events, std::vector<Diagnostic>& diags) {
    if (is_body_field_line(line)) {
        const char letter = line[0];
        const std::string_view value = line.substr(2);
        try {
            if (letter == 'K') {
                ctx.key = parse_key(value);
                events.push_back(KeyChange{ctx.key});
            } else if (letter == 'L') {
                ctx.unit = parse_unit_length(value);
            } else if (letter == 'M') {
                ctx.meter = parse_meter(value);
            }
        } catch (const ParseError& e) {
            diags.push_back({line_no, e.what()});
        }
        return;
    }
    if (!line.empty() && line.front() == '%') return;
    detail::LineScanner(line, line_no, ctx, events, diags).run();
}

/// Parses one tune: header fields up to and including K:, then the body.
/// Unknown body characters are skipped and reported in `diagnostics`.
inline TuneAst parse_tune(std::string_view text) {
    const std::string norm = normalize_newlines(text);
    std::vector<std::string_view> lines;
    {
        std::string_view sv(norm);
        std::size_t pos = 0;
        while (pos <= sv.size()) {
            std::size_t end = sv.find('\n', pos);
            if (end == std::string_view::npos) end = sv.size();
            lines.push_back(sv.substr(pos, end - pos));
            pos = end + 1;
        }
    }

    TuneAst ast;
    std::size_t i = 0;
    bool have_key = false;
    bool have_meter = false;
    bool have_length = false;
    for (; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        if (line.empty() || line.front() == '%') continue;
        if (!is_field_line(line)) break;
        const char letter = line[0];
        const std::string_view value = detail::trim(line.substr(2));
        ast.headers.emplace(letter, std::string(value));
        if (letter == 'L') {
            ast.default_length = parse_unit_length(value);
            have_length = true;
        } else if (letter == 'M') {
            ast.meter = parse_meter(value);
            have_meter = true;
        } else if (letter == 'K') {
            ast.key = parse_key(value);
            have_key = true;
            ++i;
            break;
        }
    }
    if (!have_key) throw ParseError("tune has no K: header");
    (void)have_meter;
    (void)have_length;

    BodyContext ctx;
    ctx.unit = ast.default_length;
    ctx.meter = ast.meter;
    ctx.key = ast.key;
    for (; i < lines.size(); ++i) parse_body_line(lines[i], i + 1, ctx, ast.events, ast.diagnostics);

    bool any_timed = false;
    for (const auto& e : ast.events)
        if (std::holds_alternative<NoteEvent>(e) || std::holds_alternative<Rest>(e)) any_timed = true;
    if (!any_timed) throw ParseError("tune body is empty");
    return ast;
}

/// Accidentals set by explicit marks, keyed by (letter, octave); cleared at
/// each bar line.
class BarAccidentals {
public:
    void clear() { marks_.clear(); }
    void set(const NoteEvent& n, int semitones) { marks_[key(n)] = semitones; }
    std::optional<int> get(const NoteEvent& n) const {
        auto it = marks_.find(key(n));
        if (it == marks_.end()) return std::nullopt;
        return it->second;
    }

private:
    static int key(const NoteEvent& n) { return n.octave_shift * 7 + letter_index(n.letter); }
    std::map<int, int> marks_;
};

/// C..B → 60..71, c..b → 72..83, ±12 per octave mark. An explicit
/// accidental overrides the key and is remembered until the next bar line.
inline int pitch_to_midi(const NoteEvent& note, const KeySignature& key, BarAccidentals& bar) {
    static constexpr std::array<int, 7> semis = {0, 2, 4, 5, 7, 9, 11};
    const auto li = static_cast<std::size_t>(letter_index(note.letter));
    int alter = key.alter[li];
    if (note.accidental != Accidental::none) {
        alter = accidental_semitones(note.accidental);
        bar.set(note, alter);
    } else if (auto mark = bar.get(note)) {
        alter = *mark;
    }
    const int midi = 60 + semis[li] + 12 * note.octave_shift + alter;
    if (midi < 0 || midi > 127)
        throw ValueError("pitch out of MIDI range: " + std::to_string(midi) + " for note " + note.letter);
    return midi;
}

} // namespace abclstm
