#include "marspo/grader.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <stdexcept>

namespace marspo {

AnswerFormatKind answer_format_kind_from_string(const std::string& s) {
    if (s == "boxed-marker") return AnswerFormatKind::BoxedMarker;
    if (s == "line-marker") return AnswerFormatKind::LineMarker;
    if (s == "regex-pattern") return AnswerFormatKind::RegexPattern;
    throw std::runtime_error("unknown answer format kind: " + s);
}

std::string to_string(AnswerFormatKind k) {
    switch (k) {
        case AnswerFormatKind::BoxedMarker: return "boxed-marker";
        case AnswerFormatKind::LineMarker: return "line-marker";
        case AnswerFormatKind::RegexPattern: return "regex-pattern";
    }
    throw std::logic_error("unknown answer format kind");
}

namespace {

using boost::multiprecision::cpp_int;

bool is_ascii_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }

// Multi-byte currency prefixes recognized at the front of an answer.
const char* kCurrencies[] = {"$", "\xe2\x82\xac" /* euro */, "\xc2\xa3" /* pound */, "\xc2\xa5" /* yen */};

std::string replace_unicode_minus(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        // U+2212 MINUS SIGN
        if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xe2 &&
            static_cast<unsigned char>(s[i + 1]) == 0x88 && static_cast<unsigned char>(s[i + 2]) == 0x92) {
            out.push_back('-');
            i += 3;
        } else {
            out.push_back(s[i]);
            ++i;
        }
    }
    return out;
}

bool in_set(char c, const char* set) { return std::strchr(set, c) != nullptr && c != '\0'; }

std::string strip_ends(std::string s) {
    // Leading '.' is kept (".5" is a decimal); trailing '.' is sentence
    // punctuation. Parentheses are left alone.
    static const char* lead = ",;:!?\"'";
    static const char* trail = ".,;:!?\"'";
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        while (!s.empty() && is_ascii_space(static_cast<unsigned char>(s.front()))) {
            s.erase(s.begin());
            changed = true;
        }
        while (!s.empty() && is_ascii_space(static_cast<unsigned char>(s.back()))) {
            s.pop_back();
            changed = true;
        }
        if (!s.empty() && in_set(s.front(), lead)) {
            s.erase(s.begin());
            changed = true;
        }
        if (!s.empty() && in_set(s.back(), trail)) {
            s.pop_back();
            changed = true;
        }
    }
    return s;
}

std::string strip_currency(std::string s) {
    const bool neg = !s.empty() && s.front() == '-';
    const std::size_t at = neg ? 1 : 0;
    for (const char* cur : kCurrencies) {
        const std::size_t n = std::strlen(cur);
        if (s.size() >= at + n && s.compare(at, n, cur) == 0) {
            s.erase(at, n);
            break;
        }
    }
    return s;
}

std::string remove_thousands_separators(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && i + 1 < s.size() && is_digit(static_cast<unsigned char>(s[i - 1])) &&
            is_digit(static_cast<unsigned char>(s[i + 1]))) {
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

std::string collapse_and_lower(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (is_ascii_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return is_digit(static_cast<unsigned char>(c)); });
}

std::string strip_leading_zeros(std::string_view digits) {
    std::size_t i = 0;
    while (i + 1 < digits.size() && digits[i] == '0') ++i;
    return std::string(digits.substr(i));
}

struct NumericForm {
    Rational value;
    std::string canonical;
};

// Accepts integers, finite decimals and simple fractions, with an optional
// sign ('+' is dropped). Returns the canonical rendering in the same form
// class as the input: decimals stay decimals, fractions stay fractions
// (reduced; integer-valued forms collapse to plain integers).
std::optional<NumericForm> parse_numeric(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::string_view v = s;
    bool neg = false;
    if (v.front() == '+' || v.front() == '-') {
        neg = v.front() == '-';
        v.remove_prefix(1);
        if (v.empty()) return std::nullopt;
    }

    const auto slash = v.find('/');
    if (slash != std::string_view::npos) {
        std::string_view num = v.substr(0, slash);
        std::string_view den = v.substr(slash + 1);
        bool den_neg = false;
        if (!den.empty() && (den.front() == '+' || den.front() == '-')) {
            den_neg = den.front() == '-';
            den.remove_prefix(1);
        }
        if (!all_digits(num) || !all_digits(den)) return std::nullopt;
        cpp_int p(std::string(num));
        cpp_int q(std::string(den));
        if (q == 0) return std::nullopt;
        if (neg != den_neg) p = -p;
        Rational r(p, q);
        const cpp_int rn = boost::multiprecision::numerator(r);
        const cpp_int rd = boost::multiprecision::denominator(r);
        std::string canon = rn.str();
        if (rd != 1) canon += "/" + rd.str();
        return NumericForm{std::move(r), std::move(canon)};
    }

    const auto dot = v.find('.');
    if (dot != std::string_view::npos) {
        std::string_view ip = v.substr(0, dot);
        std::string_view fp = v.substr(dot + 1);
        if (fp.empty() || !all_digits(fp)) return std::nullopt;
        if (!ip.empty() && !all_digits(ip)) return std::nullopt;
        while (!fp.empty() && fp.back() == '0') fp.remove_suffix(1);
        std::string int_part = ip.empty() ? "0" : strip_leading_zeros(ip);
        if (fp.empty()) {
            // Decimal with a zero fraction collapses to an integer.
            Rational r(cpp_int(int_part));
            if (neg) r = -r;
            std::string canon = (neg && r != 0 ? "-" : "") + int_part;
            if (r == 0) canon = "0";
            return NumericForm{std::move(r), std::move(canon)};
        }
        cpp_int scale = boost::multiprecision::pow(cpp_int(10), static_cast<unsigned>(fp.size()));
        cpp_int n = cpp_int(int_part) * scale + cpp_int(std::string(fp));
        if (neg) n = -n;
        Rational r(n, scale);
        const bool zero = n == 0;
        std::string canon;
        if (zero) {
            canon = "0";
        } else {
            canon = (neg ? "-" : "") + int_part + "." + std::string(fp);
        }
        return NumericForm{std::move(r), std::move(canon)};
    }

    if (!all_digits(v)) return std::nullopt;
    std::string digits = strip_leading_zeros(v);
    Rational r(cpp_int(digits));
    if (neg) r = -r;
    std::string canon = (neg && r != 0 ? "-" : "") + digits;
    return NumericForm{std::move(r), std::move(canon)};
}

struct Span {
    std::string raw;
    std::size_t end = 0;  // offset one past the matched region in the input
};

std::optional<Span> last_boxed_span(const std::string& text, const std::string& marker) {
    std::optional<Span> best;
    std::size_t pos = 0;
    while (true) {
        const auto at = text.find(marker, pos);
        if (at == std::string::npos) break;
        pos = at + 1;
        std::size_t i = at + marker.size();
        while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size() || text[i] != '{') continue;
        int depth = 0;
        std::size_t start = i + 1;
        for (std::size_t j = i; j < text.size(); ++j) {
            if (text[j] == '{') {
                ++depth;
            } else if (text[j] == '}') {
                --depth;
                if (depth == 0) {
                    best = Span{text.substr(start, j - start), j + 1};
                    break;
                }
            }
        }
    }
    return best;
}

std::optional<Span> last_line_marker_span(const std::string& text, const std::string& marker) {
    if (marker.empty()) return std::nullopt;
    const auto at = text.rfind(marker);
    if (at == std::string::npos) return std::nullopt;
    const std::size_t start = at + marker.size();
    auto eol = text.find('\n', start);
    if (eol == std::string::npos) eol = text.size();
    return Span{text.substr(start, eol - start), eol};
}

std::optional<Span> last_regex_span(const std::string& text, const std::string& pattern) {
    const std::regex re(pattern);
    std::optional<Span> best;
    auto begin = std::sregex_iterator(text.begin(), text.end(), re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        if (m.size() >= 2 && m[1].matched) {
            best = Span{m[1].str(), static_cast<std::size_t>(m.position(0) + m.length(0))};
        } else {
            best = Span{m.str(), static_cast<std::size_t>(m.position(0) + m.length(0))};
        }
    }
    return best;
}

std::optional<Span> last_span(const std::string& text, const AnswerFormat& format) {
    switch (format.kind) {
        case AnswerFormatKind::BoxedMarker: return last_boxed_span(text, format.pattern);
        case AnswerFormatKind::LineMarker: return last_line_marker_span(text, format.pattern);
        case AnswerFormatKind::RegexPattern: return last_regex_span(text, format.pattern);
    }
    return std::nullopt;
}

}  // namespace

CanonicalAnswer normalize(const std::string& raw) {
    std::string s = replace_unicode_minus(raw);
    s = strip_ends(std::move(s));
    s = strip_currency(std::move(s));
    s = remove_thousands_separators(s);
    s = collapse_and_lower(s);

    CanonicalAnswer out;
    out.raw = raw;
    if (auto num = parse_numeric(s)) {
        out.canonical = num->canonical;
        out.numeric_value = std::move(num->value);
    } else {
        out.canonical = s;
    }
    return out;
}

std::optional<CanonicalAnswer> extract_answer(const std::string& response_text, const AnswerFormat& format) {
    const auto span = last_span(response_text, format);
    if (!span) return std::nullopt;
    CanonicalAnswer ans = normalize(span->raw);
    ans.raw = span->raw;
    return ans;
}

bool answers_equal(const CanonicalAnswer& a, const CanonicalAnswer& b) {
    if (a.numeric_value && b.numeric_value) return *a.numeric_value == *b.numeric_value;
    return a.canonical == b.canonical;
}

GradeResult grade(const std::string& sample_text, const CanonicalAnswer& gold, const AnswerFormat& format) {
    auto extracted = extract_answer(sample_text, format);
    if (!extracted) return GradeResult{false, std::nullopt};
    const bool ok = answers_equal(*extracted, gold);
    return GradeResult{ok, std::move(extracted)};
}

bool final_line_compliant(const std::string& response_text, const AnswerFormat& format) {
    const auto span = last_span(response_text, format);
    if (!span) return false;
    auto eol = response_text.find('\n', span->end);
    if (eol == std::string::npos) return true;
    for (std::size_t i = eol; i < response_text.size(); ++i) {
        if (!is_ascii_space(static_cast<unsigned char>(response_text[i]))) return false;
    }
    return true;
}

}  // namespace marspo
