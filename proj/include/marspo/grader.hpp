#pragma once

#include <optional>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "marspo/records.hpp"

namespace marspo {

using Rational = boost::multiprecision::cpp_rational;

// How the final answer is located inside a response.
//   boxed-marker : pattern names a marker followed by a braced group, e.g. "\boxed"
//   line-marker  : pattern is a literal marker; the answer is the rest of that line
//   regex-pattern: pattern is a regex; group 1 (or the whole match) is the answer
enum class AnswerFormatKind { BoxedMarker, LineMarker, RegexPattern };

struct AnswerFormat {
    AnswerFormatKind kind = AnswerFormatKind::LineMarker;
    std::string pattern = "Answer:";
};

AnswerFormatKind answer_format_kind_from_string(const std::string& s);
std::string to_string(AnswerFormatKind k);

// `raw` is the extracted span as seen in the text, `canonical` the normalized
// form (a fixed point of normalize), `numeric_value` the exact rational when
// the canonical form is an integer, finite decimal, or simple fraction.
struct CanonicalAnswer {
    std::string raw;
    std::string canonical;
    std::optional<Rational> numeric_value;
};

// Normalization: trims whitespace and surrounding punctuation, unifies the
// Unicode minus, drops a leading currency symbol and thousands separators,
// lowercases, collapses internal whitespace, reduces fractions, and strips
// trailing decimal zeros and leading '+'. Idempotent on its own output.
CanonicalAnswer normalize(const std::string& raw);

// Last successful match wins; absent when nothing matches.
std::optional<CanonicalAnswer> extract_answer(const std::string& response_text, const AnswerFormat& format);

// Exact rational equality when both sides are numeric, canonical string
// equality otherwise. No symbolic equivalence ("x+1" != "1+x").
bool answers_equal(const CanonicalAnswer& a, const CanonicalAnswer& b);

struct GradeResult {
    bool correct = false;
    std::optional<CanonicalAnswer> answer;
};

// The correctness predicate: b = 1 iff an answer can be extracted and it
// equals gold. Extraction failure grades as incorrect, never as an error.
GradeResult grade(const std::string& sample_text, const CanonicalAnswer& gold, const AnswerFormat& format);

// True when the final-answer match ends on the last non-blank line of the
// text, i.e. nothing but whitespace follows that line. Feeds the stub
// reward's format-compliance term.
bool final_line_compliant(const std::string& response_text, const AnswerFormat& format);

}  // namespace marspo
