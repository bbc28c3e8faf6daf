#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "marspo/grader.hpp"
#include "marspo/rng.hpp"

using namespace marspo;

namespace {

const AnswerFormat kBoxed{AnswerFormatKind::BoxedMarker, "\\boxed"};
const AnswerFormat kLine{AnswerFormatKind::LineMarker, "Answer:"};
const AnswerFormat kRegex{AnswerFormatKind::RegexPattern, "Answer:\\s*([-0-9./]+)"};

std::string random_bytes(SplitMix64& rng, std::size_t max_len) {
    const std::size_t len = rng.next_below(max_len);
    std::string s(len, '\0');
    for (auto& c : s) c = static_cast<char>(rng.next_below(256));
    return s;
}

Rational random_rational(SplitMix64& rng) {
    const std::int64_t num = static_cast<std::int64_t>(rng.next_below(2001)) - 1000;
    const std::int64_t den = 1 + static_cast<std::int64_t>(rng.next_below(50));
    return Rational(num, den);
}

}  // namespace

TEST_CASE("boxed extraction takes the last balanced group") {
    auto a = extract_answer("so the total is \\boxed{42}.", kBoxed);
    REQUIRE(a.has_value());
    CHECK(a->raw == "42");
    CHECK(a->canonical == "42");

    auto b = extract_answer("\\boxed{1} then \\boxed{2}", kBoxed);
    REQUIRE(b.has_value());
    CHECK(b->canonical == "2");

    auto nested = extract_answer("\\boxed{\\frac{1}{2}}", kBoxed);
    REQUIRE(nested.has_value());
    CHECK(nested->raw == "\\frac{1}{2}");

    CHECK_FALSE(extract_answer("no marker anywhere", kBoxed).has_value());
    CHECK_FALSE(extract_answer("\\boxed{unclosed", kBoxed).has_value());
}

TEST_CASE("line-marker extraction keeps the final answer") {
    auto a = extract_answer("Answer: 3\nAnswer: 7", kLine);
    REQUIRE(a.has_value());
    CHECK(a->raw == " 7");
    CHECK(a->canonical == "7");
    CHECK_FALSE(extract_answer("nothing here", kLine).has_value());
}

TEST_CASE("regex extraction uses group one of the last match") {
    auto a = extract_answer("Answer: 3/6 junk Answer: 9/6", kRegex);
    REQUIRE(a.has_value());
    CHECK(a->raw == "9/6");
    CHECK(a->canonical == "3/2");
}

TEST_CASE("normalize handles currency, separators and decimals") {
    const auto a = normalize("$1,234.50 ");
    CHECK(a.canonical == "1234.5");
    REQUIRE(a.numeric_value.has_value());
    // exact rational oracle: 123450 / 100 reduced
    CHECK(*a.numeric_value == Rational(123450, 100));
    CHECK(*a.numeric_value == Rational(2469, 2));
}

TEST_CASE("normalize reduces fractions and passes symbols through") {
    CHECK(normalize("6/8").canonical == "3/4");
    CHECK(*normalize("6/8").numeric_value == Rational(3, 4));
    CHECK(normalize("x+1").canonical == "x+1");
    CHECK_FALSE(normalize("x+1").numeric_value.has_value());
}

TEST_CASE("normalize edge forms") {
    CHECK(normalize("42.0").canonical == "42");
    CHECK(normalize("+7").canonical == "7");
    CHECK(normalize("007").canonical == "7");
    CHECK(normalize("-0").canonical == "0");
    CHECK(normalize(".5").canonical == "0.5");
    CHECK(normalize("4/2").canonical == "2");
    CHECK(normalize("3/0").canonical == "3/0");  // undefined fraction stays symbolic
    CHECK_FALSE(normalize("3/0").numeric_value.has_value());
    CHECK(normalize("  Mixed  Case  Words ").canonical == "mixed case words");
    // Unicode minus folds into ASCII
    CHECK(normalize("\xe2\x88\x92""5").canonical == "-5");
    CHECK(*normalize("\xe2\x88\x92""5").numeric_value == Rational(-5));
    CHECK(normalize("-$8").canonical == "-8");
    CHECK(normalize("\xe2\x82\xac""12").canonical == "12");
}

TEST_CASE("normalize is idempotent") {
    SplitMix64 rng(99);
    const char* seeds[] = {"$1,234.50 ", "6/8", "x+1", "42.0", "  A  B ", "-0.250", "1,000,000", "3.", "..7.."};
    for (const char* s : seeds) {
        const auto once = normalize(s);
        const auto twice = normalize(once.canonical);
        CHECK(twice.canonical == once.canonical);
        CHECK(twice.numeric_value.has_value() == once.numeric_value.has_value());
        if (once.numeric_value) CHECK(*twice.numeric_value == *once.numeric_value);
    }
    for (int i = 0; i < 2000; ++i) {
        const auto once = normalize(random_bytes(rng, 48));
        const auto twice = normalize(once.canonical);
        CHECK(twice.canonical == once.canonical);
    }
}

TEST_CASE("answers_equal on numeric and symbolic domains") {
    CHECK(answers_equal(normalize("0.5"), normalize("1/2")));
    CHECK(answers_equal(normalize("42"), normalize("42.0")));
    CHECK_FALSE(answers_equal(normalize("x+1"), normalize("1+x")));
    CHECK_FALSE(answers_equal(normalize("42"), normalize("42 apples")));
    CHECK(answers_equal(normalize("-3/9"), normalize("-0.333333333333333333333333333333") ) == false);
    CHECK(answers_equal(normalize("-3/9"), normalize("-1/3")));
}

TEST_CASE("answers_equal is an equivalence relation on rationals") {
    SplitMix64 rng(123);
    for (int i = 0; i < 3000; ++i) {
        const Rational r = random_rational(rng);
        const std::string as_fraction = boost::multiprecision::numerator(r).str() + "/" +
                                        boost::multiprecision::denominator(r).str();
        const auto a = normalize(as_fraction);
        REQUIRE(a.numeric_value.has_value());
        CHECK(answers_equal(a, a));  // reflexive

        const Rational s = random_rational(rng);
        const auto b = normalize(boost::multiprecision::numerator(s).str() + "/" +
                                 boost::multiprecision::denominator(s).str());
        CHECK(answers_equal(a, b) == answers_equal(b, a));  // symmetric
        CHECK(answers_equal(a, b) == (r == s));             // agrees with exact arithmetic
    }
}

TEST_CASE("grade maps extraction results to the correctness bit") {
    const auto gold = normalize("42");
    auto r1 = grade("steps... \\boxed{42}", gold, kBoxed);
    CHECK(r1.correct);
    REQUIRE(r1.answer.has_value());
    CHECK(r1.answer->canonical == "42");

    auto r2 = grade("steps... \\boxed{41}", gold, kBoxed);
    CHECK_FALSE(r2.correct);
    CHECK(r2.answer->canonical == "41");

    auto r3 = grade("no marker", gold, kBoxed);
    CHECK_FALSE(r3.correct);
    CHECK_FALSE(r3.answer.has_value());
}

TEST_CASE("grade never throws on arbitrary bytes") {
    SplitMix64 rng(2026);
    const auto gold = normalize("42");
    for (int i = 0; i < 20000; ++i) {
        const std::string junk = random_bytes(rng, 64);
        CHECK_NOTHROW(grade(junk, gold, kBoxed));
        CHECK_NOTHROW(grade(junk, gold, kLine));
        CHECK_NOTHROW(grade(junk, gold, kRegex));
    }
}

TEST_CASE("final_line_compliant detects trailing lines") {
    CHECK(final_line_compliant("72 Answer: 72", kLine));
    CHECK(final_line_compliant("72 Answer: 72\n   \n", kLine));
    CHECK_FALSE(final_line_compliant("72 Answer: 72\nso", kLine));
    CHECK_FALSE(final_line_compliant("no marker", kLine));
    CHECK(final_line_compliant("x \\boxed{9}", kBoxed));
    CHECK_FALSE(final_line_compliant("x \\boxed{9}\nmore", kBoxed));
}
