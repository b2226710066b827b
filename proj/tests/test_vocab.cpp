#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "hmer/vocab.hpp"

using hmer::Vocabulary;

TEST_CASE("vocabulary ids follow line order") {
    auto v = Vocabulary::from_tokens({"<sos>", "<eol>", "a", "+", "="});
    REQUIRE(v.size() == 5);
    REQUIRE(v.id("a") == 2);
    REQUIRE(v.sos_id() == 0);
    REQUIRE(v.eol_id() == 1);
    REQUIRE(v.token(3) == "+");
}

TEST_CASE("duplicate tokens are rejected with the offending line") {
    REQUIRE_THROWS_WITH(Vocabulary::from_tokens({"<sos>", "<eol>", "a", "a"}),
                        Catch::Matchers::ContainsSubstring("line 4") &&
                            Catch::Matchers::ContainsSubstring("'a'"));
}

TEST_CASE("missing sentinels are rejected") {
    REQUIRE_THROWS_WITH(Vocabulary::from_tokens({"<sos>", "a"}),
                        Catch::Matchers::ContainsSubstring("<eol>"));
    REQUIRE_THROWS_WITH(Vocabulary::from_tokens({"<eol>", "a"}),
                        Catch::Matchers::ContainsSubstring("<sos>"));
}

TEST_CASE("parse reads one token per line") {
    std::istringstream in("<sos>\n<eol>\n\\sqrt\n^\n");
    auto v = Vocabulary::parse(in);
    REQUIRE(v.size() == 4);
    REQUIRE(v.id("\\sqrt") == 2);
}

TEST_CASE("encode and decode round-trip the enumeration example") {
    auto v = Vocabulary::from_tokens({"<sos>", "<eol>", "a", "+", "="});
    REQUIRE(hmer::encode_sequence({"a", "+", "a", "="}, v) ==
            std::vector<std::size_t>{2, 3, 2, 4});
    REQUIRE(hmer::encode_sequence({}, v).empty());
    REQUIRE(hmer::decode_sequence({2, 3, 2, 4}, v) ==
            std::vector<std::string>{"a", "+", "a", "="});
}

TEST_CASE("unknown tokens are quoted in the error") {
    auto v = Vocabulary::from_tokens({"<sos>", "<eol>", "a"});
    REQUIRE_THROWS_WITH(hmer::encode_sequence({"a", "\\foo"}, v),
                        Catch::Matchers::ContainsSubstring("'\\foo'"));
    REQUIRE_THROWS_AS(v.token(99), std::invalid_argument);
}

TEST_CASE("encode/decode is a bijection on random in-vocabulary sequences") {
    auto v = Vocabulary::from_tokens({"<sos>", "<eol>", "a", "b", "c", "+", "=", "\\sqrt", "{", "}"});
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<std::size_t> len(0, 12);
    std::uniform_int_distribution<std::size_t> pick(2, v.size() - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::string> tokens;
        const std::size_t n = len(rng);
        for (std::size_t i = 0; i < n; ++i) tokens.push_back(v.token(pick(rng)));
        REQUIRE(hmer::decode_sequence(hmer::encode_sequence(tokens, v), v) == tokens);
    }
}

TEST_CASE("token join/split helpers") {
    REQUIRE(hmer::join_tokens({"a", "+", "b"}) == "a + b");
    REQUIRE(hmer::split_tokens("  a  +\tb ") == std::vector<std::string>{"a", "+", "b"});
    REQUIRE(hmer::split_tokens("").empty());
}
