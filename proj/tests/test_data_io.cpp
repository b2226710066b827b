#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hmer/data_io.hpp"
#include "hmer/synth.hpp"

namespace fs = std::filesystem;
using hmer::Shape;
using hmer::Tensor;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("hmer_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("load_image inverts polarity") {
    TempDir tmp;
    const auto p = tmp.path / "img.pgm";
    SECTION("all white maps to zeros") {
        write_bytes(p, std::string("P5\n2 2\n255\n") + std::string(4, char(255)));
        Tensor t = hmer::load_image(p.string());
        REQUIRE(t.shape() == Shape{1, 1, 2, 2});
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(t[i] == 0.0);
    }
    SECTION("all black maps to ones") {
        write_bytes(p, std::string("P5\n2 2\n255\n") + std::string(4, char(0)));
        Tensor t = hmer::load_image(p.string());
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(t[i] == 1.0);
    }
    SECTION("3x2 fixture with known bytes") {
        const unsigned char px[6] = {0, 51, 102, 153, 204, 255};
        write_bytes(p, std::string("P5\n# a comment\n3 2\n255\n") +
                           std::string(reinterpret_cast<const char*>(px), 6));
        Tensor t = hmer::load_image(p.string());
        REQUIRE(t.shape() == Shape{1, 1, 2, 3});
        const double expect[6] = {255 / 255.0, 204 / 255.0, 153 / 255.0,
                                  102 / 255.0, 51 / 255.0,  0.0};
        for (std::size_t i = 0; i < 6; ++i) REQUIRE(t[i] == expect[i]);
    }
}

TEST_CASE("load_image rejects malformed files with a byte offset") {
    TempDir tmp;
    const auto p = tmp.path / "bad.pgm";
    SECTION("wrong magic") {
        write_bytes(p, "P2\n2 2\n255\n....");
        REQUIRE_THROWS_WITH(hmer::load_image(p.string()),
                            Catch::Matchers::ContainsSubstring("P5"));
    }
    SECTION("truncated payload") {
        write_bytes(p, std::string("P5\n4 4\n255\n") + std::string(7, char(0)));
        REQUIRE_THROWS_WITH(hmer::load_image(p.string()),
                            Catch::Matchers::ContainsSubstring("truncated") &&
                                Catch::Matchers::ContainsSubstring("offset"));
    }
    SECTION("bad maxval") {
        write_bytes(p, std::string("P5\n2 2\n65535\n") + std::string(8, char(0)));
        REQUIRE_THROWS_WITH(hmer::load_image(p.string()),
                            Catch::Matchers::ContainsSubstring("maxval"));
    }
}

TEST_CASE("pad_to_factor geometry") {
    Tensor a(Shape{1, 1, 16, 16}, 0.5);
    REQUIRE(hmer::pad_to_factor(a, 16).shape() == Shape{1, 1, 16, 16});

    Tensor b(Shape{1, 1, 17, 15}, 1.0);
    Tensor padded = hmer::pad_to_factor(b, 16);
    REQUIRE(padded.shape() == Shape{1, 1, 32, 16});
    // original content unmoved at top-left, padding all zeros
    for (std::size_t h = 0; h < 32; ++h)
        for (std::size_t w = 0; w < 16; ++w)
            REQUIRE(padded[h * 16 + w] == ((h < 17 && w < 15) ? 1.0 : 0.0));
}

TEST_CASE("export_gray_image round trips through load_image") {
    TempDir tmp;
    const auto p = tmp.path / "map.pgm";
    SECTION("constant extremes") {
        hmer::export_gray_image(Tensor(Shape{2, 3}, 0.0), p.string());
        std::string all_white = read_bytes(p);
        REQUIRE(all_white.substr(all_white.size() - 6) == std::string(6, char(255)));
        hmer::export_gray_image(Tensor(Shape{2, 3}, 1.0), p.string());
        std::string all_black = read_bytes(p);
        REQUIRE(all_black.substr(all_black.size() - 6) == std::string(6, char(0)));
    }
    SECTION("quantization error is at most 1/255") {
        std::mt19937_64 rng(43);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        Tensor m(Shape{4, 5}, 0.0);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
        hmer::export_gray_image(m, p.string());
        Tensor back = hmer::load_image(p.string());
        for (std::size_t i = 0; i < m.size(); ++i)
            REQUIRE(std::abs(back[i] - m[i]) <= 1.0 / 255.0);
    }
    SECTION("values on the 1/255 grid are exact") {
        Tensor m(Shape{1, 3}, std::vector<double>{0.0, 17.0 / 255.0, 1.0});
        hmer::export_gray_image(m, p.string());
        Tensor back = hmer::load_image(p.string());
        for (std::size_t i = 0; i < 3; ++i) REQUIRE(back[i] == m[i]);
    }
    SECTION("out-of-range values rejected") {
        REQUIRE_THROWS_AS(hmer::export_gray_image(Tensor(Shape{1, 1}, 1.5), p.string()),
                          std::invalid_argument);
    }
}

TEST_CASE("load_corpus reads samples in label order and validates") {
    TempDir tmp;
    fs::create_directories(tmp.path / "images");
    const std::string pgm = std::string("P5\n8 8\n255\n") + std::string(64, char(0));
    write_bytes(tmp.path / "images" / "one.pgm", pgm);
    write_bytes(tmp.path / "images" / "two.pgm", pgm);
    auto v = hmer::Vocabulary::from_tokens({"<sos>", "<eol>", "a", "b", "+", "="});

    SECTION("order preserved, trailing <eol> and <eos> alias stripped") {
        write_bytes(tmp.path / "labels.txt", "one\ta + b <eol>\ntwo\tb = a <eos>\n");
        auto samples = hmer::load_corpus(tmp.str(), v);
        REQUIRE(samples.size() == 2);
        REQUIRE(samples[0].id == "one");
        REQUIRE(samples[0].target == std::vector<std::size_t>{2, 4, 3});
        REQUIRE(samples[1].target == std::vector<std::size_t>{3, 5, 2});
        // loader pads to the encoder factor
        REQUIRE(samples[0].image.shape() == Shape{1, 1, 16, 16});
    }
    SECTION("unknown token quoted with the id") {
        write_bytes(tmp.path / "labels.txt", "one\ta \\foo\n");
        REQUIRE_THROWS_WITH(hmer::load_corpus(tmp.str(), v),
                            Catch::Matchers::ContainsSubstring("'\\foo'") &&
                                Catch::Matchers::ContainsSubstring("one"));
    }
    SECTION("interior sentinel rejected") {
        write_bytes(tmp.path / "labels.txt", "one\ta <eol> b\n");
        REQUIRE_THROWS_AS(hmer::load_corpus(tmp.str(), v), std::runtime_error);
    }
    SECTION("duplicate id rejected") {
        write_bytes(tmp.path / "labels.txt", "one\ta\none\tb\n");
        REQUIRE_THROWS_WITH(hmer::load_corpus(tmp.str(), v),
                            Catch::Matchers::ContainsSubstring("duplicate id 'one'"));
    }
    SECTION("missing image rejected") {
        write_bytes(tmp.path / "labels.txt", "three\ta\n");
        REQUIRE_THROWS_WITH(hmer::load_corpus(tmp.str(), v),
                            Catch::Matchers::ContainsSubstring("three"));
    }
    SECTION("missing directory rejected") {
        REQUIRE_THROWS_WITH(hmer::load_corpus((tmp.path / "nope").string(), v),
                            Catch::Matchers::ContainsSubstring("nope"));
    }
}

TEST_CASE("synthetic corpus generation is deterministic") {
    TempDir tmp;
    hmer::SynthSpec spec;
    spec.count = 20;
    spec.seed = 7;
    const auto a = tmp.path / "a";
    const auto b = tmp.path / "b";
    auto sum1 = hmer::generate_synth(spec, a.string());
    auto sum2 = hmer::generate_synth(spec, b.string());
    REQUIRE(sum1.count == 20);
    REQUIRE(sum1.vocab_size == sum2.vocab_size);
    REQUIRE(read_bytes(a / "labels.txt") == read_bytes(b / "labels.txt"));
    REQUIRE(read_bytes(a / "vocab.txt") == read_bytes(b / "vocab.txt"));
    for (std::size_t i = 0; i < 20; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "ex%05zu.pgm", i);
        REQUIRE(read_bytes(a / "images" / name) == read_bytes(b / "images" / name));
    }
    // refuses to clobber without force
    REQUIRE_THROWS_WITH(hmer::generate_synth(spec, a.string()),
                        Catch::Matchers::ContainsSubstring("--force"));
    REQUIRE_NOTHROW(hmer::generate_synth(spec, a.string(), true));
}

TEST_CASE("generated corpus round-trips through load_corpus") {
    TempDir tmp;
    hmer::SynthSpec spec;
    spec.count = 15;
    spec.seed = 11;
    spec.jitter_scale = 2;
    hmer::generate_synth(spec, tmp.str());
    std::ifstream vf(tmp.path / "vocab.txt");
    auto v = hmer::Vocabulary::parse(vf);
    auto samples = hmer::load_corpus(tmp.str(), v);
    REQUIRE(samples.size() == 15);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const hmer::Sample mem = hmer::make_synth_sample(spec, i);
        REQUIRE(samples[i].id == mem.id);
        REQUIRE(samples[i].target == mem.target);
        REQUIRE(samples[i].image.shape() == mem.image.shape());
        REQUIRE(samples[i].image.values() == mem.image.values());
        // encoder precondition: padded to multiples of 16
        REQUIRE(samples[i].image.shape()[2] % 16 == 0);
        REQUIRE(samples[i].image.shape()[3] % 16 == 0);
    }
}

TEST_CASE("superscript targets carry the ^ token though no ^ glyph is drawn") {
    hmer::SynthSpec spec;
    spec.count = 200;
    spec.seed = 3;
    spec.depth = 2;
    const auto v = hmer::synth_vocabulary(spec);
    bool saw_sup = false, saw_sqrt = false;
    for (std::size_t i = 0; i < spec.count && !(saw_sup && saw_sqrt); ++i) {
        const auto tokens = hmer::decode_sequence(hmer::make_synth_sample(spec, i).target, v);
        for (std::size_t k = 0; k < tokens.size(); ++k) {
            if (tokens[k] == "^") {
                saw_sup = true;
                REQUIRE(k + 2 < tokens.size());
                REQUIRE(tokens[k + 1] == "{");
                REQUIRE(tokens[k + 3] == "}");
            }
            if (tokens[k] == "\\sqrt") saw_sqrt = true;
        }
    }
    REQUIRE(saw_sup);
    REQUIRE(saw_sqrt);
}

TEST_CASE("synth spec file parsing") {
    std::istringstream in(
        "# demo spec\n"
        "count = 5\n"
        "seed=42\n"
        "glyphs=a,b,+,=\n"
        "depth=1\n"
        "mode=mix\n");
    auto spec = hmer::parse_synth_spec(in, "demo");
    REQUIRE(spec.count == 5);
    REQUIRE(spec.seed == 42);
    REQUIRE(spec.glyphs == std::vector<std::string>{"a", "b", "+", "="});
    std::istringstream bad("wibble=1\n");
    REQUIRE_THROWS_WITH(hmer::parse_synth_spec(bad, "demo"),
                        Catch::Matchers::ContainsSubstring("wibble"));
}
