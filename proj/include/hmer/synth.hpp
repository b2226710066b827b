// Synthetic corpus generation: small fixed bitmap glyphs composed into
// expression images with seeded jitter, written as a PGM corpus directory.
// Structure tokens (^ { }) appear in targets without being drawn, matching
// how superscripts are written on paper.
#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmer/data_io.hpp"
#include "hmer/tensor.hpp"
#include "hmer/vocab.hpp"

namespace hmer {

struct SynthSpec {
    std::vector<std::string> glyphs;  // drawable subset; empty = full library
    std::size_t depth = 2;            // 1: flat atoms; 2: sqrt / superscript
    std::size_t count = 50;
    std::size_t jitter_shift = 2;     // max whole-expression pixel offset
    std::size_t jitter_scale = 1;     // max integer glyph magnification
    std::uint64_t seed = 1;
    std::string mode = "mix";         // "mix" | "repeat"

    void validate() const {
        if (count == 0) throw std::invalid_argument("synth: count must be >= 1");
        if (depth < 1) throw std::invalid_argument("synth: depth must be >= 1");
        if (jitter_scale < 1) throw std::invalid_argument("synth: scale must be >= 1");
        if (mode != "mix" && mode != "repeat")
            throw std::invalid_argument("synth: unknown mode '" + mode + "'");
    }
};

namespace detail {

// 8x8 glyph bitmaps, MSB = leftmost pixel.
inline const std::map<std::string, std::array<std::uint8_t, 8>>& glyph_library() {
    static const std::map<std::string, std::array<std::uint8_t, 8>> lib = {
        {"0", {0x3C, 0x42, 0x46, 0x4A, 0x52, 0x62, 0x42, 0x3C}},
        {"1", {0x08, 0x18, 0x28, 0x08, 0x08, 0x08, 0x08, 0x3E}},
        {"2", {0x3C, 0x42, 0x02, 0x0C, 0x30, 0x40, 0x40, 0x7E}},
        {"3", {0x3C, 0x42, 0x02, 0x1C, 0x02, 0x02, 0x42, 0x3C}},
        {"4", {0x04, 0x0C, 0x14, 0x24, 0x44, 0x7E, 0x04, 0x04}},
        {"5", {0x7E, 0x40, 0x40, 0x7C, 0x02, 0x02, 0x42, 0x3C}},
        {"6", {0x1C, 0x20, 0x40, 0x7C, 0x42, 0x42, 0x42, 0x3C}},
        {"7", {0x7E, 0x02, 0x04, 0x08, 0x10, 0x10, 0x10, 0x10}},
        {"8", {0x3C, 0x42, 0x42, 0x3C, 0x42, 0x42, 0x42, 0x3C}},
        {"9", {0x3C, 0x42, 0x42, 0x3E, 0x02, 0x02, 0x04, 0x38}},
        {"a", {0x00, 0x00, 0x3C, 0x02, 0x3E, 0x42, 0x46, 0x3A}},
        {"b", {0x40, 0x40, 0x5C, 0x62, 0x42, 0x42, 0x62, 0x5C}},
        {"c", {0x00, 0x00, 0x3C, 0x42, 0x40, 0x40, 0x42, 0x3C}},
        {"+", {0x00, 0x08, 0x08, 0x3E, 0x08, 0x08, 0x00, 0x00}},
        {"=", {0x00, 0x00, 0x3E, 0x00, 0x3E, 0x00, 0x00, 0x00}},
        {"\\sqrt", {0x01, 0x01, 0x02, 0x02, 0x04, 0x88, 0x50, 0x20}},
    };
    return lib;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

struct DrawOp {
    std::string glyph;
    bool raised = false;    // superscript position
    bool overline = false;  // radical bar above this glyph
};

}  // namespace detail

// Every token the generator can emit for this spec, in a fixed order.
inline Vocabulary synth_vocabulary(const SynthSpec& spec) {
    std::vector<std::string> tokens{kSosToken, kEolToken};
    std::vector<std::string> glyphs = spec.glyphs;
    if (glyphs.empty())
        for (const auto& [name, bits] : detail::glyph_library()) glyphs.push_back(name);
    for (const std::string& g : glyphs) {
        if (!detail::glyph_library().count(g))
            throw std::invalid_argument("synth: glyph '" + g + "' has no bitmap");
        tokens.push_back(g);
    }
    if (spec.depth >= 2) {
        tokens.push_back("^");
        tokens.push_back("{");
        tokens.push_back("}");
    }
    return Vocabulary::from_tokens(tokens);
}

// Deterministic per (spec, index): tokens plus the rendered image.
inline Sample make_synth_sample(const SynthSpec& spec, std::size_t index) {
    spec.validate();
    std::mt19937_64 rng(detail::splitmix64(detail::splitmix64(spec.seed) ^ (index + 1)));

    std::vector<std::string> glyphs = spec.glyphs;
    if (glyphs.empty())
        for (const auto& [name, bits] : detail::glyph_library()) glyphs.push_back(name);
    std::vector<std::string> plain, letters, digits;
    for (const std::string& g : glyphs) {
        if (g == "+" || g == "=" || g == "\\sqrt") continue;
        plain.push_back(g);
        if (g >= "a" && g <= "c") letters.push_back(g);
        if (g.size() == 1 && g[0] >= '0' && g[0] <= '9') digits.push_back(g);
    }
    if (plain.empty()) throw std::invalid_argument("synth: glyph set has no atom glyphs");
    const bool has_sqrt =
        std::find(glyphs.begin(), glyphs.end(), "\\sqrt") != glyphs.end() && spec.depth >= 2;
    const bool has_sup = !digits.empty() && spec.depth >= 2;

    const auto pick = [&rng](const std::vector<std::string>& from) {
        return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
    };

    std::vector<std::string> tokens;
    std::vector<detail::DrawOp> draw;
    const auto emit_atom = [&] {
        const std::string base = pick(plain);
        double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        if (has_sqrt && r < 0.2) {
            tokens.insert(tokens.end(), {"\\sqrt", "{", base, "}"});
            draw.push_back({"\\sqrt", false, false});
            draw.push_back({base, false, true});
        } else if (has_sup && r < 0.4) {
            const std::string exponent = pick(digits);
            tokens.insert(tokens.end(), {base, "^", "{", exponent, "}"});
            draw.push_back({base, false, false});
            draw.push_back({exponent, true, false});
        } else {
            tokens.push_back(base);
            draw.push_back({base, false, false});
        }
    };

    if (spec.mode == "repeat") {
        const std::string g = pick(letters.empty() ? plain : letters);
        const std::size_t reps = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
        for (std::size_t k = 0; k < reps; ++k) {
            if (k) {
                tokens.push_back("+");
                draw.push_back({"+", false, false});
            }
            tokens.push_back(g);
            draw.push_back({g, false, false});
        }
    } else {
        const bool two_terms = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 2.0 / 3.0;
        emit_atom();
        if (two_terms) {
            tokens.push_back("+");
            draw.push_back({"+", false, false});
            emit_atom();
        }
        tokens.push_back("=");
        draw.push_back({"=", false, false});
        emit_atom();
    }

    // layout
    const std::size_t s =
        std::uniform_int_distribution<std::size_t>(1, spec.jitter_scale)(rng);
    const std::size_t jx = std::uniform_int_distribution<std::size_t>(0, spec.jitter_shift)(rng);
    const std::size_t jy = std::uniform_int_distribution<std::size_t>(0, spec.jitter_shift)(rng);
    const std::size_t raise = 4 * s;
    const std::size_t top = 1 + jy + raise;  // top row of baseline glyphs
    const std::size_t content_h = top + 8 * s + 1;
    const std::size_t content_w = 1 + jx + draw.size() * 10 * s - 2 * s + 1;

    Tensor canvas(Shape{1, 1, content_h, content_w}, 0.0);
    const std::size_t W = content_w;
    const auto& lib = detail::glyph_library();
    std::size_t x = 1 + jx;
    for (const detail::DrawOp& op : draw) {
        const auto& bits = lib.at(op.glyph);
        const std::size_t y0 = op.raised ? top - raise : top;
        for (std::size_t ry = 0; ry < 8; ++ry)
            for (std::size_t rx = 0; rx < 8; ++rx) {
                if (!((bits[ry] >> (7 - rx)) & 1u)) continue;
                for (std::size_t dy = 0; dy < s; ++dy)
                    for (std::size_t dx = 0; dx < s; ++dx)
                        canvas[(y0 + ry * s + dy) * W + (x + rx * s + dx)] = 1.0;
            }
        if (op.overline) {
            for (std::size_t bx = 0; bx < 8 * s; ++bx) canvas[(top - 2) * W + (x + bx)] = 1.0;
        }
        x += 10 * s;
    }

    Sample sample;
    sample.image = pad_to_factor(canvas, 16);
    sample.id = [&] {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ex%05zu", index);
        return std::string(buf);
    }();
    // ids resolved against the spec vocabulary
    const Vocabulary v = synth_vocabulary(spec);
    sample.target = encode_sequence(tokens, v);
    return sample;
}

struct SynthSummary {
    std::size_t count = 0;
    std::size_t vocab_size = 0;
};

// Writes images/<id>.pgm + labels.txt + vocab.txt; refuses to clobber an
// existing corpus unless forced. Byte-identical for identical specs.
inline SynthSummary generate_synth(const SynthSpec& spec, const std::string& out_dir,
                                   bool force = false) {
    namespace fs = std::filesystem;
    spec.validate();
    const Vocabulary v = synth_vocabulary(spec);
    const fs::path root(out_dir);
    if (fs::exists(root / "labels.txt") && !force)
        throw std::runtime_error("output directory already holds a corpus: " +
                                 (root / "labels.txt").string() + " (use --force to overwrite)");
    fs::create_directories(root / "images");

    std::ofstream labels(root / "labels.txt");
    if (!labels) throw std::runtime_error("cannot write " + (root / "labels.txt").string());
    for (std::size_t i = 0; i < spec.count; ++i) {
        const Sample s = make_synth_sample(spec, i);
        export_gray_image(spatial_map(s.image), (root / "images" / (s.id + ".pgm")).string());
        labels << s.id << '\t' << join_tokens(decode_sequence(s.target, v)) << '\n';
    }
    labels.close();

    std::ofstream vocab(root / "vocab.txt");
    if (!vocab) throw std::runtime_error("cannot write " + (root / "vocab.txt").string());
    for (const std::string& t : v.tokens()) vocab << t << '\n';
    vocab.close();

    return {spec.count, v.size()};
}

// Parses a key=value spec file ('#' comments, blank lines allowed).
inline SynthSpec parse_synth_spec(std::istream& in, const std::string& name) {
    SynthSpec spec;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
            return s;
        };
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(name + ": line " + std::to_string(lineno) +
                                        ": expected key=value");
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string val = trim(trimmed.substr(eq + 1));
        try {
            if (key == "count") spec.count = std::stoul(val);
            else if (key == "depth") spec.depth = std::stoul(val);
            else if (key == "seed") spec.seed = std::stoull(val);
            else if (key == "jitter_shift") spec.jitter_shift = std::stoul(val);
            else if (key == "jitter_scale") spec.jitter_scale = std::stoul(val);
            else if (key == "mode") spec.mode = val;
            else if (key == "glyphs") {
                spec.glyphs.clear();
                std::string tok;
                std::istringstream gs(val);
                while (std::getline(gs, tok, ','))
                    if (!tok.empty()) spec.glyphs.push_back(tok);
            } else
                throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(name + ": line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    spec.validate();
    return spec;
}

}  // namespace hmer
