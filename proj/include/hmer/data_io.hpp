// Image and label ingestion: binary PGM (P5) read/write with the ink-is-one
// polarity convention, pad-to-factor geometry, and corpus directory loading.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmer/tensor.hpp"
#include "hmer/vocab.hpp"

namespace hmer {

// A grayscale image paired with its target token ids (sentinels excluded).
struct Sample {
    Tensor image;  // [1,1,H,W], values in [0,1], ink = 1
    std::vector<std::size_t> target;
    std::string id;
};

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct PgmCursor {
    const std::string& bytes;
    const std::string& path;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path + ": " + what + " at byte " + std::to_string(pos));
    }

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::size_t read_number() {
        skip_space_and_comments();
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
            fail("malformed header (expected decimal number)");
        std::size_t v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            ++pos;
        }
        return v;
    }
};

}  // namespace detail

// Binary portable graymap, maxval 255. Pixel p maps to (255-p)/255 so dark
// ink becomes 1.0 on a 0.0 background.
inline Tensor load_image(const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    detail::PgmCursor cur{bytes, path};
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        cur.fail("not a binary PGM (want magic P5)");
    cur.pos = 2;
    const std::size_t w = cur.read_number();
    const std::size_t h = cur.read_number();
    const std::size_t maxval = cur.read_number();
    if (w == 0 || h == 0) cur.fail("zero image dimension");
    if (maxval != 255) cur.fail("unsupported maxval " + std::to_string(maxval) + " (want 255)");
    if (cur.pos >= bytes.size()) cur.fail("missing payload separator");
    ++cur.pos;  // single whitespace byte after maxval
    if (bytes.size() - cur.pos < w * h)
        throw std::runtime_error(path + ": truncated payload: want " + std::to_string(w * h) +
                                 " bytes at offset " + std::to_string(cur.pos) + ", have " +
                                 std::to_string(bytes.size() - cur.pos));
    std::vector<double> v(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        const auto p = static_cast<unsigned char>(bytes[cur.pos + i]);
        v[i] = static_cast<double>(255 - p) / 255.0;
    }
    return Tensor(Shape{1, 1, h, w}, std::move(v));
}

// Writes a [0,1]-valued 2-D map as 8-bit PGM; high values render dark.
inline void export_gray_image(const Tensor& map, const std::string& path) {
    if (map.rank() != 2)
        throw std::invalid_argument("export_gray_image: want rank-2 map, got " +
                                    shape_str(map.shape()));
    for (std::size_t i = 0; i < map.size(); ++i)
        if (!(map[i] >= 0.0 && map[i] <= 1.0))
            throw std::invalid_argument("export_gray_image: value " + std::to_string(map[i]) +
                                        " at index " + std::to_string(i) + " outside [0,1]");
    const std::size_t h = map.shape()[0], w = map.shape()[1];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::string payload(w * h, '\0');
    for (std::size_t i = 0; i < w * h; ++i)
        payload[i] = static_cast<char>(
            static_cast<unsigned char>(std::lround(255.0 * (1.0 - map[i]))));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

// The spatial plane of a single-channel [1,1,H,W] image as a [H,W] map.
inline Tensor spatial_map(const Tensor& image) {
    check_nchw(image, "spatial_map");
    if (image.shape()[0] != 1 || image.shape()[1] != 1)
        throw std::invalid_argument("spatial_map: want [1,1,H,W], got " + shape_str(image.shape()));
    return Tensor(Shape{image.shape()[2], image.shape()[3]}, image.values());
}

// Pads right/bottom with background zeros to the next multiple of factor;
// the original content stays at the top-left.
inline Tensor pad_to_factor(const Tensor& image, std::size_t factor) {
    check_nchw(image, "pad_to_factor");
    if (factor < 1) throw std::invalid_argument("pad_to_factor: factor must be >= 1");
    const std::size_t N = image.shape()[0], C = image.shape()[1];
    const std::size_t H = image.shape()[2], W = image.shape()[3];
    const std::size_t Hp = (H + factor - 1) / factor * factor;
    const std::size_t Wp = (W + factor - 1) / factor * factor;
    if (Hp == H && Wp == W) return image;
    std::vector<double> v(N * C * Hp * Wp, 0.0);
    for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
                v[(nc * Hp + h) * Wp + w] = image[(nc * H + h) * W + w];
    return Tensor(Shape{N, C, Hp, Wp}, std::move(v));
}

// Reads `labels.txt` (id<TAB>space-separated tokens) plus images/<id>.pgm.
// A trailing <eol> (or its <eos> alias) is stripped; sentinels anywhere else
// are rejected, as are unknown tokens, duplicate ids, and missing images.
inline std::vector<Sample> load_corpus(const std::string& dir, const Vocabulary& v,
                                       std::size_t pad_factor = 16) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root)) throw std::runtime_error("corpus directory does not exist: " + dir);
    const fs::path labels = root / "labels.txt";
    std::ifstream in(labels);
    if (!in) throw std::runtime_error("cannot open label file: " + labels.string());

    std::vector<Sample> samples;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(labels.string() + ": line " + std::to_string(lineno) +
                                     ": missing <TAB> separator");
        const std::string id = line.substr(0, tab);
        if (!seen_ids.insert(id).second)
            throw std::runtime_error(labels.string() + ": line " + std::to_string(lineno) +
                                     ": duplicate id '" + id + "'");
        std::vector<std::string> tokens = split_tokens(line.substr(tab + 1));
        // <eos> is accepted as an alias of the stop symbol in label files
        for (std::string& t : tokens)
            if (t == "<eos>") t = kEolToken;
        if (!tokens.empty() && tokens.back() == kEolToken) tokens.pop_back();
        for (const std::string& t : tokens)
            if (t == kEolToken || t == kSosToken)
                throw std::runtime_error(labels.string() + ": line " + std::to_string(lineno) +
                                         ": sentinel '" + t + "' inside target of id '" + id + "'");
        Sample s;
        s.id = id;
        try {
            s.target = encode_sequence(tokens, v);
        } catch (const std::exception& e) {
            throw std::runtime_error(labels.string() + ": id '" + id + "': " + e.what());
        }
        const fs::path img = root / "images" / (id + ".pgm");
        if (!fs::exists(img))
            throw std::runtime_error("missing image for id '" + id + "': " + img.string());
        s.image = pad_to_factor(load_image(img.string()), pad_factor);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace hmer
