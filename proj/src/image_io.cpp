#include "fswap/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fswap/landmarks.hpp"

namespace fswap {

namespace {

unsigned char to_byte(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

void skip_ws_and_comments(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.c() != 3) throw ShapeError("write_ppm: expected 3 channels, got " + image.shape().str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_ppm: cannot open " + path);
    out << "P6\n" << image.w() << " " << image.h() << "\n255\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(image.h()) * image.w() * 3);
    std::size_t i = 0;
    for (int y = 0; y < image.h(); ++y)
        for (int x = 0; x < image.w(); ++x)
            for (int c = 0; c < 3; ++c) buf[i++] = to_byte(image.at(c, y, x));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_ppm: write failed for " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw SchemaError("read_ppm: bad magic in " + path);
    skip_ws_and_comments(in);
    int w = 0, h = 0, maxv = 0;
    in >> w;
    skip_ws_and_comments(in);
    in >> h;
    skip_ws_and_comments(in);
    in >> maxv;
    if (w < 1 || h < 1 || maxv != 255) throw SchemaError("read_ppm: unsupported header in " + path);
    in.get();  // single whitespace after header
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError("read_ppm: truncated " + path);
    Tensor img(3, h, w);
    std::size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = buf[i++] / 255.0;
    return img;
}

void write_pgm(const std::string& path, const MaskLabelMap& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm: cannot open " + path);
    out << "P5\n" << labels.w() << " " << labels.h() << "\n255\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(labels.h()) * labels.w());
    std::size_t i = 0;
    for (int y = 0; y < labels.h(); ++y)
        for (int x = 0; x < labels.w(); ++x) buf[i++] = static_cast<unsigned char>(labels.labels(y, x));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_pgm: write failed for " + path);
}

MaskLabelMap read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw SchemaError("read_pgm: bad magic in " + path);
    skip_ws_and_comments(in);
    int w = 0, h = 0, maxv = 0;
    in >> w;
    skip_ws_and_comments(in);
    in >> h;
    skip_ws_and_comments(in);
    in >> maxv;
    if (w < 1 || h < 1 || maxv != 255) throw SchemaError("read_pgm: unsupported header in " + path);
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError("read_pgm: truncated " + path);
    MaskLabelMap m;
    m.labels.resize(h, w);
    std::size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.labels(y, x) = buf[i++];
    return m;
}

Tensor compose_grid(const std::vector<std::vector<Tensor>>& rows, int sep) {
    if (rows.empty()) throw RangeError("compose_grid: no rows");
    int cell_h = rows[0][0].h(), cell_w = rows[0][0].w();
    std::size_t max_cols = 0;
    for (const auto& r : rows) {
        max_cols = std::max(max_cols, r.size());
        for (const auto& t : r)
            if (t.c() != 3 || t.h() != cell_h || t.w() != cell_w)
                throw ShapeError("compose_grid: all cells must share shape");
    }
    if (max_cols == 0) throw RangeError("compose_grid: empty rows");
    int H = static_cast<int>(rows.size()) * (cell_h + sep) - sep;
    int W = static_cast<int>(max_cols) * (cell_w + sep) - sep;
    Tensor canvas = Tensor::full(Shape{3, H, W}, 1.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            int oy = static_cast<int>(r) * (cell_h + sep);
            int ox = static_cast<int>(c) * (cell_w + sep);
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < cell_h; ++y)
                    for (int x = 0; x < cell_w; ++x) canvas.at(ch, oy + y, ox + x) = rows[r][c].at(ch, y, x);
        }
    return canvas;
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file_digest: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("write_text_file: cannot open " + path);
    out << content;
    if (!out) throw IoError("write_text_file: write failed for " + path);
}

Landmarks Landmarks::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("Landmarks::from_file: cannot open " + path);
    Landmarks lm;
    for (int i = 0; i < 68; ++i) {
        if (!(in >> lm.pts(i, 0) >> lm.pts(i, 1)))
            throw SchemaError("Landmarks::from_file: expected 68 'x y' lines in " + path);
    }
    double extra;
    if (in >> extra) throw SchemaError("Landmarks::from_file: trailing data in " + path);
    lm.validate();
    return lm;
}

void Landmarks::to_file(const std::string& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw IoError("Landmarks::to_file: cannot open " + path);
    char buf[64];
    for (int i = 0; i < 68; ++i) {
        std::snprintf(buf, sizeof(buf), "%.8f %.8f\n", pts(i, 0), pts(i, 1));
        out << buf;
    }
}

}  // namespace fswap
