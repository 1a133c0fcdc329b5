#include "nightbird/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nightbird/errors.hpp"

namespace nightbird {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw ValidationError("failed writing " + path);
}

std::string lower_ext(const std::string& path) {
    const size_t dot = path.rfind('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

void check_coord(double v, const char* name, size_t line_no, bool strict_positive) {
    const bool ok = strict_positive ? (v > 0.0 && v <= 1.0) : (v >= 0.0 && v <= 1.0);
    if (!ok)
        throw ValidationError("line " + std::to_string(line_no) + ": " + name + " = " +
                              std::to_string(v) + " outside " +
                              (strict_positive ? "(0,1]" : "[0,1]"));
}

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void validate_save_image(const Tensor& image) {
    if (image.rank() != 3 || image.channels() != 3)
        throw ValidationError("save_image: expected shape (3,H,W), got " +
                              shape_to_string(image.shape));
}

}  // namespace

// --- Labels -----------------------------------------------------------------

std::vector<BBox> parse_labels(const std::string& text) {
    std::vector<BBox> boxes;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        BBox b;
        long cls;
        if (!(ls >> cls >> b.cx >> b.cy >> b.w >> b.h))
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": expected 'class cx cy w h'");
        std::string extra;
        if (ls >> extra)
            throw ValidationError("line " + std::to_string(line_no) + ": trailing token '" +
                                  extra + "'");
        if (cls < 0)
            throw ValidationError("line " + std::to_string(line_no) + ": negative class id");
        check_coord(b.cx, "cx", line_no, false);
        check_coord(b.cy, "cy", line_no, false);
        check_coord(b.w, "w", line_no, true);
        check_coord(b.h, "h", line_no, true);
        b.class_id = static_cast<int>(cls);
        boxes.push_back(b);
    }
    return boxes;
}

std::string serialize_labels(const std::vector<BBox>& boxes) {
    std::string out;
    char buf[128];
    for (const auto& b : boxes) {
        validate_bbox(b, "serialize_labels");
        std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w,
                      b.h);
        out += buf;
    }
    return out;
}

std::vector<BBox> load_labels(const std::string& path) {
    try {
        return parse_labels(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void save_labels(const std::vector<BBox>& boxes, const std::string& path) {
    write_file(path, serialize_labels(boxes));
}

// --- Detections -------------------------------------------------------------

std::vector<Detection> parse_detections(const std::string& text) {
    std::vector<Detection> dets;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        Detection d;
        long cls;
        if (!(ls >> d.image_id >> cls >> d.score >> d.bbox.cx >> d.bbox.cy >> d.bbox.w >>
              d.bbox.h))
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": expected 'image_id class score cx cy w h'");
        std::string extra;
        if (ls >> extra)
            throw ValidationError("line " + std::to_string(line_no) + ": trailing token '" +
                                  extra + "'");
        if (cls < 0)
            throw ValidationError("line " + std::to_string(line_no) + ": negative class id");
        if (!(d.score >= 0.0 && d.score <= 1.0))
            throw ValidationError("line " + std::to_string(line_no) + ": score outside [0,1]");
        check_coord(d.bbox.cx, "cx", line_no, false);
        check_coord(d.bbox.cy, "cy", line_no, false);
        check_coord(d.bbox.w, "w", line_no, true);
        check_coord(d.bbox.h, "h", line_no, true);
        d.bbox.class_id = static_cast<int>(cls);
        dets.push_back(d);
    }
    return dets;
}

std::string serialize_detections(const std::vector<Detection>& dets) {
    std::string out;
    char buf[192];
    for (const auto& d : dets) {
        validate_bbox(d.bbox, "serialize_detections");
        if (d.image_id.empty() || d.image_id.find_first_of(" \t\n") != std::string::npos)
            throw ValidationError("serialize_detections: image_id must be a non-empty token");
        std::snprintf(buf, sizeof(buf), "%s %d %.6f %.6f %.6f %.6f %.6f\n", d.image_id.c_str(),
                      d.bbox.class_id, d.score, d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h);
        out += buf;
    }
    return out;
}

std::vector<Detection> load_detections(const std::string& path) {
    try {
        return parse_detections(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
    write_file(path, serialize_detections(dets));
}

// --- PPM (binary P6) --------------------------------------------------------

namespace {

void save_ppm(const Tensor& image, const std::string& path) {
    const size_t h = image.height(), w = image.width();
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + h * w * 3);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c)
                out.push_back(static_cast<char>(to_byte(image.at(c, y, x))));
    write_file(path, out);
}

// Next whitespace-separated token, '#' comments running to end of line.
std::string ppm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
        } else if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            while ((ch = in.get()) != EOF && !std::isspace(ch) && ch != '#')
                tok.push_back(static_cast<char>(ch));
            if (ch == '#') in.unget();
            return tok;
        }
    }
    return tok;
}

Tensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    auto fail = [&](const std::string& why) -> ValidationError {
        return ValidationError(path + ": " + why);
    };
    if (ppm_token(in) != "P6") throw fail("not a binary PPM (P6) file");
    size_t w = 0, h = 0;
    unsigned maxval = 0;
    try {
        w = std::stoul(ppm_token(in));
        h = std::stoul(ppm_token(in));
        maxval = static_cast<unsigned>(std::stoul(ppm_token(in)));
    } catch (const std::exception&) {
        throw fail("malformed PPM header");
    }
    if (w == 0 || h == 0) throw fail("zero image dimension");
    if (maxval != 255) throw fail("only maxval 255 is supported");

    std::vector<char> raw(h * w * 3);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) throw fail("truncated pixel data");

    Tensor t = Tensor::zeros({3, h, w});
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c)
                t.at(c, y, x) =
                    static_cast<double>(static_cast<uint8_t>(raw[(y * w + x) * 3 + c])) / 255.0;
    return t;
}

// --- PNG --------------------------------------------------------------------

struct PngErrorCtx {
    std::jmp_buf jump;
    std::string message;
};

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<PngErrorCtx*>(png_get_error_ptr(png));
    ctx->message = msg;
    std::longjmp(ctx->jump, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

void save_png(const Tensor& image, const std::string& path) {
    const size_t h = image.height(), w = image.width();
    std::vector<uint8_t> rows(h * w * 3);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c)
                rows[(y * w + x) * 3 + c] = to_byte(image.at(c, y, x));
    std::vector<png_bytep> row_ptrs(h);
    for (size_t y = 0; y < h; ++y) row_ptrs[y] = rows.data() + y * w * 3;

    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ValidationError("cannot open " + path + " for writing");

    PngErrorCtx ctx;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warn_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ValidationError("libpng initialization failed");
    }
    if (setjmp(ctx.jump)) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ValidationError("failed writing " + path + ": " + ctx.message);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Tensor load_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw ValidationError("cannot open " + path);

    PngErrorCtx ctx;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, png_error_fn, png_warn_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("libpng initialization failed");
    }

    std::vector<uint8_t> pixels;
    std::vector<png_bytep> row_ptrs;
    size_t w = 0, h = 0;
    if (setjmp(ctx.jump)) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("failed reading " + path + ": " + ctx.message);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    w = png_get_image_width(png, info);
    h = png_get_image_height(png, info);

    // Normalize every supported layout to 8-bit RGB.
    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError(path + ": unsupported PNG layout");
    }

    pixels.resize(h * w * 3);
    row_ptrs.resize(h);
    for (size_t y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * w * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    Tensor t = Tensor::zeros({3, h, w});
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c)
                t.at(c, y, x) = static_cast<double>(pixels[(y * w + x) * 3 + c]) / 255.0;
    return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, size_t out_h, size_t out_w) {
    if (image.rank() != 3) throw ValidationError("resize_bilinear: expected rank-3 tensor");
    if (out_h == 0 || out_w == 0)
        throw ValidationError("resize_bilinear: output dims must be positive");
    const size_t c_n = image.channels(), in_h = image.height(), in_w = image.width();
    if (in_h == out_h && in_w == out_w) return image;

    Tensor out = Tensor::zeros({c_n, out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (size_t y = 0; y < out_h; ++y) {
        // Center-aligned sample positions, clamped at the borders.
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(in_h - 1));
        const size_t y0 = static_cast<size_t>(fy);
        const size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                         static_cast<double>(in_w - 1));
            const size_t x0 = static_cast<size_t>(fx);
            const size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (size_t c = 0; c < c_n; ++c) {
                const double top =
                    image.at(c, y0, x0) * (1.0 - wx) + image.at(c, y0, x1) * wx;
                const double bot =
                    image.at(c, y1, x0) * (1.0 - wx) + image.at(c, y1, x1) * wx;
                out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor load_image(const std::string& path, size_t target_h, size_t target_w) {
    if ((target_h == 0) != (target_w == 0))
        throw ValidationError("load_image: specify both target dims or neither");
    const std::string ext = lower_ext(path);
    Tensor t;
    if (ext == ".ppm")
        t = load_ppm(path);
    else if (ext == ".png")
        t = load_png(path);
    else
        throw ValidationError("load_image: unsupported format '" + ext + "' (use .ppm or .png)");
    if (target_h != 0) t = resize_bilinear(t, target_h, target_w);
    return t;
}

void save_image(const Tensor& image, const std::string& path) {
    validate_save_image(image);
    const std::string ext = lower_ext(path);
    if (ext == ".ppm")
        save_ppm(image, path);
    else if (ext == ".png")
        save_png(image, path);
    else
        throw ValidationError("save_image: unsupported format '" + ext + "' (use .ppm or .png)");
}

// --- Splits -----------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<std::string>& ids, const SplitProportions& prop,
                           uint64_t seed) {
    if (!(prop.train > 0.0 && prop.val > 0.0 && prop.test > 0.0))
        throw ValidationError("split_dataset: proportions must be positive");
    const size_t n = ids.size();
    if (n < 3)
        throw ValidationError("split_dataset: need at least 3 ids for 3 parts, got " +
                              std::to_string(n));

    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    const double props[3] = {prop.train, prop.val, prop.test};
    const double total = props[0] + props[1] + props[2];
    size_t sizes[3];
    double fracs[3];
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * props[i] / total;
        sizes[i] = static_cast<size_t>(exact);
        fracs[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    // Largest remainder for the leftovers, ties to the earlier part.
    for (size_t left = n - assigned; left > 0; --left) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (fracs[i] > fracs[best]) best = i;
        ++sizes[best];
        fracs[best] = -1.0;
    }
    // Every part must be non-empty; take from the largest.
    for (int i = 0; i < 3; ++i) {
        while (sizes[i] == 0) {
            int big = 0;
            for (int j = 1; j < 3; ++j)
                if (sizes[j] > sizes[big]) big = j;
            --sizes[big];
            ++sizes[i];
        }
    }

    DatasetSplit split;
    split.seed = seed;
    auto it = shuffled.begin();
    split.train.assign(it, it + static_cast<ptrdiff_t>(sizes[0]));
    it += static_cast<ptrdiff_t>(sizes[0]);
    split.val.assign(it, it + static_cast<ptrdiff_t>(sizes[1]));
    it += static_cast<ptrdiff_t>(sizes[1]);
    split.test.assign(it, it + static_cast<ptrdiff_t>(sizes[2]));
    return split;
}

void save_split(const DatasetSplit& split, const std::string& path) {
    std::string out = "seed " + std::to_string(split.seed) + "\n";
    const std::pair<const char*, const std::vector<std::string>*> sections[] = {
        {"[train]", &split.train}, {"[val]", &split.val}, {"[test]", &split.test}};
    for (const auto& [header, list] : sections) {
        out += header;
        out += "\n";
        for (const auto& id : *list) {
            out += id;
            out += "\n";
        }
    }
    write_file(path, out);
}

DatasetSplit load_split(const std::string& path) {
    std::istringstream in(read_file(path));
    auto fail = [&](const std::string& why) -> ValidationError {
        return ValidationError("split file " + path + ": " + why);
    };

    DatasetSplit split;
    std::string line;
    if (!std::getline(in, line) || line.rfind("seed ", 0) != 0) throw fail("missing seed line");
    try {
        split.seed = std::stoull(line.substr(5));
    } catch (const std::exception&) {
        throw fail("unparseable seed");
    }

    std::vector<std::string>* current = nullptr;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "[train]")
            current = &split.train;
        else if (line == "[val]")
            current = &split.val;
        else if (line == "[test]")
            current = &split.test;
        else if (current)
            current->push_back(line);
        else
            throw fail("id before any section header: '" + line + "'");
    }
    return split;
}

// --- Synthetic scenes -------------------------------------------------------

void SceneConfig::validate() const {
    if (height < 8 || width < 8) throw ValidationError("SceneConfig: dims must be >= 8");
    if (min_birds > max_birds) throw ValidationError("SceneConfig: min_birds > max_birds");
    if (!(min_size > 0.0 && min_size <= max_size && max_size <= 1.0))
        throw ValidationError("SceneConfig: need 0 < min_size <= max_size <= 1");
    if (class_count < 1) throw ValidationError("SceneConfig: class_count must be >= 1");
}

LabeledImage gen_synthetic_scene(Rng& rng, const SceneConfig& cfg) {
    cfg.validate();
    const size_t h = cfg.height, w = cfg.width;
    LabeledImage scene;
    scene.image = Tensor::zeros({3, h, w});

    // Vertical sky gradient, slightly blue.
    const double base = 0.55 + 0.30 * rng.uniform01();
    const double tilt = 0.15 + 0.20 * rng.uniform01();
    for (size_t y = 0; y < h; ++y) {
        const double t = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
        const double v = std::clamp(base + (t - 0.5) * tilt, 0.0, 1.0);
        for (size_t x = 0; x < w; ++x) {
            scene.image.at(0, y, x) = v * 0.82;
            scene.image.at(1, y, x) = v * 0.90;
            scene.image.at(2, y, x) = v;
        }
    }

    const size_t birds = cfg.min_birds + rng.uniform_index(cfg.max_birds - cfg.min_birds + 1);
    const double s = static_cast<double>(std::min(h, w));
    for (size_t bird = 0; bird < birds; ++bird) {
        const double fw = rng.uniform(cfg.min_size, cfg.max_size);
        const double fh = fw * rng.uniform(0.5, 1.1);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double a = 0.5 * fw * s;
        const double b = std::max(0.5 * fh * s, 0.5);
        const double ct = std::cos(theta), st = std::sin(theta);
        // Axis-aligned half-extents of the rotated ellipse.
        const double hx = std::sqrt(a * a * ct * ct + b * b * st * st);
        const double hy = std::sqrt(a * a * st * st + b * b * ct * ct);
        const double cx =
            hx + rng.uniform01() * std::max(static_cast<double>(w - 1) - 2.0 * hx, 0.0);
        const double cy =
            hy + rng.uniform01() * std::max(static_cast<double>(h - 1) - 2.0 * hy, 0.0);
        const double dark = 0.02 + 0.13 * rng.uniform01();

        long min_x = static_cast<long>(w), max_x = -1, min_y = static_cast<long>(h), max_y = -1;
        const long y_lo = std::max(0L, static_cast<long>(std::floor(cy - hy)));
        const long y_hi = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(cy + hy)));
        const long x_lo = std::max(0L, static_cast<long>(std::floor(cx - hx)));
        const long x_hi = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(cx + hx)));
        for (long y = y_lo; y <= y_hi; ++y) {
            for (long x = x_lo; x <= x_hi; ++x) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                const double u = (dx * ct + dy * st) / a;
                const double v = (-dx * st + dy * ct) / b;
                if (u * u + v * v > 1.0) continue;
                scene.image.at(0, static_cast<size_t>(y), static_cast<size_t>(x)) = dark * 0.90;
                scene.image.at(1, static_cast<size_t>(y), static_cast<size_t>(x)) = dark * 0.95;
                scene.image.at(2, static_cast<size_t>(y), static_cast<size_t>(x)) = dark;
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
        }
        if (max_x < 0) {
            // Degenerate blob: mark its center pixel so the label has support.
            const size_t px = std::min(static_cast<size_t>(std::lround(cx)), w - 1);
            const size_t py = std::min(static_cast<size_t>(std::lround(cy)), h - 1);
            scene.image.at(0, py, px) = dark * 0.90;
            scene.image.at(1, py, px) = dark * 0.95;
            scene.image.at(2, py, px) = dark;
            min_x = max_x = static_cast<long>(px);
            min_y = max_y = static_cast<long>(py);
        }

        // Box tight to the drawn pixels, in pixel-edge coordinates.
        BBox box;
        box.w = static_cast<double>(max_x - min_x + 1) / static_cast<double>(w);
        box.h = static_cast<double>(max_y - min_y + 1) / static_cast<double>(h);
        box.cx = (static_cast<double>(min_x) + static_cast<double>(max_x + 1)) /
                 (2.0 * static_cast<double>(w));
        box.cy = (static_cast<double>(min_y) + static_cast<double>(max_y + 1)) /
                 (2.0 * static_cast<double>(h));
        const double size = std::sqrt(box.w * box.h);
        int cls = size < 0.10 ? 0 : size < 0.20 ? 1 : 2;
        box.class_id = std::min(cls, cfg.class_count - 1);
        scene.boxes.push_back(box);
    }
    return scene;
}

Tensor darken(const Tensor& image, double gamma, double gain, double noise_sigma, Rng& rng) {
    if (!(gamma > 0.0) || !(gain > 0.0))
        throw ValidationError("darken: gamma and gain must be positive");
    if (noise_sigma < 0.0) throw ValidationError("darken: noise sigma must be non-negative");
    Tensor out = image;
    for (double& v : out.data) {
        double d = gain * std::pow(v, gamma);
        if (noise_sigma > 0.0) d += rng.gaussian(0.0, noise_sigma);
        v = std::clamp(d, 0.0, 1.0);
    }
    return out;
}

std::vector<ImagePair> gen_pair_set(size_t count, const PairSetConfig& cfg, uint64_t seed) {
    if (!(cfg.gamma_min > 0.0 && cfg.gamma_min <= cfg.gamma_max))
        throw ValidationError("gen_pair_set: need 0 < gamma_min <= gamma_max");
    if (!(cfg.gain_min > 0.0 && cfg.gain_min <= cfg.gain_max))
        throw ValidationError("gen_pair_set: need 0 < gain_min <= gain_max");
    if (cfg.noise_sigma < 0.0) throw ValidationError("gen_pair_set: negative noise sigma");

    Rng rng(seed);
    std::vector<ImagePair> pairs;
    pairs.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        LabeledImage scene = gen_synthetic_scene(rng, cfg.scene);
        const double gamma = rng.uniform(cfg.gamma_min, cfg.gamma_max);
        const double gain = rng.uniform(cfg.gain_min, cfg.gain_max);
        Tensor low = darken(scene.image, gamma, gain, cfg.noise_sigma, rng);
        pairs.push_back({std::move(low), std::move(scene.image)});
    }
    return pairs;
}

}  // namespace nightbird
