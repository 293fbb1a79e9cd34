#include "gelenet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <cstdio>

namespace gelenet {

std::string_view to_string(ShapeKind k)
{
    switch (k) {
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::line: return "line";
    }
    return "?";
}

bool SyntheticObject::contains(double x, double y) const
{
    const double t = orientation_deg * std::numbers::pi / 180.0;
    const double dx = x - cx, dy = y - cy;
    const double u = dx * std::cos(t) + dy * std::sin(t);
    const double v = -dx * std::sin(t) + dy * std::cos(t);
    if (kind == ShapeKind::ellipse)
        return (u * u) / (half_length * half_length) + (v * v) / (half_width * half_width) <= 1.0;
    return std::abs(u) <= half_length && std::abs(v) <= half_width;
}

void SynthConfig::validate() const
{
    if (size == 0 || size % 32 != 0)
        throw std::invalid_argument("synthetic image size must be a positive multiple of 32, got " +
                                    std::to_string(size));
    if (count == 0)
        throw std::invalid_argument("synthetic dataset needs at least one sample");
    if (min_objects == 0 || min_objects > max_objects)
        throw std::invalid_argument("synthetic object count range must satisfy 1 <= min <= max");
    if (!rectangles && !ellipses && !lines)
        throw std::invalid_argument("synthetic shape set is empty");
    if (!(min_extent > 0.0 && min_extent <= max_extent && max_extent <= 0.35))
        throw std::invalid_argument("synthetic object extent range must satisfy 0 < min <= max <= 0.35");
    if (!(line_min_half_width >= 0.5 && line_min_half_width <= line_max_half_width))
        throw std::invalid_argument("synthetic line width range must satisfy 0.5 <= min <= max");
    if (low_contrast_fraction < 0.0 || low_contrast_fraction > 1.0)
        throw std::invalid_argument("low-contrast fraction must lie in [0,1]");
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Wave {
    double fx, fy, phase, amp;
};

SyntheticObject draw_object(const SynthConfig& cfg, Rng& rng)
{
    std::vector<ShapeKind> kinds;
    if (cfg.rectangles) kinds.push_back(ShapeKind::rectangle);
    if (cfg.ellipses) kinds.push_back(ShapeKind::ellipse);
    if (cfg.lines) kinds.push_back(ShapeKind::line);
    const double n = static_cast<double>(cfg.size);

    SyntheticObject o;
    o.kind = kinds[std::uniform_int_distribution<std::size_t>(0, kinds.size() - 1)(rng)];
    o.orientation_deg = uniform(rng, 0.0, 180.0);
    if (o.kind == ShapeKind::line) {
        o.half_length = uniform(rng, 0.18, 0.32) * n;
        o.half_width = uniform(rng, cfg.line_min_half_width, cfg.line_max_half_width);
    } else {
        o.half_length = uniform(rng, cfg.min_extent, cfg.max_extent) * n;
        o.half_width = o.half_length * uniform(rng, 0.35, 0.9);
    }
    const double margin = 0.15 * n;
    o.cx = uniform(rng, margin, n - margin);
    o.cy = uniform(rng, margin, n - margin);
    o.low_contrast = uniform(rng, 0.0, 1.0) < cfg.low_contrast_fraction;
    return o;
}

} // namespace

Sample render_scene(const SynthConfig& cfg, std::uint64_t seed, std::vector<SyntheticObject> objects, std::string id)
{
    cfg.validate();
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n = cfg.size;

    std::array<double, 3> base{};
    for (double& b : base)
        b = uniform(rng, 0.3, 0.7);
    std::vector<Wave> waves(cfg.background_waves * 3);
    for (Wave& w : waves)
        w = Wave{uniform(rng, 0.5, 3.0), uniform(rng, 0.5, 3.0), uniform(rng, 0.0, 2.0 * std::numbers::pi),
                 cfg.background_amplitude * uniform(rng, 0.3, 1.0) / std::max<double>(1.0, cfg.background_waves)};

    // Object colours offset from the background base, all channels in the same direction.
    for (SyntheticObject& o : objects) {
        const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        const double mag = o.low_contrast ? cfg.low_contrast : cfg.high_contrast;
        for (std::size_t c = 0; c < 3; ++c)
            o.color[c] = std::clamp(base[c] + sign * mag * uniform(rng, 0.75, 1.25), 0.0, 1.0);
    }

    Sample s;
    s.id = std::move(id);
    s.image = Image(3, n, n);
    s.mask = Image(1, n, n);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    const double two_pi_over_n = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            const SyntheticObject* top = nullptr;
            for (const SyntheticObject& o : objects)
                if (o.contains(px, py))
                    top = &o;
            if (top != nullptr)
                s.mask.at(0, y, x) = 1.0;
            for (std::size_t c = 0; c < 3; ++c) {
                double v = base[c];
                for (std::size_t k = 0; k < cfg.background_waves; ++k) {
                    const Wave& w = waves[c * cfg.background_waves + k];
                    v += w.amp * std::sin(two_pi_over_n * (w.fx * px + w.fy * py) + w.phase);
                }
                if (top != nullptr)
                    v += top->color[c] - base[c];
                v += noise(rng);
                s.image.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    s.objects = std::move(objects);
    return s;
}

Sample synthesize_one(const SynthConfig& cfg, std::size_t index)
{
    cfg.validate();
    const std::uint64_t seed = cfg.seed + index;
    Rng rng(seed);
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", index);
    // Redraw until the union of interiors is non-empty; with the size ranges above this is a formality.
    for (;;) {
        const std::size_t count =
            std::uniform_int_distribution<std::size_t>(cfg.min_objects, cfg.max_objects)(rng);
        std::vector<SyntheticObject> objects;
        for (std::size_t i = 0; i < count; ++i)
            objects.push_back(draw_object(cfg, rng));
        Sample s = render_scene(cfg, rng(), std::move(objects), id);
        if (std::any_of(s.mask.values.begin(), s.mask.values.end(), [](double v) { return v > 0.0; }))
            return s;
    }
}

std::vector<Sample> synthesize(const SynthConfig& cfg)
{
    cfg.validate();
    std::vector<Sample> out;
    out.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i)
        out.push_back(synthesize_one(cfg, i));
    return out;
}

void write_sidecar(const std::filesystem::path& path, const std::vector<Sample>& samples)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write '" + path.string() + "'");
    os << "id\tobjects\torientations_deg\tshapes\n";
    os.precision(10);
    for (const Sample& s : samples) {
        os << s.id << '\t' << s.objects.size() << '\t';
        for (std::size_t i = 0; i < s.objects.size(); ++i)
            os << (i ? "," : "") << s.objects[i].orientation_deg;
        os << '\t';
        for (std::size_t i = 0; i < s.objects.size(); ++i)
            os << (i ? "," : "") << to_string(s.objects[i].kind);
        os << '\n';
    }
}

std::string_view to_string(Augmentation a)
{
    switch (a) {
    case Augmentation::identity: return "identity";
    case Augmentation::rot90: return "rot90";
    case Augmentation::rot180: return "rot180";
    case Augmentation::rot270: return "rot270";
    case Augmentation::hflip: return "hflip";
    case Augmentation::hflip_rot90: return "hflip_rot90";
    case Augmentation::hflip_rot180: return "hflip_rot180";
    case Augmentation::hflip_rot270: return "hflip_rot270";
    }
    return "?";
}

namespace {

int rotation_of(Augmentation a) { return static_cast<int>(a) % 4; }
bool flips(Augmentation a) { return static_cast<int>(a) >= 4; }
Augmentation make_aug(bool flip, int k) { return static_cast<Augmentation>((flip ? 4 : 0) + ((k % 4) + 4) % 4); }

} // namespace

Augmentation compose(Augmentation a, Augmentation b)
{
    // H^fa R^ka H^fb R^kb = H^(fa^fb) R^(±ka + kb), since R H = H R^-1.
    const int ka = flips(b) ? -rotation_of(a) : rotation_of(a);
    return make_aug(flips(a) != flips(b), ka + rotation_of(b));
}

Image augment(const Image& image, Augmentation op)
{
    const int k = rotation_of(op);
    if (k != 0 && image.height != image.width)
        throw ShapeError("rotation augmentation needs a square image, got " + std::to_string(image.height) + "x" +
                         std::to_string(image.width));
    const std::size_t h = image.height, w = image.width;
    Image out(image.channels, h, w);
    for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                // Output pixel (y, x) after the optional flip came from (y, x') before it.
                const std::size_t xr = flips(op) ? w - 1 - x : x;
                std::size_t sy = y, sx = xr;
                // Counter-clockwise rotation by 90k: out(y, x) = in(x, n-1-y) for k = 1.
                for (int i = 0; i < k; ++i) {
                    const std::size_t ty = sx, tx = h - 1 - sy;
                    sy = ty;
                    sx = tx;
                }
                out.at(c, y, x) = image.at(c, sy, sx);
            }
    return out;
}

Sample augment(const Sample& sample, Augmentation op)
{
    Sample s;
    s.id = sample.id;
    s.image = augment(sample.image, op);
    s.mask = augment(sample.mask, op);
    return s;
}

std::vector<Sample> load_manifest(const std::filesystem::path& path, std::size_t size)
{
    if (size == 0)
        throw DataError("load_manifest: target size must be positive");
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot open manifest '" + path.string() + "'");
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path q(p);
        return q.is_absolute() ? q : base / q;
    };

    std::vector<Sample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'image<TAB>mask'");
        const std::filesystem::path image_path = resolve(line.substr(0, tab));
        const std::filesystem::path mask_path = resolve(line.substr(tab + 1));
        for (const auto& p : {image_path, mask_path})
            if (!std::filesystem::exists(p))
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing file '" + p.string() + "'");

        Sample s;
        s.id = image_path.stem().string();
        s.image = resize_bilinear(to_rgb(read_png(image_path)), size, size);
        s.mask = resize_nearest(to_gray(read_png(mask_path)), size, size);
        for (double& v : s.mask.values)
            v = v >= 0.5 ? 1.0 : 0.0;
        out.push_back(std::move(s));
    }
    if (out.empty())
        throw DataError("manifest '" + path.string() + "' lists no samples");
    return out;
}

std::filesystem::path save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    const fs::path manifest = dir / "manifest.tsv";
    std::ofstream os(manifest);
    if (!os)
        throw DataError("cannot write '" + manifest.string() + "'");
    bool synthetic = false;
    for (const Sample& s : samples) {
        const fs::path image = fs::path("images") / (s.id + ".png");
        const fs::path mask = fs::path("masks") / (s.id + ".png");
        write_png(dir / image, s.image);
        write_png(dir / mask, s.mask);
        os << image.generic_string() << '\t' << mask.generic_string() << '\n';
        synthetic = synthetic || !s.objects.empty();
    }
    if (synthetic)
        write_sidecar(dir / "objects.tsv", samples);
    return manifest;
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices)
{
    std::vector<const Image*> images, masks;
    for (std::size_t i : indices) {
        if (i >= samples.size())
            throw std::out_of_range("make_batch: sample index " + std::to_string(i) + " out of range");
        images.push_back(&samples[i].image);
        masks.push_back(&samples[i].mask);
    }
    return Batch{stack_images(images), stack_images(masks)};
}

} // namespace gelenet
