#include "gelenet/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace gelenet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "gelenet_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::size_t count_ones(const Image& mask)
{
    std::size_t n = 0;
    for (double v : mask.values)
        n += v == 1.0;
    return n;
}

Image random_image(std::size_t c, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(c, n, n);
    for (double& v : img.values)
        v = u(rng);
    return img;
}

} // namespace

TEST(Synthesis, AxisAlignedRectangleArea)
{
    SynthConfig cfg;
    SyntheticObject rect;
    rect.kind = ShapeKind::rectangle;
    rect.cx = rect.cy = 16.0;
    rect.half_length = rect.half_width = 8.0;
    rect.color = {0.9, 0.9, 0.9};
    const Sample s = render_scene(cfg, 1, {rect}, "rect");
    EXPECT_EQ(count_ones(s.mask), 256u);
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x)
            EXPECT_EQ(s.mask.at(0, y, x), (y >= 8 && y < 24 && x >= 8 && x < 24) ? 1.0 : 0.0);
}

TEST(Synthesis, MaskIsUnionOfObjects)
{
    SynthConfig cfg;
    cfg.count = 6;
    cfg.max_objects = 3;
    for (const Sample& s : synthesize(cfg)) {
        ASSERT_FALSE(s.objects.empty());
        EXPECT_GT(count_ones(s.mask), 0u);
        EXPECT_EQ(s.image.channels, 3u);
        EXPECT_EQ(s.mask.height, s.image.height);
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x) {
                bool inside = false;
                for (const auto& o : s.objects)
                    inside = inside || o.contains(x + 0.5, y + 0.5);
                ASSERT_EQ(s.mask.at(0, y, x), inside ? 1.0 : 0.0) << s.id;
            }
        for (double v : s.image.values) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
    }
}

TEST(Synthesis, DeterministicPerSeed)
{
    SynthConfig cfg;
    cfg.count = 4;
    const auto a = synthesize(cfg), b = synthesize(cfg);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].image.values, b[i].image.values);
        EXPECT_EQ(a[i].mask.values, b[i].mask.values);
    }
    // Sample i depends only on seed + i.
    const Sample third = synthesize_one(cfg, 2);
    EXPECT_EQ(third.image.values, a[2].image.values);
    cfg.seed = 1;
    EXPECT_NE(synthesize(cfg)[0].image.values, a[0].image.values);
}

TEST(Synthesis, OrientationsAreUniform)
{
    SynthConfig cfg;
    cfg.count = 500;
    std::array<double, 10> bins{};
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.count; ++i)
        for (const auto& o : synthesize_one(cfg, i).objects) {
            ASSERT_GE(o.orientation_deg, 0.0);
            ASSERT_LT(o.orientation_deg, 180.0);
            bins[static_cast<std::size_t>(o.orientation_deg / 18.0)] += 1.0;
            total += 1.0;
        }
    double chi2 = 0.0;
    for (double b : bins)
        chi2 += (b - total / 10) * (b - total / 10) / (total / 10);
    // Upper 1% point of chi-squared with 9 degrees of freedom.
    EXPECT_LT(chi2, 21.666) << "objects " << total;
}

TEST(Synthesis, ConfigValidation)
{
    SynthConfig cfg;
    cfg.size = 48;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.min_objects = 3;
    cfg.max_objects = 2;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = SynthConfig{};
    cfg.rectangles = cfg.ellipses = cfg.lines = false;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Synthesis, Sidecar)
{
    SynthConfig cfg;
    cfg.count = 3;
    const auto samples = synthesize(cfg);
    const fs::path path = fresh_dir("sidecar") / "objects.tsv";
    write_sidecar(path, samples);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("id\t", 0), 0u);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.rfind(samples[rows].id + "\t" + std::to_string(samples[rows].objects.size()) + "\t", 0), 0u);
        ++rows;
    }
    EXPECT_EQ(rows, 3u);
}

TEST(Augment, Identities)
{
    const Image img = random_image(3, 8, 1);
    EXPECT_EQ(augment(augment(img, Augmentation::rot180), Augmentation::rot180).values, img.values);
    EXPECT_EQ(augment(img, Augmentation::identity).values, img.values);
    Image once = img;
    for (int i = 0; i < 4; ++i)
        once = augment(once, Augmentation::rot90);
    EXPECT_EQ(once.values, img.values);

    Image left(1, 4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            left.at(0, y, x) = 1.0;
    const Image right = augment(left, Augmentation::hflip);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            EXPECT_EQ(right.at(0, y, x), x >= 2 ? 1.0 : 0.0);

    // Counter-clockwise: the top-right corner moves to the top-left.
    Image corner(1, 4, 4);
    corner.at(0, 0, 3) = 1.0;
    EXPECT_EQ(augment(corner, Augmentation::rot90).at(0, 0, 0), 1.0);
}

TEST(Augment, GroupClosureMatchesCompose)
{
    const Image img = random_image(1, 6, 2);
    std::vector<std::vector<double>> images;
    for (Augmentation op : kAllAugmentations)
        images.push_back(augment(img, op).values);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i + 1; j < 8; ++j)
            ASSERT_NE(images[i], images[j]) << "ops " << i << " and " << j << " coincide";
    for (Augmentation a : kAllAugmentations)
        for (Augmentation b : kAllAugmentations) {
            const auto applied = augment(augment(img, b), a).values;
            const Augmentation c = compose(a, b);
            EXPECT_EQ(applied, augment(img, c).values) << to_string(a) << " after " << to_string(b);
            EXPECT_NE(std::find(images.begin(), images.end(), applied), images.end());
        }
}

TEST(Augment, SampleMaskCountInvariant)
{
    SynthConfig cfg;
    const Sample s = synthesize_one(cfg, 3);
    const std::size_t ones = count_ones(s.mask);
    for (Augmentation op : kAllAugmentations) {
        const Sample t = augment(s, op);
        EXPECT_EQ(count_ones(t.mask), ones) << to_string(op);
        for (double v : t.mask.values)
            ASSERT_TRUE(v == 0.0 || v == 1.0);
        // Image and mask move together: the pixel under a mask corner matches.
        EXPECT_EQ(augment(s.image, op).values, t.image.values);
    }
    EXPECT_THROW((void)augment(Image(1, 4, 6), Augmentation::rot90), std::invalid_argument);
}

TEST(Manifest, LoadsAndBinarizes)
{
    const fs::path dir = fresh_dir("manifest");
    fs::create_directories(dir / "img");
    Image rgb = random_image(3, 32, 3);
    Image mask(1, 32, 32);
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        mask.values[i] = (i % 3 == 0) ? 0.0 : (i % 3 == 1 ? 128.0 / 255.0 : 1.0);
    write_png(dir / "img" / "a.png", rgb);
    write_png(dir / "img" / "a_mask.png", mask);
    write_png(dir / "img" / "b.png", random_image(3, 40, 4));
    write_png(dir / "img" / "b_mask.png", Image(1, 20, 20, 1.0));
    std::ofstream(dir / "list.tsv") << "img/a.png\timg/a_mask.png\n"
                                    << "img/b.png\timg/b_mask.png\n";
    const auto samples = load_manifest(dir / "list.tsv", 32);
    ASSERT_EQ(samples.size(), 2u);
    for (const auto& s : samples) {
        EXPECT_EQ(s.image.height, 32u);
        EXPECT_EQ(s.mask.width, 32u);
        for (double v : s.mask.values)
            ASSERT_TRUE(v == 0.0 || v == 1.0);
    }
    for (std::size_t i = 0; i < 32 * 32; ++i)
        EXPECT_EQ(samples[0].mask.values[i], i % 3 == 0 ? 0.0 : 1.0);
    EXPECT_EQ(count_ones(samples[1].mask), 32u * 32u);
}

TEST(Manifest, Errors)
{
    const fs::path dir = fresh_dir("manifest_errors");
    std::ofstream(dir / "empty.tsv") << "\n";
    EXPECT_THROW((void)load_manifest(dir / "empty.tsv", 64), DataError);
    std::ofstream(dir / "missing.tsv") << "nope.png\tnope_mask.png\n";
    EXPECT_THROW((void)load_manifest(dir / "missing.tsv", 64), DataError);
    std::ofstream(dir / "one_column.tsv") << "nope.png\n";
    EXPECT_THROW((void)load_manifest(dir / "one_column.tsv", 64), DataError);
    EXPECT_THROW((void)load_manifest(dir / "absent.tsv", 64), DataError);
    std::ofstream(dir / "junk.png") << "not a png";
    std::ofstream(dir / "junk.tsv") << "junk.png\tjunk.png\n";
    EXPECT_ANY_THROW((void)load_manifest(dir / "junk.tsv", 64));
}

TEST(Manifest, RoundTripWithinQuantization)
{
    SynthConfig cfg;
    cfg.count = 3;
    const auto samples = synthesize(cfg);
    const fs::path dir = fresh_dir("roundtrip");
    const fs::path manifest = save_dataset(dir, samples);
    EXPECT_TRUE(fs::exists(dir / "objects.tsv"));
    const auto loaded = load_manifest(manifest, 64);
    ASSERT_EQ(loaded.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(loaded[i].mask.values, samples[i].mask.values);
        for (std::size_t k = 0; k < samples[i].image.values.size(); ++k)
            ASSERT_LE(std::abs(loaded[i].image.values[k] - samples[i].image.values[k]), 0.5 / 255.0 + 1e-12);
    }
}

TEST(Batching, StacksInOrder)
{
    SynthConfig cfg;
    cfg.count = 3;
    const auto samples = synthesize(cfg);
    const Batch b = make_batch(samples, {2, 0});
    EXPECT_EQ(b.images.shape(), (Shape{2, 3, 64, 64}));
    EXPECT_EQ(b.masks.shape(), (Shape{2, 1, 64, 64}));
    EXPECT_EQ(b.images.at(0, 1, 5, 7), samples[2].image.at(1, 5, 7));
    EXPECT_EQ(b.masks.at(1, 0, 9, 3), samples[0].mask.at(0, 9, 3));
    EXPECT_ANY_THROW((void)make_batch(samples, {}));
    EXPECT_ANY_THROW((void)make_batch(samples, {5}));
}
