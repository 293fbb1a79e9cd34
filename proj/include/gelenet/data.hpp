#pragma once

#include "gelenet/image.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gelenet {

enum class ShapeKind { rectangle, ellipse, line };

std::string_view to_string(ShapeKind k);

/// An object in pixel-centre coordinates: pixel (y, x) sits at (y + 0.5, x + 0.5).
struct SyntheticObject {
    ShapeKind kind = ShapeKind::rectangle;
    double cx = 0.0, cy = 0.0;
    double half_length = 0.0; // along the orientation axis
    double half_width = 0.0;  // across it
    double orientation_deg = 0.0;
    bool low_contrast = false;
    std::array<double, 3> color{};

    bool contains(double x, double y) const;
};

struct Sample {
    std::string id;
    Image image; // 3 x H x W in [0,1]
    Image mask;  // 1 x H x W in {0,1}
    std::vector<SyntheticObject> objects; // empty for loaded data
};

struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t count = 8;
    std::size_t size = 64;
    std::size_t min_objects = 1;
    std::size_t max_objects = 2;
    bool rectangles = true;
    bool ellipses = true;
    bool lines = true;
    double min_extent = 0.08; // half-length of blobs as a fraction of the image size
    double max_extent = 0.2;
    double line_min_half_width = 1.0; // pixels
    double line_max_half_width = 2.0;
    double low_contrast_fraction = 0.3;
    double high_contrast = 0.4; // mean per-channel colour offset of high-contrast objects
    double low_contrast = 0.12;
    std::size_t background_waves = 3;
    double background_amplitude = 0.12;
    double noise_sigma = 0.03;

    void validate() const;
};

/// Renders one scene from an explicit object list onto a background drawn from `seed`.
Sample render_scene(const SynthConfig& cfg, std::uint64_t seed, std::vector<SyntheticObject> objects,
                    std::string id);
/// Sample i is drawn from an RNG seeded with cfg.seed + i.
Sample synthesize_one(const SynthConfig& cfg, std::size_t index);
std::vector<Sample> synthesize(const SynthConfig& cfg);

/// Sidecar records: id, object count, orientations in degrees (tab separated).
void write_sidecar(const std::filesystem::path& path, const std::vector<Sample>& samples);

/// Dihedral-group element: rotate counter-clockwise by 90·k degrees, then optionally flip horizontally.
enum class Augmentation { identity, rot90, rot180, rot270, hflip, hflip_rot90, hflip_rot180, hflip_rot270 };

inline constexpr Augmentation kAllAugmentations[] = {
    Augmentation::identity, Augmentation::rot90,       Augmentation::rot180,       Augmentation::rot270,
    Augmentation::hflip,    Augmentation::hflip_rot90, Augmentation::hflip_rot180, Augmentation::hflip_rot270,
};

std::string_view to_string(Augmentation a);
/// a ∘ b: apply b first, then a.
Augmentation compose(Augmentation a, Augmentation b);
Image augment(const Image& image, Augmentation op);
Sample augment(const Sample& sample, Augmentation op);

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One "image<TAB>mask" record per line; relative paths resolve against the manifest directory.
std::vector<Sample> load_manifest(const std::filesystem::path& path, std::size_t size);
/// Writes images/<id>.png, masks/<id>.png, manifest.tsv and (for synthetic data) objects.tsv.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

struct Batch {
    Tensor images; // (n,3,H,W)
    Tensor masks;  // (n,1,H,W)
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

} // namespace gelenet
