#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nightbird/geometry.hpp"
#include "nightbird/retinex.hpp"
#include "nightbird/rng.hpp"
#include "nightbird/tensor.hpp"

namespace nightbird {

struct LabeledImage {
    std::string image_id;
    Tensor image;  // (3,H,W) in [0,1]
    std::vector<BBox> boxes;
};

// --- Labels ("class cx cy w h", one box per line) --------------------------

std::vector<BBox> parse_labels(const std::string& text);
std::string serialize_labels(const std::vector<BBox>& boxes);  // 6 decimal places
std::vector<BBox> load_labels(const std::string& path);
void save_labels(const std::vector<BBox>& boxes, const std::string& path);

// --- Detections ("image_id class score cx cy w h") -------------------------

std::vector<Detection> parse_detections(const std::string& text);
std::string serialize_detections(const std::vector<Detection>& dets);
std::vector<Detection> load_detections(const std::string& path);
void save_detections(const std::vector<Detection>& dets, const std::string& path);

// --- Images (.ppm binary P6 and .png, chosen by extension) ------------------

/// target_h/target_w 0 keeps the stored resolution; otherwise the image is
/// bilinearly resized on load.
Tensor load_image(const std::string& path, size_t target_h = 0, size_t target_w = 0);
void save_image(const Tensor& image, const std::string& path);

Tensor resize_bilinear(const Tensor& image, size_t out_h, size_t out_w);

// --- Splits ----------------------------------------------------------------

struct SplitProportions {
    double train = 5000.0;
    double val = 1000.0;
    double test = 500.0;
};

struct DatasetSplit {
    std::vector<std::string> train, val, test;
    uint64_t seed = 0;
};

/// Seeded shuffle, then largest-remainder partition; every part gets at
/// least one id.
DatasetSplit split_dataset(const std::vector<std::string>& ids, const SplitProportions& prop,
                           uint64_t seed);
void save_split(const DatasetSplit& split, const std::string& path);
DatasetSplit load_split(const std::string& path);

// --- Synthetic scenes ------------------------------------------------------

struct SceneConfig {
    size_t height = 96;
    size_t width = 96;
    size_t min_birds = 1;
    size_t max_birds = 6;
    /// Bird extent as a fraction of the smaller image dimension.
    double min_size = 0.06;
    double max_size = 0.30;
    int class_count = 3;  // classes assigned by box area (small/medium/large)

    void validate() const;
};

/// Sky-gradient background with rotated dark elliptical blobs; ground-truth
/// boxes are tight to the drawn pixels of each blob.
LabeledImage gen_synthetic_scene(Rng& rng, const SceneConfig& cfg);

/// clamp(gain * image^gamma + gaussian(sigma), 0, 1).
Tensor darken(const Tensor& image, double gamma, double gain, double noise_sigma, Rng& rng);

struct PairSetConfig {
    SceneConfig scene;
    double gamma_min = 2.0;
    double gamma_max = 3.5;
    double gain_min = 0.4;
    double gain_max = 0.7;
    double noise_sigma = 0.02;
};

/// `count` scenes, each darkened into a low-light counterpart.
std::vector<ImagePair> gen_pair_set(size_t count, const PairSetConfig& cfg, uint64_t seed);

}  // namespace nightbird
