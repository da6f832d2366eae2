#ifndef DUALDET_DATA_H_
#define DUALDET_DATA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dualdet/rng.h"
#include "dualdet/scene.h"
#include "json.hpp"

namespace dualdet {

// Synthetic document page: line-patterned background with ruled tables.
struct LayoutConfig {
  int width = 64;
  int height = 64;
  int min_tables = 1;
  int max_tables = 3;
  double min_table_size = 0.15;  // fraction of each dimension
  double max_table_size = 0.6;
  double background_level = 0.15;
  double text_level = 0.35;
  double table_level = 0.7;
  double rule_level = 0.9;
  double noise_sigma = 0.03;
  int min_gap_px = 2;
  int max_placement_attempts = 100;

  void Validate() const;
  nlohmann::json ToJson() const;
  static LayoutConfig FromJson(const nlohmann::json& j);
};

// Tables are pixel-aligned and pairwise non-overlapping. Pixel values are
// quantized to multiples of 1/255 so the scene survives serialization
// unchanged.
Scene GenerateScene(Rng& rng, const LayoutConfig& cfg, const std::string& id);

// Scene i is drawn from its own stream derived from (seed, i).
Dataset GenerateDataset(int count, uint64_t seed, const LayoutConfig& cfg = {},
                        const std::string& id_prefix = "scene");

struct SplitSpec {
  double labeled_fraction = 0.1;
  uint64_t seed = 0;
};

// Unlabeled scenes carry no ground truth; their boxes live only in
// `hidden_gt` (parallel to `unlabeled`) for evaluation.
struct DatasetSplit {
  Dataset labeled;
  Dataset unlabeled;
  std::vector<Targets> hidden_gt;
};

// Seeded shuffle, then the first ceil(fraction * n) scenes are labeled.
DatasetSplit SplitDataset(const Dataset& ds, const SplitSpec& spec);

// JSON-lines: header object first, then one scene per line.
void SaveDataset(const std::string& path, const Dataset& ds,
                 const nlohmann::json& header_extra = nlohmann::json::object());
Dataset LoadDataset(const std::string& path, nlohmann::json* header = nullptr);

std::string Base64Encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> Base64Decode(const std::string& text);

struct CocoImage {
  int64_t id = 0;
  int width = 0;
  int height = 0;
  Targets gts;
};

struct CocoAnnotations {
  std::vector<CocoImage> images;  // file order
  int skipped_annotations = 0;    // other categories or degenerate boxes
};

// Pixel [x, y, w, h] to normalized center form and back.
BBox NormalizeCocoBox(const std::vector<double>& xywh, int width, int height);
std::vector<double> DenormalizeCocoBox(const BBox& b, int width, int height);

CocoAnnotations LoadCocoAnnotations(const std::string& path,
                                    int64_t table_category_id = 1);
CocoAnnotations ParseCocoAnnotations(const std::string& text,
                                     int64_t table_category_id = 1);
void SaveCocoAnnotations(const std::string& path,
                         const std::vector<CocoImage>& images,
                         int64_t table_category_id = 1);

struct ImagePrediction {
  int64_t image_id = 0;
  Prediction pred;
};

// COCO results format, normalized with the image sizes of `annotations`.
std::vector<ImagePrediction> LoadPredictions(const std::string& path,
                                             const CocoAnnotations& annotations,
                                             int64_t table_category_id = 1);
std::vector<ImagePrediction> ParsePredictions(const std::string& text,
                                              const CocoAnnotations& annotations,
                                              int64_t table_category_id = 1);
void SavePredictions(const std::string& path,
                     const std::vector<ImagePrediction>& preds,
                     const CocoAnnotations& annotations,
                     int64_t table_category_id = 1);

}  // namespace dualdet

#endif  // DUALDET_DATA_H_
