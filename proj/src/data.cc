#include "dualdet/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dualdet/error.h"

namespace dualdet {
namespace {

using nlohmann::json;

struct PixelRect {
  int x0, y0, w, h;

  bool OverlapsWithGap(const PixelRect& o, int gap) const {
    return x0 - gap < o.x0 + o.w && o.x0 - gap < x0 + w &&
           y0 - gap < o.y0 + o.h && o.y0 - gap < y0 + h;
  }
};

void DrawTextLines(Raster& r, Rng& rng, const LayoutConfig& cfg) {
  for (int y = 1; y < r.height; y += 4) {
    if (rng.Bernoulli(0.15)) continue;  // paragraph break
    int x = rng.UniformInt(0, 3);
    while (x < r.width) {
      const int len = rng.UniformInt(3, 10);
      for (int i = 0; i < len && x + i < r.width; ++i) r.at(x + i, y) = cfg.text_level;
      x += len + rng.UniformInt(1, 3);
    }
  }
}

void DrawTable(Raster& r, Rng& rng, const LayoutConfig& cfg, const PixelRect& t) {
  const int pitch = rng.UniformInt(4, 7);
  const int columns = rng.UniformInt(2, 4);
  for (int y = t.y0; y < t.y0 + t.h; ++y) {
    for (int x = t.x0; x < t.x0 + t.w; ++x) {
      const int lx = x - t.x0;
      const int ly = y - t.y0;
      const bool border = lx == 0 || ly == 0 || lx == t.w - 1 || ly == t.h - 1;
      const bool hrule = ly % pitch == 0;
      const bool vrule = (lx * columns) % t.w < columns;
      r.at(x, y) = (border || hrule || vrule) ? cfg.rule_level : cfg.table_level;
    }
  }
}

bool TryPlace(Rng& rng, const LayoutConfig& cfg, int count,
              std::vector<PixelRect>& out) {
  out.clear();
  for (int t = 0; t < count; ++t) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_placement_attempts && !placed; ++attempt) {
      PixelRect rect;
      rect.w = std::clamp(static_cast<int>(std::lround(
                              rng.Uniform(cfg.min_table_size, cfg.max_table_size) * cfg.width)),
                          1, cfg.width);
      rect.h = std::clamp(static_cast<int>(std::lround(
                              rng.Uniform(cfg.min_table_size, cfg.max_table_size) * cfg.height)),
                          1, cfg.height);
      rect.x0 = rng.UniformInt(0, cfg.width - rect.w);
      rect.y0 = rng.UniformInt(0, cfg.height - rect.h);
      const bool clash = std::any_of(out.begin(), out.end(), [&](const PixelRect& o) {
        return rect.OverlapsWithGap(o, cfg.min_gap_px);
      });
      if (!clash) {
        out.push_back(rect);
        placed = true;
      }
    }
    if (!placed) return false;
  }
  return true;
}

double Quantize(double v) {
  return static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
}

size_t LineOfOffset(const std::string& text, size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

json ParseWithContext(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream msg;
    msg << what << ": line " << LineOfOffset(text, e.byte) << ": " << e.what();
    throw Error(ErrorCode::kParse, msg.str());
  }
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

constexpr char kBase64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

void LayoutConfig::Validate() const {
  const bool ok = width > 0 && height > 0 && min_tables >= 1 &&
                  max_tables >= min_tables && min_table_size > 0.0 &&
                  max_table_size >= min_table_size && max_table_size <= 1.0 &&
                  noise_sigma >= 0.0 && max_placement_attempts > 0 &&
                  table_level - background_level > 3.0 * noise_sigma;
  if (!ok) throw Error(ErrorCode::kInvalidParameter, "invalid layout configuration");
}

json LayoutConfig::ToJson() const {
  return {{"width", width},
          {"height", height},
          {"min_tables", min_tables},
          {"max_tables", max_tables},
          {"min_table_size", min_table_size},
          {"max_table_size", max_table_size},
          {"background_level", background_level},
          {"text_level", text_level},
          {"table_level", table_level},
          {"rule_level", rule_level},
          {"noise_sigma", noise_sigma},
          {"min_gap_px", min_gap_px},
          {"max_placement_attempts", max_placement_attempts}};
}

LayoutConfig LayoutConfig::FromJson(const json& j) {
  LayoutConfig c;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.min_tables = j.value("min_tables", c.min_tables);
  c.max_tables = j.value("max_tables", c.max_tables);
  c.min_table_size = j.value("min_table_size", c.min_table_size);
  c.max_table_size = j.value("max_table_size", c.max_table_size);
  c.background_level = j.value("background_level", c.background_level);
  c.text_level = j.value("text_level", c.text_level);
  c.table_level = j.value("table_level", c.table_level);
  c.rule_level = j.value("rule_level", c.rule_level);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.min_gap_px = j.value("min_gap_px", c.min_gap_px);
  c.max_placement_attempts = j.value("max_placement_attempts", c.max_placement_attempts);
  return c;
}

Scene GenerateScene(Rng& rng, const LayoutConfig& cfg, const std::string& id) {
  cfg.Validate();
  Scene scene;
  scene.id = id;
  scene.raster = Raster(cfg.width, cfg.height, cfg.background_level);
  DrawTextLines(scene.raster, rng, cfg);

  std::vector<PixelRect> tables;
  int count = rng.UniformInt(cfg.min_tables, cfg.max_tables);
  while (!TryPlace(rng, cfg, count, tables)) {
    if (--count == 0) {
      throw Error(ErrorCode::kGeneration, "could not place any table in " + id);
    }
  }
  for (const PixelRect& t : tables) {
    DrawTable(scene.raster, rng, cfg, t);
    const double W = cfg.width;
    const double H = cfg.height;
    scene.gt_boxes.push_back(
        {BBox::FromCorners({t.x0 / W, t.y0 / H, (t.x0 + t.w) / W, (t.y0 + t.h) / H}), -1});
  }
  for (double& v : scene.raster.values) {
    v = Quantize(v + rng.Normal(0.0, cfg.noise_sigma));
  }
  return scene;
}

Dataset GenerateDataset(int count, uint64_t seed, const LayoutConfig& cfg,
                        const std::string& id_prefix) {
  Dataset ds;
  ds.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(DeriveSeed(seed, HashString("scene"), static_cast<uint64_t>(i)));
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%05d", id_prefix.c_str(), i);
    ds.push_back(GenerateScene(rng, cfg, id));
  }
  return ds;
}

DatasetSplit SplitDataset(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.labeled_fraction > 0.0 && spec.labeled_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "labeled fraction must lie in (0, 1]");
  }
  std::vector<size_t> order(ds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(DeriveSeed(spec.seed, HashString("split")));
  for (size_t i = order.size(); i > 1; --i) {  // Fisher-Yates
    const size_t j = static_cast<size_t>(rng.NextU64() % i);
    std::swap(order[i - 1], order[j]);
  }
  // The small slack keeps e.g. 0.3 * 200 from rounding up to 61.
  const size_t n_labeled = std::min(
      ds.size(), static_cast<size_t>(std::ceil(spec.labeled_fraction * ds.size() - 1e-9)));

  DatasetSplit split;
  for (size_t k = 0; k < order.size(); ++k) {
    const Scene& s = ds[order[k]];
    if (k < n_labeled) {
      split.labeled.push_back(s);
    } else {
      Scene stripped = s;
      split.hidden_gt.push_back(std::move(stripped.gt_boxes));
      stripped.gt_boxes.clear();
      split.unlabeled.push_back(std::move(stripped));
    }
  }
  return split;
}

std::string Base64Encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kBase64Chars[(v >> 18) & 63];
    out += kBase64Chars[(v >> 12) & 63];
    out += kBase64Chars[(v >> 6) & 63];
    out += kBase64Chars[v & 63];
  }
  if (i < bytes.size()) {
    uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kBase64Chars[(v >> 18) & 63];
    out += kBase64Chars[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kBase64Chars[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<uint8_t> Base64Decode(const std::string& text) {
  auto decode = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(ErrorCode::kParse, "base64 length not a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      if (text[i + k] == '=') {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = decode(text[i + k]);
        if (v[k] < 0 || pad > 0) throw Error(ErrorCode::kParse, "invalid base64 data");
      }
    }
    const uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>((w >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<uint8_t>(w & 0xff));
  }
  return out;
}

void SaveDataset(const std::string& path, const Dataset& ds,
                 const json& header_extra) {
  std::ostringstream out;
  json header = header_extra.is_object() ? header_extra : json::object();
  header["format"] = "dualdet-scenes";
  header["version"] = "1";
  header["count"] = ds.size();
  out << header.dump() << "\n";
  for (const Scene& s : ds) {
    std::vector<uint8_t> bytes(s.raster.values.size());
    for (size_t i = 0; i < bytes.size(); ++i) {
      bytes[i] = static_cast<uint8_t>(std::lround(std::clamp(s.raster.values[i], 0.0, 1.0) * 255.0));
    }
    json boxes = json::array();
    for (const auto& g : s.gt_boxes) boxes.push_back({g.box.cx, g.box.cy, g.box.w, g.box.h});
    json line = {{"id", s.id},
                 {"width", s.raster.width},
                 {"height", s.raster.height},
                 {"raster", Base64Encode(bytes)},
                 {"boxes", boxes}};
    out << line.dump() << "\n";
  }
  WriteFile(path, out.str());
}

Dataset LoadDataset(const std::string& path, json* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::string line;
  size_t line_no = 0;
  Dataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse, path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("format", "") != "dualdet-scenes" || j.value("version", "") != "1") {
        throw Error(ErrorCode::kParse, path + ": missing or unsupported dataset header");
      }
      if (header != nullptr) *header = j;
      have_header = true;
      continue;
    }
    try {
      Scene s;
      s.id = j.at("id").get<std::string>();
      s.raster = Raster(j.at("width").get<int>(), j.at("height").get<int>());
      const std::vector<uint8_t> bytes = Base64Decode(j.at("raster").get<std::string>());
      if (bytes.size() != s.raster.values.size()) {
        throw Error(ErrorCode::kParse, "raster size mismatch");
      }
      for (size_t i = 0; i < bytes.size(); ++i) s.raster.values[i] = bytes[i] / 255.0;
      for (const auto& b : j.at("boxes")) {
        s.gt_boxes.push_back({BBox{b.at(0).get<double>(), b.at(1).get<double>(),
                                   b.at(2).get<double>(), b.at(3).get<double>()},
                              -1});
      }
      ds.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::kParse, path + ": empty dataset file");
  return ds;
}

BBox NormalizeCocoBox(const std::vector<double>& xywh, int width, int height) {
  if (xywh.size() != 4) throw Error(ErrorCode::kValidation, "bbox must have 4 numbers");
  const double W = width;
  const double H = height;
  return {(xywh[0] + 0.5 * xywh[2]) / W, (xywh[1] + 0.5 * xywh[3]) / H,
          xywh[2] / W, xywh[3] / H};
}

std::vector<double> DenormalizeCocoBox(const BBox& b, int width, int height) {
  const double W = width;
  const double H = height;
  return {(b.cx - 0.5 * b.w) * W, (b.cy - 0.5 * b.h) * H, b.w * W, b.h * H};
}

CocoAnnotations ParseCocoAnnotations(const std::string& text,
                                     int64_t table_category_id) {
  const json j = ParseWithContext(text, "annotations");
  CocoAnnotations out;
  std::unordered_map<int64_t, size_t> index;
  try {
    for (const auto& im : j.at("images")) {
      CocoImage ci;
      ci.id = im.at("id").get<int64_t>();
      ci.width = im.at("width").get<int>();
      ci.height = im.at("height").get<int>();
      if (ci.width <= 0 || ci.height <= 0) {
        throw Error(ErrorCode::kValidation, "image " + std::to_string(ci.id) + " has no extent");
      }
      index[ci.id] = out.images.size();
      out.images.push_back(ci);
    }
    for (const auto& ann : j.at("annotations")) {
      const int64_t image_id = ann.at("image_id").get<int64_t>();
      const auto it = index.find(image_id);
      if (it == index.end()) {
        throw Error(ErrorCode::kUnknownImage,
                    "annotation refers to unknown image " + std::to_string(image_id));
      }
      const auto xywh = ann.at("bbox").get<std::vector<double>>();
      if (ann.value("category_id", table_category_id) != table_category_id ||
          xywh.size() != 4 || !(xywh[2] > 0.0) || !(xywh[3] > 0.0)) {
        ++out.skipped_annotations;
        continue;
      }
      CocoImage& ci = out.images[it->second];
      ci.gts.push_back({NormalizeCocoBox(xywh, ci.width, ci.height), -1});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("annotations: ") + e.what());
  }
  return out;
}

CocoAnnotations LoadCocoAnnotations(const std::string& path,
                                    int64_t table_category_id) {
  return ParseCocoAnnotations(ReadFile(path), table_category_id);
}

void SaveCocoAnnotations(const std::string& path,
                         const std::vector<CocoImage>& images,
                         int64_t table_category_id) {
  json j;
  j["images"] = json::array();
  j["annotations"] = json::array();
  j["categories"] = json::array({{{"id", table_category_id}, {"name", "table"}}});
  int64_t ann_id = 1;
  for (const CocoImage& im : images) {
    j["images"].push_back({{"id", im.id}, {"width", im.width}, {"height", im.height}});
    for (const auto& g : im.gts) {
      const auto xywh = DenormalizeCocoBox(g.box, im.width, im.height);
      j["annotations"].push_back({{"id", ann_id++},
                                  {"image_id", im.id},
                                  {"category_id", table_category_id},
                                  {"bbox", xywh},
                                  {"area", xywh[2] * xywh[3]},
                                  {"iscrowd", 0}});
    }
  }
  WriteFile(path, j.dump(2) + "\n");
}

std::vector<ImagePrediction> ParsePredictions(const std::string& text,
                                              const CocoAnnotations& annotations,
                                              int64_t table_category_id) {
  const json j = ParseWithContext(text, "results");
  if (!j.is_array()) throw Error(ErrorCode::kParse, "results must be a JSON array");
  std::unordered_map<int64_t, const CocoImage*> images;
  for (const auto& im : annotations.images) images[im.id] = &im;

  std::vector<ImagePrediction> out;
  try {
    for (const auto& r : j) {
      const int64_t image_id = r.at("image_id").get<int64_t>();
      const auto it = images.find(image_id);
      if (it == images.end()) {
        throw Error(ErrorCode::kUnknownImage,
                    "result refers to unknown image " + std::to_string(image_id));
      }
      if (r.value("category_id", table_category_id) != table_category_id) continue;
      const double score = r.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) {
        throw Error(ErrorCode::kValidation,
                    "score " + std::to_string(score) + " outside [0,1] for image " +
                        std::to_string(image_id));
      }
      const auto xywh = r.at("bbox").get<std::vector<double>>();
      const CocoImage& im = *it->second;
      out.push_back({image_id, {NormalizeCocoBox(xywh, im.width, im.height), score}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("results: ") + e.what());
  }
  return out;
}

std::vector<ImagePrediction> LoadPredictions(const std::string& path,
                                             const CocoAnnotations& annotations,
                                             int64_t table_category_id) {
  return ParsePredictions(ReadFile(path), annotations, table_category_id);
}

void SavePredictions(const std::string& path,
                     const std::vector<ImagePrediction>& preds,
                     const CocoAnnotations& annotations,
                     int64_t table_category_id) {
  std::unordered_map<int64_t, const CocoImage*> images;
  for (const auto& im : annotations.images) images[im.id] = &im;
  json j = json::array();
  for (const auto& p : preds) {
    const auto it = images.find(p.image_id);
    if (it == images.end()) {
      throw Error(ErrorCode::kUnknownImage, "unknown image " + std::to_string(p.image_id));
    }
    j.push_back({{"image_id", p.image_id},
                 {"category_id", table_category_id},
                 {"bbox", DenormalizeCocoBox(p.pred.box, it->second->width, it->second->height)},
                 {"score", p.pred.score}});
  }
  WriteFile(path, j.dump(2) + "\n");
}

}  // namespace dualdet
