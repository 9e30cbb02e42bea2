#include "protonet/data.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "protonet/error.hpp"
#include "protonet/tensor_io.hpp"

namespace protonet {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SyntheticSpec::validate() const {
  if (n_classes == 0 || dim == 0) throw ContractError("synthetic spec: n_classes and dim must be positive");
  if (examples_per_class < 2) throw ContractError("synthetic spec: examples_per_class must be at least 2");
  if (!(noise_sigma > 0.0)) throw ContractError("synthetic spec: noise_sigma must be positive");
  if (!(mean_scale >= 0.0)) throw ContractError("synthetic spec: mean_scale must be non-negative");
}

namespace {

std::string class_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%03zu", k);
  return buf;
}

}  // namespace

GaussianDataset gen_gaussian_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  GaussianDataset out;
  out.noise_sigma = spec.noise_sigma;
  out.true_means.assign(spec.n_classes, std::vector<double>(spec.dim));
  for (auto& mu : out.true_means)
    for (auto& v : mu) v = rng.uniform(-spec.mean_scale, spec.mean_scale);

  out.data.input_shape = {spec.dim};
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    ClassRecord rec{class_name(k), {}};
    rec.examples.reserve(spec.examples_per_class);
    for (std::size_t i = 0; i < spec.examples_per_class; ++i) {
      std::vector<double> x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = out.true_means[k][j] + spec.noise_sigma * rng.normal();
      rec.examples.push_back(std::move(x));
    }
    out.data.classes.push_back(std::move(rec));
  }
  return out;
}

AccuracySummary bayes_accuracy_oracle(std::span<const std::vector<double>> true_means, double noise_sigma,
                                      std::span<const Episode> episodes) {
  if (!(noise_sigma > 0.0)) throw ContractError("bayes oracle: noise_sigma must be positive");
  std::vector<double> acc;
  acc.reserve(episodes.size());
  for (const auto& ep : episodes) {
    const auto n_q = ep.query.dim(0);
    std::size_t correct = 0;
    for (std::size_t q = 0; q < n_q; ++q) {
      const auto x = ep.query.row(q);
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < ep.n_way; ++k) {
        const auto& mu = true_means[ep.class_indices[k]];
        if (mu.size() != x.size()) throw DimensionError("bayes oracle: mean dimension mismatch");
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - mu[j]) * (x[j] - mu[j]);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      if (arg == ep.query_labels[q]) ++correct;
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(n_q));
  }
  return summarize(acc);
}

std::pair<LabeledDataset, LabeledDataset> split_classes(const LabeledDataset& data, std::size_t count) {
  if (count > data.num_classes()) throw InsufficientDataError("split_classes: not enough classes");
  LabeledDataset a{data.input_shape, {data.classes.begin(), data.classes.begin() + count}};
  LabeledDataset b{data.input_shape, {data.classes.begin() + count, data.classes.end()}};
  return {std::move(a), std::move(b)};
}

std::vector<double> rotate90(std::span<const double> image, std::size_t n) {
  if (image.size() != n * n) throw DimensionError("rotate90: image is not n x n");
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = image[j * n + (n - 1 - i)];
  return out;
}

LabeledDataset rotation_augment(const LabeledDataset& data, std::span<const int> rotations) {
  const auto& s = data.input_shape;
  const bool square = (s.size() == 2 && s[0] == s[1]) || (s.size() == 3 && s[0] == 1 && s[1] == s[2]);
  if (!square) throw ContractError("rotation_augment: expected square single-channel images, got " + shape_str(s));
  for (int r : rotations) {
    if (r != 90 && r != 180 && r != 270) {
      throw ContractError("rotation_augment: rotations must be 90, 180 or 270, got " + std::to_string(r));
    }
  }
  const std::size_t n = s.back();
  LabeledDataset out{s, {}};
  out.classes.reserve(data.num_classes() * (1 + rotations.size()));
  for (const auto& c : data.classes) {
    out.classes.push_back(c);
    for (int r : rotations) {
      ClassRecord rec{c.id + "/rot" + std::to_string(r), {}};
      rec.examples.reserve(c.examples.size());
      for (const auto& img : c.examples) {
        auto x = img;
        for (int t = 0; t < r / 90; ++t) x = rotate90(x, n);
        rec.examples.push_back(std::move(x));
      }
      out.classes.push_back(std::move(rec));
    }
  }
  return out;
}

namespace {

json read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open manifest " + path.string());
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw LoadError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw LoadError("manifest " + path.string() + ": top level must be an object");
  const auto version = doc.value("format_version", 0);
  if (version != 1) throw LoadError("manifest " + path.string() + ": unsupported format_version " + std::to_string(version));
  return doc;
}

Shape read_shape(const json& doc, const fs::path& path) {
  if (!doc.contains("input_shape") || !doc["input_shape"].is_array() || doc["input_shape"].empty()) {
    throw LoadError("manifest " + path.string() + ": missing input_shape");
  }
  Shape shape;
  for (const auto& d : doc["input_shape"]) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
      throw LoadError("manifest " + path.string() + ": input_shape entries must be positive integers");
    }
    shape.push_back(d.get<std::size_t>());
  }
  return shape;
}

// Splits a tensor file into examples of `shape`.
void append_examples(const Tensor& t, const Shape& shape, const std::string& where,
                     std::vector<std::vector<double>>& out) {
  const auto size = shape_numel(shape);
  std::size_t count = 0;
  if (t.shape() == shape) {
    count = 1;
  } else if (t.rank() == shape.size() + 1 && Shape(t.shape().begin() + 1, t.shape().end()) == shape) {
    count = t.dim(0);
  } else {
    throw LoadError(where + ": tensor shape " + shape_str(t.shape()) + " is inconsistent with input_shape " +
                    shape_str(shape));
  }
  const auto v = t.data();
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(v.begin() + i * size, v.begin() + (i + 1) * size);
}

std::string file_stem_for(const std::string& id, std::size_t index) {
  std::string stem;
  for (char c : id) stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return std::to_string(index) + "_" + stem;
}

}  // namespace

LabeledDataset load_dataset(const fs::path& manifest_path) {
  const auto doc = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  LabeledDataset data;
  data.input_shape = read_shape(doc, manifest_path);
  if (!doc.contains("classes") || !doc["classes"].is_array() || doc["classes"].empty()) {
    throw LoadError("manifest " + manifest_path.string() + ": class list is empty");
  }
  for (const auto& entry : doc["classes"]) {
    if (!entry.contains("id") || !entry["id"].is_string()) {
      throw LoadError("manifest " + manifest_path.string() + ": class entry without a string id");
    }
    ClassRecord rec{entry["id"].get<std::string>(), {}};
    if (!entry.contains("files") || !entry["files"].is_array() || entry["files"].empty()) {
      throw LoadError("manifest " + manifest_path.string() + ": class \"" + rec.id + "\" lists no files");
    }
    for (const auto& f : entry["files"]) {
      const auto file = base / f.get<std::string>();
      append_examples(load_tensor_file(file), data.input_shape, "class \"" + rec.id + "\" file " + file.string(),
                      rec.examples);
    }
    data.classes.push_back(std::move(rec));
  }
  try {
    data.validate();
  } catch (const ContractError& e) {
    throw LoadError("manifest " + manifest_path.string() + ": " + e.what());
  }
  return data;
}

namespace {

json class_entries(const LabeledDataset& data, const fs::path& dir) {
  json classes = json::array();
  for (std::size_t k = 0; k < data.num_classes(); ++k) {
    const auto& c = data.classes[k];
    if (c.examples.empty()) throw ContractError("write_dataset: class \"" + c.id + "\" has no examples");
    const auto name = file_stem_for(c.id, k) + ".pft";
    std::vector<double> values;
    values.reserve(c.examples.size() * data.example_size());
    for (const auto& e : c.examples) values.insert(values.end(), e.begin(), e.end());
    Shape shape{c.examples.size()};
    shape.insert(shape.end(), data.input_shape.begin(), data.input_shape.end());
    save_tensor_file(dir / name, Tensor(std::move(shape), std::move(values)));
    classes.push_back({{"id", c.id}, {"files", json::array({name})}});
  }
  return classes;
}

fs::path write_manifest(const json& doc, const fs::path& dir) {
  const auto path = dir / "manifest.json";
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << doc.dump(2) << '\n';
  return path;
}

}  // namespace

fs::path write_dataset(const LabeledDataset& data, const fs::path& dir) {
  data.validate();
  fs::create_directories(dir);
  json doc{{"format_version", 1}, {"input_shape", data.input_shape}, {"classes", class_entries(data, dir)}};
  return write_manifest(doc, dir);
}

Tensor AttributeDataset::attribute_matrix(std::span<const std::size_t> class_indices) const {
  const auto a = attribute_dim();
  std::vector<double> values;
  values.reserve(class_indices.size() * a);
  for (auto k : class_indices) values.insert(values.end(), attributes.at(k).begin(), attributes.at(k).end());
  return Tensor({class_indices.size(), a}, std::move(values));
}

AttributeDataset load_attribute_dataset(const fs::path& manifest_path) {
  AttributeDataset out;
  out.features = load_dataset(manifest_path);
  const auto doc = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::unordered_map<std::string, fs::path> files;
  if (doc.contains("attributes") && doc["attributes"].is_array()) {
    for (const auto& entry : doc["attributes"]) {
      if (!entry.contains("id") || !entry.contains("file")) {
        throw LoadError("manifest " + manifest_path.string() + ": attribute entry needs id and file");
      }
      files[entry["id"].get<std::string>()] = base / entry["file"].get<std::string>();
    }
  }
  for (const auto& c : out.features.classes) {
    const auto it = files.find(c.id);
    if (it == files.end()) {
      throw LoadError("manifest " + manifest_path.string() + ": class \"" + c.id + "\" has no attribute vector");
    }
    const auto t = load_tensor_file(it->second);
    if (t.rank() != 1 && !(t.rank() == 2 && t.dim(0) == 1)) {
      throw LoadError("attribute file " + it->second.string() + ": expected a vector, got " + shape_str(t.shape()));
    }
    if (!out.attributes.empty() && t.numel() != out.attributes.front().size()) {
      throw LoadError("attribute file " + it->second.string() + ": dimension " + std::to_string(t.numel()) +
                      " differs from " + std::to_string(out.attributes.front().size()));
    }
    out.attributes.emplace_back(t.data().begin(), t.data().end());
  }
  return out;
}

fs::path write_attribute_dataset(const AttributeDataset& data, const fs::path& dir) {
  data.features.validate();
  if (data.attributes.size() != data.features.num_classes()) {
    throw ContractError("write_attribute_dataset: one attribute vector per class required");
  }
  fs::create_directories(dir);
  json attrs = json::array();
  for (std::size_t k = 0; k < data.attributes.size(); ++k) {
    const auto& id = data.features.classes[k].id;
    const auto name = file_stem_for(id, k) + ".attr.pft";
    save_tensor_file(dir / name, Tensor({data.attributes[k].size()}, data.attributes[k]));
    attrs.push_back({{"id", id}, {"file", name}});
  }
  json doc{{"format_version", 1},
           {"input_shape", data.features.input_shape},
           {"classes", class_entries(data.features, dir)},
           {"attributes", attrs}};
  return write_manifest(doc, dir);
}

AttributeDataset gen_attribute_dataset(const AttributeSpec& spec) {
  if (spec.n_classes == 0 || spec.attribute_dim == 0 || spec.feature_dim == 0 || spec.examples_per_class == 0) {
    throw ContractError("attribute spec: counts must be positive");
  }
  if (!(spec.noise_sigma > 0.0)) throw ContractError("attribute spec: noise_sigma must be positive");
  Rng rng(spec.seed);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.attribute_dim));
  std::vector<double> map(spec.feature_dim * spec.attribute_dim);
  for (auto& v : map) v = map_scale * rng.normal();

  AttributeDataset out;
  out.features.input_shape = {spec.feature_dim};
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    std::vector<double> v(spec.attribute_dim);
    for (auto& x : v) x = rng.normal();
    std::vector<double> mu(spec.feature_dim, 0.0);
    for (std::size_t i = 0; i < spec.feature_dim; ++i) {
      for (std::size_t j = 0; j < spec.attribute_dim; ++j) mu[i] += map[i * spec.attribute_dim + j] * v[j];
      mu[i] += spec.mean_noise * rng.normal();
    }
    ClassRecord rec{class_name(k), {}};
    for (std::size_t e = 0; e < spec.examples_per_class; ++e) {
      std::vector<double> x(spec.feature_dim);
      for (std::size_t i = 0; i < spec.feature_dim; ++i) x[i] = mu[i] + spec.noise_sigma * rng.normal();
      rec.examples.push_back(std::move(x));
    }
    out.features.classes.push_back(std::move(rec));
    out.attributes.push_back(std::move(v));
  }
  return out;
}

std::pair<AttributeDataset, AttributeDataset> split_classes(const AttributeDataset& data, std::size_t count) {
  auto [fa, fb] = split_classes(data.features, count);
  AttributeDataset a{std::move(fa), {data.attributes.begin(), data.attributes.begin() + count}};
  AttributeDataset b{std::move(fb), {data.attributes.begin() + count, data.attributes.end()}};
  return {std::move(a), std::move(b)};
}

void standardize_attributes(AttributeDataset& data) {
  const auto n = data.attributes.size();
  const auto a = data.attribute_dim();
  if (n == 0) return;
  for (std::size_t j = 0; j < a; ++j) {
    double mean = 0.0;
    for (const auto& v : data.attributes) mean += v[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& v : data.attributes) var += (v[j] - mean) * (v[j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (auto& v : data.attributes) v[j] = sd > 0.0 ? (v[j] - mean) / sd : v[j] - mean;
  }
}

}  // namespace protonet
