#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dnlkit/bitkit.hpp"
#include "dnlkit/error.hpp"

// Bit-exact reading/writing of weight archives plus the model manifest that
// assigns every parameter to a layer and a kernel. Archives are immutable
// after load in spirit: attack paths mutate copies, never the files.
namespace dnlkit::tensorstore {

enum class Dtype { F32 };

// One named tensor: contiguous little-endian FP32 values in row-major order,
// stored as raw words so bit patterns (NaN payloads, -0.0) survive untouched.
struct TensorRecord {
  std::vector<std::int64_t> shape;
  std::vector<std::uint32_t> words;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= static_cast<std::uint64_t>(d);
    return n;
  }
  float value(std::uint64_t i) const { return std::bit_cast<float>(words[i]); }
  void set_value(std::uint64_t i, float v) { words[i] = std::bit_cast<std::uint32_t>(v); }
  std::uint32_t word(std::uint64_t i) const { return words[i]; }
  void set_word(std::uint64_t i, std::uint32_t w) { words[i] = w; }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

// Ordered collection of named tensors. Parsing retains the original header
// and data-section bytes so an unmodified archive re-serializes
// byte-identically; in-place word edits keep that property for every
// untouched byte.
class WeightArchive {
 public:
  void add_tensor(const std::string& name, TensorRecord rec);

  bool has(std::string_view name) const;
  const TensorRecord& tensor(std::string_view name) const;
  TensorRecord& tensor(std::string_view name);
  std::size_t tensor_count() const { return records_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  const std::vector<std::pair<std::string, std::string>>& metadata() const {
    return metadata_;
  }
  void set_metadata(std::vector<std::pair<std::string, std::string>> md) {
    metadata_ = std::move(md);
    drop_retained();
  }

  std::uint64_t total_values() const;

  friend bool operator==(const WeightArchive& a, const WeightArchive& b) {
    return a.names_ == b.names_ && a.records_ == b.records_ &&
           a.metadata_ == b.metadata_;
  }

 private:
  void drop_retained() {
    retained_header_.clear();
    retained_data_.clear();
    parsed_offsets_.clear();
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<TensorRecord> records_;
  std::vector<std::pair<std::string, std::string>> metadata_;

  // Present only on parsed archives; consumed by write_archive to reproduce
  // the exact input layout.
  std::vector<std::uint8_t> retained_header_;
  std::vector<std::uint8_t> retained_data_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> parsed_offsets_;

  friend WeightArchive read_archive(std::span<const std::uint8_t> bytes);
  friend std::vector<std::uint8_t> write_archive(const WeightArchive& a);
};

// Container format: u64 little-endian header length N, N bytes of UTF-8 JSON
// (tensor name -> {dtype, shape, data_offsets}, optional "__metadata__"
// string map), then the raw tensor data; offsets are relative to the end of
// the header. Malformed input raises a data error annotated with the byte
// offset of the problem.
WeightArchive read_archive(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_archive(const WeightArchive& a);

WeightArchive load_archive_file(const std::filesystem::path& path);
void save_archive_file(const WeightArchive& a, const std::filesystem::path& path);

enum class LayerKind { conv2d, linear, relu, maxpool2d, flatten };

std::string_view layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(std::string_view name);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::optional<std::string> weight_tensor;
  std::optional<std::string> bias_tensor;
  int stride = 1;   // conv2d, maxpool2d
  int padding = 0;  // conv2d
  int pool = 0;     // maxpool2d window; stride defaults to the window
  int kernel = 0;   // conv2d square kernel size
  int out = 0;      // out_channels / out_features; lets a manifest act as an
                    // architecture template before any archive exists
  std::optional<int> param_layer_index;  // consecutive over conv2d/linear
};

struct ModelManifest {
  std::vector<LayerSpec> layers;
  std::vector<std::int64_t> input_shape;  // [C,H,W] or [F]
  std::int64_t class_count = 0;

  int param_layer_count() const;
};

ModelManifest manifest_from_json(std::string_view text);
std::string manifest_to_json(const ModelManifest& m);
ModelManifest load_manifest_file(const std::filesystem::path& path);
void save_manifest_file(const ModelManifest& m, const std::filesystem::path& path);

// Walks the manifest against the archive: layer order, param-layer indexing,
// tensor existence and shape consistency from input_shape down to
// class_count. Throws a data error on the first violation.
void validate(const ModelManifest& m, const WeightArchive& a);

struct ParamCoord {
  std::string tensor;
  std::uint64_t flat_index = 0;

  friend bool operator==(const ParamCoord&, const ParamCoord&) = default;
  friend auto operator<=>(const ParamCoord&, const ParamCoord&) = default;
};

// Smallest unit for the one-flip-per-kernel constraint: a 2-D spatial slice
// per (out,in) channel pair for conv layers, an output row for linear.
struct KernelId {
  int param_layer_index = 0;
  std::uint64_t kernel_index = 0;

  friend bool operator==(const KernelId&, const KernelId&) = default;
  friend auto operator<=>(const KernelId&, const KernelId&) = default;
};

struct Candidate {
  ParamCoord coord;
  KernelId kernel;
  float value = 0.0f;
};

// Weight-tensor elements (never biases) of parameterized layers with
// param_layer_index <= L, in (layer, flat_index) order. L beyond the last
// parameterized layer means "all layers"; L < 1 is rejected.
std::vector<Candidate> candidate_params(const ModelManifest& m,
                                        const WeightArchive& a, int L);

}  // namespace dnlkit::tensorstore
