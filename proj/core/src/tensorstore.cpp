#include "dnlkit/tensorstore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dnlkit::tensorstore {

using ordered_json = nlohmann::ordered_json;

namespace {

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

[[noreturn]] void bad_archive(std::uint64_t offset, const std::string& what) {
  throw_data("archive: " + what + " (byte offset " + std::to_string(offset) + ")");
}

}  // namespace

void WeightArchive::add_tensor(const std::string& name, TensorRecord rec) {
  if (index_.count(name)) throw_data("archive: duplicate tensor name '" + name + "'");
  if (rec.numel() != rec.words.size()) {
    throw_data("archive: tensor '" + name + "' word count " +
               std::to_string(rec.words.size()) + " does not match shape");
  }
  index_.emplace(name, records_.size());
  names_.push_back(name);
  records_.push_back(std::move(rec));
  drop_retained();
}

bool WeightArchive::has(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const TensorRecord& WeightArchive::tensor(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw_data("archive: no tensor named '" + std::string(name) + "'");
  return records_[it->second];
}

TensorRecord& WeightArchive::tensor(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw_data("archive: no tensor named '" + std::string(name) + "'");
  return records_[it->second];
}

std::uint64_t WeightArchive::total_values() const {
  std::uint64_t n = 0;
  for (const auto& r : records_) n += r.numel();
  return n;
}

WeightArchive read_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) bad_archive(0, "stream shorter than the 8-byte header length");
  const std::uint64_t header_len = read_u64_le(bytes.data());
  if (header_len > bytes.size() - 8) {
    bad_archive(0, "declared header length " + std::to_string(header_len) +
                       " exceeds stream size " + std::to_string(bytes.size()));
  }

  const std::uint8_t* header_begin = bytes.data() + 8;
  ordered_json header;
  try {
    header = ordered_json::parse(header_begin, header_begin + header_len);
  } catch (const std::exception& e) {
    bad_archive(8, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) bad_archive(8, "header is not a JSON object");

  const std::uint64_t data_begin = 8 + header_len;
  const std::uint64_t data_len = bytes.size() - data_begin;

  WeightArchive a;
  a.retained_header_.assign(bytes.begin(), bytes.begin() + data_begin);
  a.retained_data_.assign(bytes.begin() + data_begin, bytes.end());

  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;  // for overlap check
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") {
      if (!info.is_object()) bad_archive(8, "__metadata__ is not an object");
      for (const auto& [k, v] : info.items()) {
        if (!v.is_string()) bad_archive(8, "__metadata__ values must be strings");
        a.metadata_.emplace_back(k, v.get<std::string>());
      }
      continue;
    }
    if (!info.is_object()) bad_archive(8, "tensor '" + name + "' entry is not an object");

    const std::string dtype = info.value("dtype", std::string{});
    if (dtype != "F32") {
      bad_archive(8, "tensor '" + name + "' has unsupported dtype '" + dtype + "'");
    }
    if (!info.contains("shape") || !info["shape"].is_array()) {
      bad_archive(8, "tensor '" + name + "' is missing a shape array");
    }
    TensorRecord rec;
    for (const auto& d : info["shape"]) {
      if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0) {
        bad_archive(8, "tensor '" + name + "' has a non-positive shape entry");
      }
      rec.shape.push_back(d.get<std::int64_t>());
    }
    if (!info.contains("data_offsets") || !info["data_offsets"].is_array() ||
        info["data_offsets"].size() != 2) {
      bad_archive(8, "tensor '" + name + "' is missing data_offsets [begin,end]");
    }
    const std::uint64_t begin = info["data_offsets"][0].get<std::uint64_t>();
    const std::uint64_t end = info["data_offsets"][1].get<std::uint64_t>();
    if (end < begin || end > data_len) {
      bad_archive(data_begin + std::min(begin, data_len),
                  "tensor '" + name + "' data span [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") exceeds data section of " +
                      std::to_string(data_len) + " bytes");
    }
    const std::uint64_t expect = rec.numel() * 4;
    if (end - begin != expect) {
      bad_archive(data_begin + begin,
                  "tensor '" + name + "' span is " + std::to_string(end - begin) +
                      " bytes, shape requires " + std::to_string(expect));
    }

    rec.words.resize(rec.numel());
    std::memcpy(rec.words.data(), a.retained_data_.data() + begin, end - begin);

    a.index_.emplace(name, a.records_.size());
    a.names_.push_back(name);
    a.records_.push_back(std::move(rec));
    a.parsed_offsets_.emplace_back(begin, end);
    spans.emplace_back(begin, end);
  }

  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      bad_archive(data_begin + spans[i].first, "overlapping tensor data spans");
    }
  }
  return a;
}

std::vector<std::uint8_t> write_archive(const WeightArchive& a) {
  std::vector<std::uint8_t> out;

  if (!a.retained_header_.empty()) {
    // Parsed archive: reproduce the original layout, overlaying current words.
    out = a.retained_header_;
    std::vector<std::uint8_t> data = a.retained_data_;
    for (std::size_t i = 0; i < a.records_.size(); ++i) {
      const auto& rec = a.records_[i];
      const auto [begin, end] = a.parsed_offsets_[i];
      std::memcpy(data.data() + begin, rec.words.data(), end - begin);
    }
    out.insert(out.end(), data.begin(), data.end());
    return out;
  }

  ordered_json header = ordered_json::object();
  if (!a.metadata_.empty()) {
    ordered_json md = ordered_json::object();
    for (const auto& [k, v] : a.metadata_) md[k] = v;
    header["__metadata__"] = std::move(md);
  }
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < a.records_.size(); ++i) {
    const auto& rec = a.records_[i];
    const std::uint64_t len = rec.numel() * 4;
    ordered_json entry = ordered_json::object();
    entry["dtype"] = "F32";
    entry["shape"] = rec.shape;
    entry["data_offsets"] = {offset, offset + len};
    header[a.names_[i]] = std::move(entry);
    offset += len;
  }

  const std::string header_str = header.dump();
  write_u64_le(out, header_str.size());
  out.insert(out.end(), header_str.begin(), header_str.end());
  for (const auto& rec : a.records_) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(rec.words.data());
    out.insert(out.end(), p, p + rec.numel() * 4);
  }
  return out;
}

WeightArchive load_archive_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_data("cannot open archive file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return read_archive(bytes);
}

void save_archive_file(const WeightArchive& a, const std::filesystem::path& path) {
  const auto bytes = write_archive(a);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_data("cannot write archive file '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw_data("short write to '" + path.string() + "'");
}

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerKind layer_kind_from_name(std::string_view name) {
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "linear") return LayerKind::linear;
  if (name == "relu") return LayerKind::relu;
  if (name == "maxpool2d") return LayerKind::maxpool2d;
  if (name == "flatten") return LayerKind::flatten;
  throw_data("manifest: unknown layer kind '" + std::string(name) + "'");
}

int ModelManifest::param_layer_count() const {
  int n = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::linear) ++n;
  }
  return n;
}

ModelManifest manifest_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw_data(std::string("manifest: not valid JSON: ") + e.what());
  }

  ModelManifest m;
  if (!j.contains("input_shape") || !j["input_shape"].is_array()) {
    throw_data("manifest: missing input_shape");
  }
  for (const auto& d : j["input_shape"]) m.input_shape.push_back(d.get<std::int64_t>());
  if (!j.contains("class_count")) throw_data("manifest: missing class_count");
  m.class_count = j["class_count"].get<std::int64_t>();
  if (m.class_count < 1) throw_data("manifest: class_count must be positive");

  if (!j.contains("layers") || !j["layers"].is_array()) {
    throw_data("manifest: missing layers array");
  }
  for (const auto& lj : j["layers"]) {
    LayerSpec l;
    l.name = lj.value("name", std::string{});
    if (l.name.empty()) throw_data("manifest: layer without a name");
    l.kind = layer_kind_from_name(lj.value("kind", std::string{}));
    if (lj.contains("weight_tensor")) l.weight_tensor = lj["weight_tensor"].get<std::string>();
    if (lj.contains("bias_tensor")) l.bias_tensor = lj["bias_tensor"].get<std::string>();
    if (lj.contains("hyperparams")) {
      const auto& h = lj["hyperparams"];
      l.stride = h.value("stride", l.kind == LayerKind::maxpool2d ? 0 : 1);
      l.padding = h.value("padding", 0);
      l.pool = h.value("size", 0);
      l.kernel = h.value("kernel", 0);
      l.out = h.value("out", 0);
      if (l.kind == LayerKind::maxpool2d && l.stride == 0) l.stride = l.pool;
    } else if (l.kind == LayerKind::maxpool2d) {
      throw_data("manifest: maxpool2d layer '" + l.name + "' needs hyperparams.size");
    }
    if (lj.contains("param_layer_index")) {
      l.param_layer_index = lj["param_layer_index"].get<int>();
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

std::string manifest_to_json(const ModelManifest& m) {
  ordered_json j = ordered_json::object();
  j["input_shape"] = m.input_shape;
  j["class_count"] = m.class_count;
  ordered_json layers = ordered_json::array();
  for (const auto& l : m.layers) {
    ordered_json lj = ordered_json::object();
    lj["name"] = l.name;
    lj["kind"] = std::string(layer_kind_name(l.kind));
    if (l.weight_tensor) lj["weight_tensor"] = *l.weight_tensor;
    if (l.bias_tensor) lj["bias_tensor"] = *l.bias_tensor;
    if (l.kind == LayerKind::conv2d) {
      ordered_json h = {{"stride", l.stride}, {"padding", l.padding}};
      if (l.kernel > 0) h["kernel"] = l.kernel;
      if (l.out > 0) h["out"] = l.out;
      lj["hyperparams"] = std::move(h);
    } else if (l.kind == LayerKind::linear) {
      if (l.out > 0) lj["hyperparams"] = {{"out", l.out}};
    } else if (l.kind == LayerKind::maxpool2d) {
      lj["hyperparams"] = {{"size", l.pool}, {"stride", l.stride}};
    }
    if (l.param_layer_index) lj["param_layer_index"] = *l.param_layer_index;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

ModelManifest load_manifest_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open manifest file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

void save_manifest_file(const ModelManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write manifest file '" + path.string() + "'");
  f << manifest_to_json(m);
}

namespace {

struct Shape3 {
  std::int64_t c = 0, h = 0, w = 0;
};

}  // namespace

void validate(const ModelManifest& m, const WeightArchive& a) {
  if (m.layers.empty()) throw_data("manifest: no layers");
  if (m.input_shape.empty()) throw_data("manifest: empty input_shape");

  // Activation shape as either [C,H,W] or flattened [F].
  bool spatial = m.input_shape.size() == 3;
  if (!spatial && m.input_shape.size() != 1) {
    throw_data("manifest: input_shape must be [C,H,W] or [F]");
  }
  Shape3 s;
  std::int64_t flat = 0;
  if (spatial) {
    s = {m.input_shape[0], m.input_shape[1], m.input_shape[2]};
  } else {
    flat = m.input_shape[0];
  }

  int next_param_index = 1;
  for (const auto& l : m.layers) {
    const bool parameterized =
        l.kind == LayerKind::conv2d || l.kind == LayerKind::linear;
    if (parameterized) {
      if (!l.param_layer_index || *l.param_layer_index != next_param_index) {
        throw_data("manifest: layer '" + l.name + "' must carry param_layer_index " +
                   std::to_string(next_param_index));
      }
      ++next_param_index;
      if (!l.weight_tensor) {
        throw_data("manifest: layer '" + l.name + "' has no weight_tensor");
      }
    } else {
      if (l.param_layer_index) {
        throw_data("manifest: non-parameterized layer '" + l.name +
                   "' must not carry param_layer_index");
      }
      if (l.weight_tensor || l.bias_tensor) {
        throw_data("manifest: non-parameterized layer '" + l.name +
                   "' must not reference tensors");
      }
    }

    switch (l.kind) {
      case LayerKind::conv2d: {
        if (!spatial) throw_data("manifest: conv2d '" + l.name + "' after flatten");
        const auto& w = a.tensor(*l.weight_tensor);
        if (w.shape.size() != 4) {
          throw_data("manifest: conv2d weight '" + *l.weight_tensor + "' must be 4-D");
        }
        if (w.shape[1] != s.c) {
          throw_data("manifest: conv2d '" + l.name + "' expects " +
                     std::to_string(w.shape[1]) + " input channels, activation has " +
                     std::to_string(s.c));
        }
        if (l.kernel > 0 && (w.shape[2] != l.kernel || w.shape[3] != l.kernel)) {
          throw_data("manifest: conv2d '" + l.name + "' kernel hyperparam disagrees with weight shape");
        }
        if (l.out > 0 && w.shape[0] != l.out) {
          throw_data("manifest: conv2d '" + l.name + "' out hyperparam disagrees with weight shape");
        }
        if (l.stride < 1) throw_data("manifest: conv2d '" + l.name + "' stride < 1");
        if (l.padding < 0) throw_data("manifest: conv2d '" + l.name + "' padding < 0");
        const std::int64_t oh = (s.h + 2 * l.padding - w.shape[2]) / l.stride + 1;
        const std::int64_t ow = (s.w + 2 * l.padding - w.shape[3]) / l.stride + 1;
        if (oh < 1 || ow < 1) {
          throw_data("manifest: conv2d '" + l.name + "' produces an empty feature map");
        }
        if (l.bias_tensor) {
          const auto& b = a.tensor(*l.bias_tensor);
          if (b.shape.size() != 1 || b.shape[0] != w.shape[0]) {
            throw_data("manifest: conv2d bias '" + *l.bias_tensor + "' shape mismatch");
          }
        }
        s = {w.shape[0], oh, ow};
        break;
      }
      case LayerKind::linear: {
        if (spatial) throw_data("manifest: linear '" + l.name + "' needs flatten first");
        const auto& w = a.tensor(*l.weight_tensor);
        if (w.shape.size() != 2) {
          throw_data("manifest: linear weight '" + *l.weight_tensor + "' must be 2-D");
        }
        if (w.shape[1] != flat) {
          throw_data("manifest: linear '" + l.name + "' expects " +
                     std::to_string(w.shape[1]) + " inputs, activation has " +
                     std::to_string(flat));
        }
        if (l.out > 0 && w.shape[0] != l.out) {
          throw_data("manifest: linear '" + l.name + "' out hyperparam disagrees with weight shape");
        }
        if (l.bias_tensor) {
          const auto& b = a.tensor(*l.bias_tensor);
          if (b.shape.size() != 1 || b.shape[0] != w.shape[0]) {
            throw_data("manifest: linear bias '" + *l.bias_tensor + "' shape mismatch");
          }
        }
        flat = w.shape[0];
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool2d: {
        if (!spatial) throw_data("manifest: maxpool2d '" + l.name + "' after flatten");
        if (l.pool < 1) throw_data("manifest: maxpool2d '" + l.name + "' needs size >= 1");
        if (l.stride < 1) throw_data("manifest: maxpool2d '" + l.name + "' stride < 1");
        const std::int64_t oh = (s.h - l.pool) / l.stride + 1;
        const std::int64_t ow = (s.w - l.pool) / l.stride + 1;
        if (oh < 1 || ow < 1) {
          throw_data("manifest: maxpool2d '" + l.name + "' produces an empty map");
        }
        s = {s.c, oh, ow};
        break;
      }
      case LayerKind::flatten: {
        if (!spatial) throw_data("manifest: flatten '" + l.name + "' on flat activation");
        flat = s.c * s.h * s.w;
        spatial = false;
        break;
      }
    }
  }

  if (spatial || flat != m.class_count) {
    throw_data("manifest: network output size does not equal class_count " +
               std::to_string(m.class_count));
  }
}

std::vector<Candidate> candidate_params(const ModelManifest& m,
                                        const WeightArchive& a, int L) {
  if (L < 1) throw_precondition("candidate_params: L must be >= 1");

  std::vector<Candidate> out;
  for (const auto& l : m.layers) {
    if (l.kind != LayerKind::conv2d && l.kind != LayerKind::linear) continue;
    if (!l.param_layer_index || *l.param_layer_index > L) continue;
    const auto& w = a.tensor(*l.weight_tensor);

    // Elements per kernel: the 2-D spatial slice for conv2d, the input row
    // length for linear.
    std::uint64_t kernel_span = 1;
    if (l.kind == LayerKind::conv2d) {
      kernel_span = static_cast<std::uint64_t>(w.shape[2]) *
                    static_cast<std::uint64_t>(w.shape[3]);
    } else {
      kernel_span = static_cast<std::uint64_t>(w.shape[1]);
    }

    const std::uint64_t n = w.numel();
    out.reserve(out.size() + n);
    for (std::uint64_t i = 0; i < n; ++i) {
      out.push_back(Candidate{
          ParamCoord{*l.weight_tensor, i},
          KernelId{*l.param_layer_index, i / kernel_span},
          w.value(i),
      });
    }
  }
  return out;
}

}  // namespace dnlkit::tensorstore
