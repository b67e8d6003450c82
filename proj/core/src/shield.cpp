#include "dnlkit/shield.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dnlkit/bitkit.hpp"
#include "dnlkit/lesion.hpp"
#include "dnlkit/philox.hpp"

namespace dnlkit::shield {

using tensorstore::ParamCoord;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kRandomRegistryStream = std::uint64_t{5} << 32;
constexpr int kHammingDataBits = 57;  // per 64-bit block; 6 parity + 1 overall

bool get_bit(const std::vector<std::uint8_t>& bytes, std::uint64_t pos) {
  return (bytes[pos >> 3] >> (pos & 7)) & 1u;
}

void set_bit(std::vector<std::uint8_t>& bytes, std::uint64_t pos, bool v) {
  if (v) {
    bytes[pos >> 3] |= static_cast<std::uint8_t>(1u << (pos & 7));
  } else {
    bytes[pos >> 3] &= static_cast<std::uint8_t>(~(1u << (pos & 7)));
  }
}

// Block positions 1,2,4,8,16,32 hold Hamming parity, position 0 the overall
// parity; the remaining 57 positions hold data bits in ascending order.
bool is_parity_pos(int pos) { return pos == 0 || (pos & (pos - 1)) == 0; }

std::uint64_t hamming_encode_block(std::span<const bool> data) {
  std::uint64_t block = 0;
  int di = 0;
  for (int pos = 1; pos < 64; ++pos) {
    if (is_parity_pos(pos)) continue;
    const bool bit = di < static_cast<int>(data.size()) ? data[di] : false;
    ++di;
    if (bit) block |= std::uint64_t{1} << pos;
  }
  for (int j = 0; j < 6; ++j) {
    const int p = 1 << j;
    std::uint64_t parity = 0;
    for (int pos = 1; pos < 64; ++pos) {
      if (pos == p || !(pos & p)) continue;
      parity ^= (block >> pos) & 1u;
    }
    if (parity) block |= std::uint64_t{1} << p;
  }
  std::uint64_t overall = 0;
  for (int pos = 1; pos < 64; ++pos) overall ^= (block >> pos) & 1u;
  if (overall) block |= 1u;
  return block;
}

struct HammingDecode {
  std::uint64_t block = 0;
  bool corrected = false;
  bool uncorrectable = false;
};

HammingDecode hamming_decode_block(std::uint64_t block) {
  int syndrome = 0;
  for (int pos = 1; pos < 64; ++pos) {
    if ((block >> pos) & 1u) syndrome ^= pos;
  }
  int overall = 0;
  for (int pos = 0; pos < 64; ++pos) overall ^= static_cast<int>((block >> pos) & 1u);

  HammingDecode d;
  d.block = block;
  if (syndrome == 0 && overall == 0) return d;  // clean
  if (overall != 0) {
    // Single-bit error at `syndrome` (position 0 when the overall parity
    // bit itself flipped).
    d.block ^= std::uint64_t{1} << syndrome;
    d.corrected = true;
    return d;
  }
  d.uncorrectable = true;  // even parity but nonzero syndrome: two flips
  return d;
}

void hamming_extract_data(std::uint64_t block, std::span<bool> out) {
  int di = 0;
  for (int pos = 1; pos < 64 && di < static_cast<int>(out.size()); ++pos) {
    if (is_parity_pos(pos)) continue;
    out[di++] = (block >> pos) & 1u;
  }
}

std::uint32_t sign_bit_of(const tensorstore::WeightArchive& a,
                          const ParamCoord& c) {
  const auto& rec = a.tensor(c.tensor);
  if (c.flat_index >= rec.numel()) {
    throw_precondition("registry coordinate " + c.tensor + "[" +
                       std::to_string(c.flat_index) + "] out of bounds");
  }
  return rec.word(c.flat_index) >> bitkit::kSignBitPos;
}

}  // namespace

std::string_view selection_name(Selection s) {
  return s == Selection::by_score ? "by_score" : "random";
}

Selection selection_from_name(std::string_view name) {
  if (name == "by_score") return Selection::by_score;
  if (name == "random") return Selection::random;
  throw_config("unknown selection '" + std::string(name) + "'");
}

std::string_view scheme_name(Scheme s) {
  return s == Scheme::replicate3 ? "replicate3" : "hamming_secded";
}

Scheme scheme_from_name(std::string_view name) {
  if (name == "replicate3") return Scheme::replicate3;
  if (name == "hamming_secded") return Scheme::hamming_secded;
  throw_config("unknown sidecar scheme '" + std::string(name) + "'");
}

namespace {

// ceil(fraction * n) with a relative guard so that FP32 fractions like 1/3
// do not overshoot an exact integer product.
std::size_t protected_count(float fraction, std::size_t n) {
  const double raw = static_cast<double>(fraction) * static_cast<double>(n);
  const double guarded = raw * (1.0 - 1e-7);
  return static_cast<std::size_t>(
      std::min<double>(static_cast<double>(n), std::ceil(guarded)));
}

}  // namespace

ProtectionRegistry select_protected(const scoring::ScoreTable& scores,
                                    float fraction) {
  if (!(fraction > 0.0f) || fraction > 1.0f) {
    throw_precondition("select_protected: fraction must be in (0,1]");
  }
  const std::size_t n = scores.candidates.size();
  const std::size_t count = protected_count(fraction, n);
  const auto order = scoring::descending_order(scores);

  ProtectionRegistry r;
  r.selection = Selection::by_score;
  r.fraction = fraction;
  r.protected_coords.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.protected_coords.push_back(scores.candidates[order[i]].coord);
  }
  return r;
}

ProtectionRegistry select_protected_random(
    const std::vector<tensorstore::Candidate>& population, float fraction,
    std::uint64_t seed) {
  if (!(fraction > 0.0f) || fraction > 1.0f) {
    throw_precondition("select_protected_random: fraction must be in (0,1]");
  }
  const std::size_t n = population.size();
  const std::size_t count = protected_count(fraction, n);

  philox::Stream rng(seed, kRandomRegistryStream);
  const auto picks = philox::sample_without_replacement(n, count, rng);

  ProtectionRegistry r;
  r.selection = Selection::random;
  r.fraction = fraction;
  r.seed = seed;
  r.protected_coords.reserve(count);
  for (auto i : picks) r.protected_coords.push_back(population[i].coord);
  return r;
}

SignSidecar encode(const tensorstore::WeightArchive& a,
                   const ProtectionRegistry& r, Scheme scheme) {
  const std::uint64_t n = r.protected_coords.size();
  SignSidecar s;
  s.scheme = scheme;
  {
    const std::string reg_json = registry_to_json(r);
    s.registry_digest = sha256(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(reg_json.data()), reg_json.size()));
  }

  if (scheme == Scheme::replicate3) {
    s.payload.assign((3 * n + 7) / 8, 0);
    for (std::uint64_t i = 0; i < n; ++i) {
      const bool bit = sign_bit_of(a, r.protected_coords[i]) != 0;
      for (int c = 0; c < 3; ++c) set_bit(s.payload, 3 * i + c, bit);
    }
    return s;
  }

  const std::uint64_t blocks = (n + kHammingDataBits - 1) / kHammingDataBits;
  s.payload.assign(blocks * 8, 0);
  for (std::uint64_t b = 0; b < blocks; ++b) {
    bool raw[kHammingDataBits] = {};  // trailing blocks pad with zeros
    const std::uint64_t begin = b * kHammingDataBits;
    const std::uint64_t end = std::min<std::uint64_t>(n, begin + kHammingDataBits);
    for (std::uint64_t i = begin; i < end; ++i) {
      raw[i - begin] = sign_bit_of(a, r.protected_coords[i]) != 0;
    }
    const std::uint64_t word =
        hamming_encode_block(std::span<const bool>(raw, kHammingDataBits));
    for (int byte = 0; byte < 8; ++byte) {
      s.payload[b * 8 + byte] = static_cast<std::uint8_t>(word >> (8 * byte));
    }
  }
  return s;
}

RepairReport verify_and_repair(const tensorstore::WeightArchive& a,
                               const ProtectionRegistry& r,
                               const SignSidecar& s) {
  {
    const std::string reg_json = registry_to_json(r);
    const auto digest = sha256(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(reg_json.data()), reg_json.size()));
    if (digest != s.registry_digest) {
      throw_data("verify_and_repair: sidecar was not built for this registry");
    }
  }

  const std::uint64_t n = r.protected_coords.size();
  RepairReport report{a, {}, {}};

  auto restore = [&](std::uint64_t i, bool decoded) {
    const auto& c = r.protected_coords[i];
    auto& rec = report.repaired.tensor(c.tensor);
    const std::uint32_t word = rec.word(c.flat_index);
    const bool current = (word >> bitkit::kSignBitPos) != 0;
    if (current != decoded) {
      rec.set_word(c.flat_index, word ^ bitkit::kSignMask);
      report.corrected.push_back(c);
    }
  };

  if (s.scheme == Scheme::replicate3) {
    if (s.payload.size() != (3 * n + 7) / 8) {
      throw_data("verify_and_repair: replicate3 payload length mismatch");
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      const int votes = int(get_bit(s.payload, 3 * i)) +
                        int(get_bit(s.payload, 3 * i + 1)) +
                        int(get_bit(s.payload, 3 * i + 2));
      restore(i, votes >= 2);
    }
    return report;
  }

  const std::uint64_t blocks = (n + kHammingDataBits - 1) / kHammingDataBits;
  if (s.payload.size() != blocks * 8) {
    throw_data("verify_and_repair: hamming payload length mismatch");
  }
  for (std::uint64_t b = 0; b < blocks; ++b) {
    std::uint64_t word = 0;
    for (int byte = 0; byte < 8; ++byte) {
      word |= std::uint64_t{s.payload[b * 8 + byte]} << (8 * byte);
    }
    const HammingDecode d = hamming_decode_block(word);
    if (d.uncorrectable) {
      report.alarms.push_back(b);
      continue;  // decode unreliable: leave this block's parameters alone
    }
    bool data[kHammingDataBits];
    std::span<bool> out(data, kHammingDataBits);
    hamming_extract_data(d.block, out);
    const std::uint64_t begin = b * kHammingDataBits;
    const std::uint64_t end = std::min(n, begin + kHammingDataBits);
    for (std::uint64_t i = begin; i < end; ++i) restore(i, data[i - begin]);
  }
  return report;
}

StressResult stress(const nnengine::Model& model, const nnengine::Dataset& data,
                    const std::optional<ProtectionRegistry>& r,
                    const std::optional<SignSidecar>& s, std::uint64_t n_flips,
                    std::uint64_t seed, bool sign_only, int jobs) {
  if (r.has_value() != s.has_value()) {
    throw_precondition("stress: registry and sidecar must be given together");
  }

  StressResult result;
  result.n_flips = n_flips;
  result.seed = seed;
  result.baseline_acc = nnengine::accuracy(model, data, jobs);

  if (n_flips == 0) {
    result.post_acc = result.baseline_acc;
    result.ar = 0.0;
    return result;
  }

  const auto plan = lesion::plan_random(model.manifest, model.params, n_flips,
                                        seed, sign_only);
  tensorstore::WeightArchive attacked = lesion::apply(plan, model.params);
  if (r) {
    RepairReport rep = verify_and_repair(attacked, *r, *s);
    result.corrected = rep.corrected.size();
    result.alarms = rep.alarms.size();
    attacked = std::move(rep.repaired);
  }

  auto m2 = nnengine::make_model(model.manifest, std::move(attacked));
  result.post_acc = nnengine::accuracy(m2, data, jobs);
  if (!(result.baseline_acc > 0.0)) {
    throw_precondition("stress: baseline accuracy is zero, AR undefined");
  }
  result.ar = (result.baseline_acc - result.post_acc) / result.baseline_acc;
  return result;
}

std::string registry_to_json(const ProtectionRegistry& r) {
  ordered_json j = ordered_json::object();
  j["selection"] = std::string(selection_name(r.selection));
  j["fraction"] = r.fraction;
  if (r.seed) {
    j["seed"] = *r.seed;
  } else {
    j["seed"] = nullptr;
  }
  ordered_json coords = ordered_json::array();
  for (const auto& c : r.protected_coords) {
    coords.push_back({{"tensor", c.tensor}, {"flat_index", c.flat_index}});
  }
  j["protected"] = std::move(coords);
  return j.dump(2) + "\n";
}

ProtectionRegistry registry_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw_data(std::string("registry: not valid JSON: ") + e.what());
  }
  ProtectionRegistry r;
  r.selection = selection_from_name(j.value("selection", std::string{}));
  r.fraction = j.value("fraction", 0.0f);
  if (j.contains("seed") && !j["seed"].is_null()) {
    r.seed = j["seed"].get<std::uint64_t>();
  }
  if (!j.contains("protected") || !j["protected"].is_array()) {
    throw_data("registry: missing protected array");
  }
  for (const auto& cj : j["protected"]) {
    ParamCoord c;
    c.tensor = cj.value("tensor", std::string{});
    c.flat_index = cj.value("flat_index", std::uint64_t{0});
    if (c.tensor.empty()) throw_data("registry: entry without tensor name");
    r.protected_coords.push_back(std::move(c));
  }
  return r;
}

ProtectionRegistry load_registry_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open registry file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return registry_from_json(text);
}

void save_registry_file(const ProtectionRegistry& r,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write registry file '" + path.string() + "'");
  f << registry_to_json(r);
}

namespace {

constexpr char kSidecarMagic[4] = {'N', 'L', 'S', 'B'};
constexpr std::uint16_t kSidecarVersion = 1;

}  // namespace

SignSidecar load_sidecar_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_data("cannot open sidecar file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 2 + 1 + 32 + 8) throw_data("sidecar: truncated file");
  if (std::memcmp(bytes.data(), kSidecarMagic, 4) != 0) {
    throw_data("sidecar: bad magic, expected NLSB");
  }
  const std::uint16_t version =
      static_cast<std::uint16_t>(bytes[4] | (std::uint16_t(bytes[5]) << 8));
  if (version != kSidecarVersion) {
    throw_data("sidecar: unsupported version " + std::to_string(version));
  }
  SignSidecar s;
  if (bytes[6] > 1) throw_data("sidecar: unknown scheme byte");
  s.scheme = static_cast<Scheme>(bytes[6]);
  std::memcpy(s.registry_digest.data(), bytes.data() + 7, 32);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t{bytes[39 + i]} << (8 * i);
  if (bytes.size() != 47 + len) throw_data("sidecar: payload length mismatch");
  s.payload.assign(bytes.begin() + 47, bytes.end());
  return s;
}

void save_sidecar_file(const SignSidecar& s, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kSidecarMagic, kSidecarMagic + 4);
  bytes.push_back(kSidecarVersion & 0xff);
  bytes.push_back(kSidecarVersion >> 8);
  bytes.push_back(static_cast<std::uint8_t>(s.scheme));
  bytes.insert(bytes.end(), s.registry_digest.begin(), s.registry_digest.end());
  const std::uint64_t len = s.payload.size();
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  bytes.insert(bytes.end(), s.payload.begin(), s.payload.end());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_data("cannot write sidecar file '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != 32) {
    throw_data("sha256: digest computation failed");
  }
  return out;
}

}  // namespace dnlkit::shield
