#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnlkit/nnengine.hpp"
#include "dnlkit/scoring.hpp"
#include "dnlkit/tensorstore.hpp"

// Selective sign-bit defense: choose the critical fraction, encode redundant
// copies of those sign bits, then detect and repair flips. The sidecar is
// stored separately from the archive and is assumed tamper-resistant beyond
// the per-scheme corruption bounds.
namespace dnlkit::shield {

enum class Selection { by_score, random };
enum class Scheme : std::uint8_t { replicate3 = 0, hamming_secded = 1 };

std::string_view selection_name(Selection s);
Selection selection_from_name(std::string_view name);
std::string_view scheme_name(Scheme s);
Scheme scheme_from_name(std::string_view name);

struct ProtectionRegistry {
  Selection selection = Selection::by_score;
  float fraction = 0.0f;
  std::optional<std::uint64_t> seed;
  std::vector<tensorstore::ParamCoord> protected_coords;  // payload order
};

// Top ceil(fraction * N) parameters by descending score under the standard
// tie-break. fraction must lie in (0, 1].
ProtectionRegistry select_protected(const scoring::ScoreTable& scores,
                                    float fraction);

// Uniform sample without replacement; seed-deterministic.
ProtectionRegistry select_protected_random(
    const std::vector<tensorstore::Candidate>& population, float fraction,
    std::uint64_t seed);

// Redundant encoding of the protected parameters' sign bits, in registry
// order. replicate3 stores three copies per bit (majority decode);
// hamming_secded packs 57 data bits + 7 check bits per 64-bit block
// (single-error correct, double-error detect).
struct SignSidecar {
  Scheme scheme = Scheme::replicate3;
  std::array<std::uint8_t, 32> registry_digest{};  // SHA-256 of the registry JSON
  std::vector<std::uint8_t> payload;               // bits packed LSB-first
};

SignSidecar encode(const tensorstore::WeightArchive& a,
                   const ProtectionRegistry& r, Scheme scheme);

struct RepairReport {
  tensorstore::WeightArchive repaired;
  std::vector<tensorstore::ParamCoord> corrected;  // archive signs restored
  std::vector<std::uint64_t> alarms;  // hamming blocks left unrepaired
};

// Restores every protected sign bit to its decoded value. replicate3
// tolerates one corrupted replica per bit; hamming_secded corrects one and
// detects two flips per block, raising an alarm and leaving that block's
// parameters untouched when correction is impossible. Throws on a
// registry/sidecar digest mismatch.
RepairReport verify_and_repair(const tensorstore::WeightArchive& a,
                               const ProtectionRegistry& r,
                               const SignSidecar& s);

struct StressResult {
  double baseline_acc = 0.0;
  double post_acc = 0.0;
  double ar = 0.0;
  std::uint64_t n_flips = 0;
  std::uint64_t seed = 0;
  std::size_t corrected = 0;
  std::size_t alarms = 0;
};

// Seeded random sign-flip barrage over all candidate parameters, optional
// repair, accuracy measurement. n_flips = 0 gives AR = 0 by construction.
StressResult stress(const nnengine::Model& model, const nnengine::Dataset& data,
                    const std::optional<ProtectionRegistry>& r,
                    const std::optional<SignSidecar>& s, std::uint64_t n_flips,
                    std::uint64_t seed, bool sign_only = true, int jobs = 0);

std::string registry_to_json(const ProtectionRegistry& r);
ProtectionRegistry registry_from_json(std::string_view text);
ProtectionRegistry load_registry_file(const std::filesystem::path& path);
void save_registry_file(const ProtectionRegistry& r,
                        const std::filesystem::path& path);

// Sidecar file: magic "NLSB", u16 version, u8 scheme, 32-byte registry
// digest, u64 payload byte length, payload.
SignSidecar load_sidecar_file(const std::filesystem::path& path);
void save_sidecar_file(const SignSidecar& s, const std::filesystem::path& path);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes);

}  // namespace dnlkit::shield
