#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dic/attention_control.hpp"
#include "dic/denoiser.hpp"
#include "dic/inversion.hpp"
#include "dic/metrics.hpp"
#include "dic/schedule.hpp"

namespace dic {

struct BenchEntry {
  std::string editing_prompt;
  std::string original_prompt;
  std::pair<std::string, std::string> blended_word;  // (source phrase, target phrase)
  std::vector<std::string> emphasize;
  std::string audio_path;
  int editing_type_id = 0;
  std::string editing_instruction;
  std::optional<std::string> neg_prompt;

  bool operator==(const BenchEntry&) const = default;
};

struct BenchManifest {
  std::map<std::string, BenchEntry> entries;  // ordered by id
  std::vector<std::string> warnings;          // not part of equality

  bool operator==(const BenchManifest& o) const { return entries == o.entries; }
};

// Parses tuple-style strings such as ("guitar", "violin") into their items.
std::vector<std::string> parse_phrase_tuple(std::string_view text);
std::string format_phrase_tuple(const std::vector<std::string>& items);

BenchManifest parse_manifest(std::string_view json_text);
BenchManifest load_manifest(const std::filesystem::path& path);
// Canonical form: ids sorted, fields in fixed order, 4-space indent, trailing newline.
std::string serialize_manifest(const BenchManifest& manifest);

enum class LatentSource { files, synthesize, wav };

struct BenchConfig {
  std::vector<std::string> methods{"dic", "ddim", "sdedit"};
  EditOptions edit;
  double sdedit_start = 0.75;
  std::uint64_t seed = 0;
  std::uint64_t text_seed = 0;
  LatentSource latents = LatentSource::files;
  std::filesystem::path base_dir;  // audio_path is resolved against this
  unsigned jobs = 1;
};

// Deterministic stand-in for an entry's source clip: mu_original + sigma_0 noise.
Tensor synthesize_latent(const std::string& entry_id, const PromptEmbedding& original,
                         const AnalyticGaussianModel& reference, std::uint64_t seed);

// Rows sorted by (entry_id, method). `reference` supplies prompt means for
// synthesis and for the fidelity proxy; `model` runs the edits.
std::vector<MetricReport> run_bench(const BenchManifest& manifest, const Denoiser& model,
                                    const AnalyticGaussianModel& reference, const NoiseSchedule& schedule,
                                    const BenchConfig& config);

struct TypeAggregate {
  int editing_type_id = 0;
  std::string method;
  std::size_t count = 0;
  double structure_distance_e3 = 0.0;
  double mse = 0.0;
  double edit_fidelity_proxy = 0.0;
};

std::vector<TypeAggregate> aggregate_by_type(const std::vector<MetricReport>& rows);

std::string report_csv(const std::vector<MetricReport>& rows);
std::string report_json(const std::vector<MetricReport>& rows);
std::string aggregate_csv(const std::vector<TypeAggregate>& rows);
std::string aggregate_json(const std::vector<TypeAggregate>& rows);

// Shortest round-trip decimal form used in every emitted table.
std::string format_number(double v);

}  // namespace dic
