#include "dic/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dic/error.hpp"
#include "dic/latent.hpp"
#include "dic/rng.hpp"
#include "dic/wav.hpp"

namespace dic {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kRequired[] = {"editing_prompt", "original_prompt", "blended_word",      "emphasize",
                                     "audio_path",     "editing_type_id", "editing_instruction"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string require_string(const nlohmann::json& obj, const std::string& id, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ParseError("entry '" + id + "': field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> phrase_list(const nlohmann::json& v, const std::string& id, const char* key) {
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) throw ParseError("entry '" + id + "': '" + key + "' items must be strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }
  if (v.is_string()) return parse_phrase_tuple(v.get<std::string>());
  throw ParseError("entry '" + id + "': '" + key + "' must be a string or an array");
}

int parse_type_id(const nlohmann::json& v, const std::string& id) {
  long long value = -1;
  if (v.is_number_integer()) {
    value = v.get<long long>();
  } else if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw RangeError("entry '" + id + "': editing_type_id '" + s + "' is not an integer in 0..9");
    }
  } else {
    throw RangeError("entry '" + id + "': editing_type_id must be an integer in 0..9");
  }
  if (value < 0 || value > 9) {
    throw RangeError("entry '" + id + "': editing_type_id " + std::to_string(value) + " outside 0..9");
  }
  return static_cast<int>(value);
}

bool phrase_in_prompt(const std::string& phrase, const std::string& prompt) {
  const auto words = tokenize(phrase);
  const auto toks = tokenize(prompt);
  if (words.empty()) return false;
  return std::all_of(words.begin(), words.end(),
                     [&](const std::string& w) { return std::find(toks.begin(), toks.end(), w) != toks.end(); });
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> parse_phrase_tuple(std::string_view text) {
  std::string s = trim(text);
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = trim(std::string_view(s).substr(1, s.size() - 2));
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == ',')) ++i;
    if (i >= s.size()) break;
    if (s[i] == '"' || s[i] == '\'') {
      const char quote = s[i++];
      std::string item;
      while (i < s.size() && s[i] != quote) {
        if (s[i] == '\\' && i + 1 < s.size()) ++i;
        item.push_back(s[i++]);
      }
      if (i >= s.size()) throw ParseError("unterminated quote in phrase tuple '" + std::string(text) + "'");
      ++i;
      out.push_back(item);
    } else {
      const auto comma = s.find(',', i);
      out.push_back(trim(std::string_view(s).substr(i, comma == std::string::npos ? std::string::npos : comma - i)));
      i = comma == std::string::npos ? s.size() : comma;
    }
  }
  return out;
}

std::string format_phrase_tuple(const std::vector<std::string>& items) {
  std::string out = "(";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += '"';
    for (char c : items[i]) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    out += '"';
  }
  return out + ")";
}

BenchManifest parse_manifest(std::string_view json_text) {
  std::set<std::string> seen;
  std::string duplicate;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text, [&](int depth, nlohmann::json::parse_event_t ev, nlohmann::json& v) {
      if (depth == 1 && ev == nlohmann::json::parse_event_t::key && duplicate.empty()) {
        const auto key = v.get<std::string>();
        if (!seen.insert(key).second) duplicate = key;
      }
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("manifest must be a JSON object keyed by entry id");
  if (!duplicate.empty()) throw ParseError("duplicate entry id '" + duplicate + "'");

  BenchManifest m;
  for (const auto& [id, obj] : doc.items()) {
    if (!obj.is_object()) throw ParseError("entry '" + id + "' must be a JSON object");
    for (const char* key : kRequired) {
      if (!obj.contains(key)) throw ParseError("entry '" + id + "' is missing required key '" + key + "'");
    }
    BenchEntry e;
    e.editing_prompt = require_string(obj, id, "editing_prompt");
    e.original_prompt = require_string(obj, id, "original_prompt");
    if (trim(e.editing_prompt).empty() || trim(e.original_prompt).empty()) {
      throw ParseError("entry '" + id + "': prompts must be non-empty");
    }
    const auto blend = phrase_list(obj.at("blended_word"), id, "blended_word");
    if (blend.size() != 2) {
      throw ParseError("entry '" + id + "': blended_word needs exactly two phrases, got " +
                       std::to_string(blend.size()));
    }
    e.blended_word = {blend[0], blend[1]};
    e.emphasize = phrase_list(obj.at("emphasize"), id, "emphasize");
    e.audio_path = require_string(obj, id, "audio_path");
    e.editing_type_id = parse_type_id(obj.at("editing_type_id"), id);
    e.editing_instruction = require_string(obj, id, "editing_instruction");
    if (obj.contains("neg_prompt")) e.neg_prompt = require_string(obj, id, "neg_prompt");

    if (!phrase_in_prompt(e.blended_word.first, e.original_prompt)) {
      m.warnings.push_back("entry '" + id + "': blended word '" + e.blended_word.first +
                           "' not found in original_prompt");
    }
    if (!phrase_in_prompt(e.blended_word.second, e.editing_prompt)) {
      m.warnings.push_back("entry '" + id + "': blended word '" + e.blended_word.second +
                           "' not found in editing_prompt");
    }
    m.entries.emplace(id, std::move(e));
  }
  return m;
}

BenchManifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_text(path)); }

std::string serialize_manifest(const BenchManifest& manifest) {
  ordered_json doc = ordered_json::object();
  for (const auto& [id, e] : manifest.entries) {
    ordered_json o;
    o["editing_prompt"] = e.editing_prompt;
    o["original_prompt"] = e.original_prompt;
    o["blended_word"] = format_phrase_tuple({e.blended_word.first, e.blended_word.second});
    o["emphasize"] = format_phrase_tuple(e.emphasize);
    o["audio_path"] = e.audio_path;
    o["editing_type_id"] = std::to_string(e.editing_type_id);
    o["editing_instruction"] = e.editing_instruction;
    if (e.neg_prompt) o["neg_prompt"] = *e.neg_prompt;
    doc[id] = std::move(o);
  }
  return doc.dump(4) + "\n";
}

// ---------------------------------------------------------------------------

Tensor synthesize_latent(const std::string& entry_id, const PromptEmbedding& original,
                         const AnalyticGaussianModel& reference, std::uint64_t seed) {
  SeededRng rng(hash_string(entry_id, seed));
  const Tensor mu = reference.mean_for(original);
  const Tensor noise = normal(rng, mu.shape());
  return axpby(1.0, mu, reference.config().prior_std, noise);
}

namespace {

std::vector<std::filesystem::path> latent_candidates(const std::filesystem::path& base, const BenchEntry& e) {
  const std::filesystem::path p = base / e.audio_path;
  std::vector<std::filesystem::path> out{p};
  if (p.extension() != ".dicl") {
    auto alt = p;
    alt.replace_extension(".dicl");
    out.push_back(alt);
  }
  return out;
}

// Resolves every entry's source latent up front so missing files are all
// reported together.
std::vector<Tensor> resolve_latents(const std::vector<std::pair<std::string, const BenchEntry*>>& items,
                                    const AnalyticGaussianModel& reference, const BenchConfig& config) {
  std::vector<Tensor> out;
  out.reserve(items.size());
  std::vector<std::string> missing;
  const Shape expected = reference.config().geometry.shape();
  for (const auto& [id, e] : items) {
    if (config.latents == LatentSource::synthesize) {
      out.push_back(synthesize_latent(id, encode_prompt(e->original_prompt, config.text_seed), reference, config.seed));
      continue;
    }
    if (config.latents == LatentSource::wav) {
      const auto p = config.base_dir / e->audio_path;
      if (!std::filesystem::exists(p)) {
        missing.push_back(p.string());
        continue;
      }
      out.push_back(wav_to_latent(read_wav(p), reference.config().geometry));
      continue;
    }
    const auto candidates = latent_candidates(config.base_dir, *e);
    bool found = false;
    for (const auto& c : candidates) {
      if (c.extension() == ".dicl" && std::filesystem::exists(c)) {
        Tensor z = read_dicl(c);
        if (z.shape() != expected) {
          throw DimensionError("latent '" + c.string() + "' has shape " + shape_string(z.shape()) +
                               ", expected " + shape_string(expected));
        }
        out.push_back(std::move(z));
        found = true;
        break;
      }
    }
    if (!found) missing.push_back(candidates.back().string());
  }
  if (!missing.empty()) {
    std::string msg = "unresolved audio paths (use --synthesize-latents or --from-wav):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  return out;
}

}  // namespace

std::vector<MetricReport> run_bench(const BenchManifest& manifest, const Denoiser& model,
                                    const AnalyticGaussianModel& reference, const NoiseSchedule& schedule,
                                    const BenchConfig& config) {
  std::vector<std::string> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  for (const auto& m : methods) {
    if (m != "dic" && m != "ddim" && m != "sdedit") throw ConfigError("unknown method '" + m + "'");
  }
  if (methods.empty()) throw ConfigError("at least one method is required");

  std::vector<std::pair<std::string, const BenchEntry*>> items;
  for (const auto& [id, e] : manifest.entries) items.emplace_back(id, &e);
  const std::vector<Tensor> sources = resolve_latents(items, reference, config);

  std::vector<std::vector<MetricReport>> per_entry(items.size());
  std::vector<std::exception_ptr> failures(items.size());

  auto evaluate = [&](std::size_t i) {
    const auto& [id, e] = items[i];
    const Tensor& z0 = sources[i];
    const PromptEmbedding src = encode_prompt(e->original_prompt, config.text_seed);
    const PromptEmbedding tgt = encode_prompt(e->editing_prompt, config.text_seed);
    for (const auto& method : methods) {
      Tensor edited;
      if (method == "dic") {
        EditOptions opts = config.edit;
        opts.blend.reset();
        if (config.edit.blend && model.attention_model() && !token_indices(src, e->blended_word.first).empty() &&
            !token_indices(tgt, e->blended_word.second).empty()) {
          opts.blend = BlendWords{{e->blended_word.first}, {e->blended_word.second}, config.edit.blend->k_src,
                                  config.edit.blend->k_tgt};
        }
        edited = dic_edit(z0, src, tgt, model, schedule, opts).target;
      } else if (method == "ddim") {
        edited = ddim_edit_baseline(z0, src, tgt, config.edit.guidance, model, schedule);
      } else {
        edited = sdedit_baseline(z0, tgt, config.sdedit_start, config.edit.guidance.omega_forward, model, schedule,
                                 hash_string(id, mix_seed(config.seed, 0x73646564)));
      }
      per_entry[i].push_back({id, e->editing_type_id, method, structure_distance(z0, edited), mse(z0, edited),
                              edit_fidelity_proxy(edited, tgt, reference)});
    }
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(items.size())));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
          try {
            evaluate(i);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& f : failures)
      if (f) std::rethrow_exception(f);
  }

  std::vector<MetricReport> rows;
  for (auto& v : per_entry) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::vector<TypeAggregate> aggregate_by_type(const std::vector<MetricReport>& rows) {
  std::map<std::pair<int, std::string>, TypeAggregate> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.editing_type_id, r.method}];
    g.editing_type_id = r.editing_type_id;
    g.method = r.method;
    ++g.count;
    g.structure_distance_e3 += r.structure_distance_e3;
    g.mse += r.mse;
    g.edit_fidelity_proxy += r.edit_fidelity_proxy;
  }
  std::vector<TypeAggregate> out;
  for (auto& [key, g] : groups) {
    const double n = static_cast<double>(g.count);
    g.structure_distance_e3 /= n;
    g.mse /= n;
    g.edit_fidelity_proxy /= n;
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv(const std::vector<MetricReport>& rows) {
  std::string out = "entry_id,editing_type_id,method,structure_distance_e3,mse,edit_fidelity_proxy\n";
  for (const auto& r : rows) {
    out += csv_field(r.entry_id) + "," + std::to_string(r.editing_type_id) + "," + csv_field(r.method) + "," +
           format_number(r.structure_distance_e3) + "," + format_number(r.mse) + "," +
           format_number(r.edit_fidelity_proxy) + "\n";
  }
  return out;
}

std::string report_json(const std::vector<MetricReport>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["entry_id"] = r.entry_id;
    o["editing_type_id"] = r.editing_type_id;
    o["method"] = r.method;
    o["structure_distance_e3"] = r.structure_distance_e3;
    o["mse"] = r.mse;
    o["edit_fidelity_proxy"] = r.edit_fidelity_proxy;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::string aggregate_csv(const std::vector<TypeAggregate>& rows) {
  std::string out = "editing_type_id,method,count,structure_distance_e3,mse,edit_fidelity_proxy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.editing_type_id) + "," + csv_field(r.method) + "," + std::to_string(r.count) + "," +
           format_number(r.structure_distance_e3) + "," + format_number(r.mse) + "," +
           format_number(r.edit_fidelity_proxy) + "\n";
  }
  return out;
}

std::string aggregate_json(const std::vector<TypeAggregate>& rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["editing_type_id"] = r.editing_type_id;
    o["method"] = r.method;
    o["count"] = r.count;
    o["structure_distance_e3"] = r.structure_distance_e3;
    o["mse"] = r.mse;
    o["edit_fidelity_proxy"] = r.edit_fidelity_proxy;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

}  // namespace dic
