// Copyright 2026 The RelScore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "relscore/cli.hpp"
#include "relscore/config.hpp"
#include "relscore/errors.hpp"
#include "relscore/imaging.hpp"
#include "relscore/metrics.hpp"
#include "relscore/model.hpp"
#include "relscore/pipeline.hpp"
#include "relscore/providers.hpp"
#include "relscore/report.hpp"

namespace relscore::cli {

namespace {

struct BackendFlags {
  std::string backend = "mock";
  std::string endpoint;
  std::string cache;
  double timeout_s = 30.0;
  int max_in_flight = 4;
  int retries = 3;
};

struct CommonFlags {
  std::string config;
  std::string out;
  std::string format = "canonical";
  std::string psg_split;
  std::string image_root;
  std::optional<std::uint64_t> seed;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_option("--backend", f.backend, "Scoring/generation backend")
      ->check(CLI::IsMember({"negclip", "clip", "siglip", "blip2", "vlm", "mock", "mock-sigmoid"}));
  cmd->add_option("--endpoint", f.endpoint, "Model server base URL (RELSCORE_ENDPOINT overrides)");
  cmd->add_option("--cache", f.cache, "Persistent score cache file");
  cmd->add_option("--timeout", f.timeout_s, "Per-request timeout in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--max-in-flight", f.max_in_flight, "Concurrent requests per endpoint")->check(CLI::Range(1, 1024));
  cmd->add_option("--retries", f.retries, "Retry budget per request")->check(CLI::Range(0, 100));
}

void add_dataset_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--format", f.format, "Input dataset format")
      ->check(CLI::IsMember({"canonical", "psg_json", "coco_boxes"}));
  cmd->add_option("--psg-split", f.psg_split, "PSG split to load (train or test)");
  cmd->add_option("--image-root", f.image_root, "Directory image file paths are relative to");
}

struct ProviderStack {
  std::shared_ptr<Provider> provider;
  std::shared_ptr<ScoreCache> cache;
  std::string cache_path;
  std::string identity;

  void persist() const {
    if (cache) cache->store(cache_path);
  }
};

ProviderStack make_provider(const BackendFlags& f) {
  ProviderStack stack;
  if (f.backend == "mock" || f.backend == "mock-sigmoid") {
    MockOptions options;
    options.method = f.backend == "mock" ? ScoreMethod::kCosineClamped : ScoreMethod::kSigmoidProb;
    options.max_in_flight = f.max_in_flight;
    stack.provider = std::make_shared<MockProvider>(options);
    stack.identity = stack.provider->backend_id();
  } else {
    ProviderEndpoint endpoint;
    endpoint.base_url = f.endpoint;
    if (const char* env = std::getenv("RELSCORE_ENDPOINT"); env && *env) endpoint.base_url = env;
    if (const char* token = std::getenv("RELSCORE_TOKEN"); token && *token) endpoint.bearer_token = token;
    if (endpoint.base_url.empty()) throw InputError("--backend " + f.backend + " needs --endpoint or RELSCORE_ENDPOINT");
    endpoint.backend_name = backend_name_from_string(f.backend);
    endpoint.timeout = std::chrono::duration<double>(f.timeout_s);
    endpoint.max_in_flight = f.max_in_flight;
    endpoint.retry_budget = f.retries;
    stack.provider = std::make_shared<HttpProvider>(endpoint);
    stack.identity = stack.provider->backend_id() + "@" + endpoint.base_url;
  }
  if (!f.cache.empty()) {
    stack.cache = std::make_shared<ScoreCache>(ScoreCache::load(f.cache));
    stack.cache_path = f.cache;
    stack.provider = std::make_shared<CachingProvider>(stack.provider, stack.cache);
  }
  return stack;
}

ToolConfig load_config(const CommonFlags& f) {
  ToolConfig config = f.config.empty() ? ToolConfig{} : load_tool_config(f.config);
  if (f.seed) config.pipeline.seed = *f.seed;
  return config;
}

SceneGraphDataset load_input(const std::string& path, const CommonFlags& f) {
  LoadOptions options;
  if (!f.psg_split.empty()) options.psg_split = f.psg_split;
  return load_dataset(path, dataset_format_from_string(f.format), options);
}

std::filesystem::path image_root_for(const CommonFlags& f, const std::string& dataset_path) {
  if (!f.image_root.empty()) return f.image_root;
  const auto parent = std::filesystem::path(dataset_path).parent_path();
  return parent.empty() ? std::filesystem::path(".") : parent;
}

RunManifest start_manifest(const std::string& command, const ToolConfig& config,
                           const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command = command;
  m.config_digest = config_digest(config);
  for (const auto& path : inputs) {
    if (!path.empty()) m.inputs.emplace_back(path, file_sha256(path));
  }
  m.seed = config.pipeline.seed;
  m.started = utc_timestamp();
  return m;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

std::optional<std::set<PairKey>> load_subset(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const auto pairs = read_pair_list(path);
  return std::set<PairKey>(pairs.begin(), pairs.end());
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Reference-free scene-graph relation scoring and synthetic relation generation", "relscore"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CommonFlags common;
  BackendFlags backend;
  std::string dataset;
  std::string predictions;
  std::string subset_path;

  auto* score = app.add_subcommand("score", "Score predicted relations against groundtruth regions");
  score->add_option("--dataset", dataset, "Groundtruth dataset")->required();
  score->add_option("--predictions", predictions, "Predicted dataset (canonical format)")->required();
  score->add_option("--config", common.config, "JSON config file");
  score->add_option("--out", common.out, "Report path (stdout if omitted)");
  score->add_option("--subset", subset_path, "Restrict to the pairs in this pair list");
  add_dataset_flags(score, common);
  add_backend_flags(score, backend);

  std::size_t top_confusions = 20;
  auto* align = app.add_subcommand("align", "Rank groundtruth predicates among candidates (theta, precision)");
  align->add_option("--dataset", dataset, "Groundtruth dataset")->required();
  align->add_option("--config", common.config, "JSON config file");
  align->add_option("--out", common.out, "Report path (stdout if omitted)");
  align->add_option("--subset", subset_path, "Restrict to the pairs in this pair list");
  align->add_option("--top", top_confusions, "Confusions listed in the report");
  add_dataset_flags(align, common);
  add_backend_flags(align, backend);

  std::string kind = "ratio_low";
  double threshold = 0.2;
  std::size_t sample_size = 1000;
  auto* subset = app.add_subcommand("subset", "Build an ablation subset pair list");
  subset->add_option("--dataset", dataset, "Dataset")->required();
  subset->add_option("--kind", kind, "Subset kind")
      ->check(CLI::IsMember({"ratio_low", "ratio_high", "intersecting", "distant"}));
  subset->add_option("--threshold", threshold, "Ratio or separation threshold");
  subset->add_option("--n", sample_size, "Sample size");
  subset->add_option("--seed", common.seed, "Sampling seed");
  subset->add_option("--out", common.out, "Pair list path (stdout if omitted)");
  add_dataset_flags(subset, common);

  std::string ledger;
  std::string report_path;
  std::string artifacts;
  bool resume = false;
  bool dry_run = false;
  auto* generate = app.add_subcommand("generate", "Generate relations with region prompts");
  generate->add_option("--dataset", dataset, "Images with object boxes")->required();
  generate->add_option("--config", common.config, "JSON config file");
  generate->add_option("--seed", common.seed, "Pair sampling seed (overrides config)");
  generate->add_option("--out", common.out, "Output dataset path");
  generate->add_option("--ledger", ledger, "Ledger path (default: <out>.ledger.jsonl)");
  generate->add_option("--report", report_path, "Run summary path (stdout if omitted)");
  generate->add_option("--artifacts", artifacts, "Prompt artifact directory for --dry-run");
  generate->add_flag("--resume", resume, "Skip pairs already in the ledger");
  generate->add_flag("--dry-run", dry_run, "Render prompt artifacts without calling the model");
  add_dataset_flags(generate, common);
  add_backend_flags(generate, backend);

  std::string histogram_path;
  std::size_t top_k = 20;
  auto* stats = app.add_subcommand("stats", "Triplet and predicate statistics");
  stats->add_option("--dataset", dataset, "Dataset")->required();
  stats->add_option("--out", common.out, "Report path (stdout if omitted)");
  stats->add_option("--histogram", histogram_path, "Also write the histogram as TSV");
  stats->add_option("--top", top_k, "Rows in the top-predicate table");
  add_dataset_flags(stats, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kInputError;
  }

  try {
    if (score->parsed()) {
      const auto config = load_config(common);
      const auto gt = load_input(dataset, common);
      const auto pred = load_dataset(predictions, DatasetFormat::kCanonical);
      const auto pairs = load_subset(subset_path);
      auto stack = make_provider(backend);
      ImageStore images(image_root_for(common, dataset));
      auto manifest = start_manifest("score", config, {dataset, predictions, subset_path, common.config});
      manifest.backend = stack.identity;
      const auto report = score_predictions(pred, gt, *stack.provider, images, config.metrics, pairs);
      stack.persist();
      manifest.finished = utc_timestamp();
      emit(common.out, render_score_report(manifest, config, report));
    } else if (align->parsed()) {
      const auto config = load_config(common);
      const auto gt = load_input(dataset, common);
      const auto pairs = load_subset(subset_path);
      auto stack = make_provider(backend);
      ImageStore images(image_root_for(common, dataset));
      auto manifest = start_manifest("align", config, {dataset, subset_path, common.config});
      manifest.backend = stack.identity;
      const auto report = alignment_study(gt, *stack.provider, images, config.metrics, pairs);
      stack.persist();
      manifest.finished = utc_timestamp();
      emit(common.out, render_alignment_report(manifest, config, report, top_confusions));
    } else if (subset->parsed()) {
      const auto data = load_input(dataset, common);
      SubsetSpec spec;
      spec.kind = subset_kind_from_string(kind);
      spec.threshold = threshold;
      spec.sample_size = sample_size;
      spec.seed = common.seed.value_or(0);
      const auto pairs = build_subset(data, spec);
      if (common.out.empty() || common.out == "-") {
        for (const auto& p : pairs) std::cout << p.image_id << '\t' << p.subject_id << '\t' << p.object_id << '\n';
      } else {
        write_pair_list(common.out, pairs);
      }
    } else if (generate->parsed()) {
      const auto config = load_config(common);
      const auto images_in = load_input(dataset, common);
      if (!dry_run && common.out.empty()) throw InputError("generate needs --out unless --dry-run is given");
      if (dry_run && artifacts.empty()) throw InputError("--dry-run needs --artifacts DIR");
      GenerationOptions options;
      options.resume = resume;
      options.dry_run = dry_run;
      if (!artifacts.empty()) options.artifact_dir = artifacts;
      options.ledger_path = ledger.empty() ? (common.out.empty() ? "" : common.out + ".ledger.jsonl") : ledger;
      ImageStore store(image_root_for(common, dataset));
      std::shared_ptr<Provider> vlm;
      ProviderStack stack;
      if (dry_run) {
        vlm = std::make_shared<MockProvider>();
        stack.identity = "none (dry run)";
      } else {
        stack = make_provider(backend.backend == "mock" ? backend : [&] {
          auto b = backend;
          b.backend = "vlm";
          return b;
        }());
        vlm = stack.provider;
      }
      auto manifest = start_manifest("generate", config, {dataset, common.config});
      manifest.backend = stack.identity;
      const auto result = generate_dataset(images_in, *vlm, store, config.pipeline, options);
      stack.persist();
      if (!dry_run) save_dataset(result.dataset, common.out);
      manifest.finished = utc_timestamp();
      emit(report_path, render_generation_report(manifest, config, result));
    } else if (stats->parsed()) {
      const auto data = load_input(dataset, common);
      const ToolConfig config;
      auto manifest = start_manifest("stats", config, {dataset});
      const auto s = dataset_stats(data);
      if (!histogram_path.empty()) write_text_file(histogram_path, histogram_tsv(s));
      manifest.finished = utc_timestamp();
      emit(common.out, render_stats_report(manifest, s, top_k));
    }
  } catch (const InputError& e) {
    spdlog::error("input error: {}", e.what());
    return kInputError;
  } catch (const ProviderError& e) {
    spdlog::error("provider error: {}", e.what());
    return kProviderError;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternalError;
  }
  return kSuccess;
}

}  // namespace relscore::cli
