/*
 * Copyright 2026 The semshap Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// semshap: explain image captions with Shapley values over semantic features.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "semshap/analysis.hpp"
#include "semshap/error.hpp"
#include "semshap/model.hpp"
#include "semshap/pipeline.hpp"
#include "semshap/record.hpp"

namespace {

namespace fs = std::filesystem;
using namespace semshap;

// Raw flag values, converted once CLI11 has parsed them.
struct ExplainFlags {
  std::string image;
  std::string manifest;
  std::string model;
  std::string question;
  std::string features = "dff";
  int k = 10;
  double theta = 0.5;
  double band_threshold = 0.5;
  std::string grid = "4x4";
  std::string activations;
  std::string disjoint = "none";
  std::string sampler;
  std::int64_t budget = 2048;
  std::uint64_t seed = 0;
  std::string weighting = "kernel";
  std::string baseline = "black";
  std::string embedder = "auto";
  std::string render = "intensity";
  int threads = 0;
  int nmf_iter = 200;
  double nmf_tol = 1e-4;
  std::string out;
};

void AddPipelineFlags(CLI::App* cmd, ExplainFlags& f) {
  cmd->add_option("--model", f.model, "External model command, or oracle:<config.json>")
      ->required();
  cmd->add_option("--question", f.question, "Question sent with every caption request");
  cmd->add_option("--features", f.features, "dff | vit | superpixel | masks:<path>");
  cmd->add_option("--k", f.k, "Number of DFF concepts");
  cmd->add_option("--theta", f.theta, "DFF binarization threshold (relative to max)");
  cmd->add_option("--band-threshold", f.band_threshold, "ViT patch selection threshold");
  cmd->add_option("--grid", f.grid, "Superpixel grid, RxC");
  cmd->add_option("--activations", f.activations, "Raw activation file to use for DFF");
  cmd->add_option("--disjoint", f.disjoint, "none | lowest | random")
      ->check(CLI::IsMember({"none", "lowest", "random"}));
  cmd->add_option("--baseline", f.baseline, "black | mean | blur:R");
  cmd->add_option("--embedder", f.embedder, "auto | hashed | model")
      ->check(CLI::IsMember({"auto", "hashed", "model"}));
  cmd->add_option("--threads", f.threads, "Concurrent game evaluations (0 = all cores)");
  cmd->add_option("--nmf-iter", f.nmf_iter, "NMF iteration cap");
  cmd->add_option("--nmf-tol", f.nmf_tol, "NMF relative improvement tolerance");
  cmd->add_option("--seed", f.seed, "Seed for Monte Carlo sampling and random tie-breaks");
}

std::pair<int, int> ParseGrid(const std::string& text) {
  int rows = 0, cols = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &rows, &x, &cols, &extra) != 3 ||
      (x != 'x' && x != 'X')) {
    throw ConfigError("expected a size like 3x4, got '" + text + "'");
  }
  return {rows, cols};
}

PipelineOptions ToPipelineOptions(const ExplainFlags& f) {
  PipelineOptions o;
  o.features.method = f.features;
  o.features.k = f.k;
  o.features.theta = f.theta;
  o.features.band_threshold = f.band_threshold;
  std::tie(o.features.grid_rows, o.features.grid_cols) = ParseGrid(f.grid);
  if (!f.activations.empty()) o.features.activations = f.activations;
  o.features.disjoint = f.disjoint;
  o.features.disjoint_seed = f.seed;
  o.features.nmf.max_iter = f.nmf_iter;
  o.features.nmf.tol = f.nmf_tol;
  o.features.nmf.seed = f.seed;
  if (!f.sampler.empty()) o.explain.sampler = ParseSampler(f.sampler);
  o.explain.budget = f.budget;
  o.explain.seed = f.seed;
  if (f.weighting == "uniform") {
    o.explain.weighting = MonteCarloWeighting::kUniform;
  } else if (f.weighting != "kernel") {
    throw ConfigError("unknown Monte Carlo weighting '" + f.weighting + "'");
  }
  o.explain.threads = f.threads;
  o.game.baseline = Baseline::Parse(f.baseline);
  o.embedder = f.embedder;
  if (!f.question.empty()) o.question = f.question;
  o.render = ParseRenderMode(f.render);
  return o;
}

std::vector<fs::path> ManifestImages(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot read manifest " + manifest.string());
  std::vector<fs::path> images;
  for (std::string line; std::getline(in, line);) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto end = line.find_last_not_of(" \t\r");
    fs::path p = line.substr(start, end - start + 1);
    if (p.is_relative()) p = manifest.parent_path() / p;
    images.push_back(p);
  }
  if (images.empty()) throw InputError("manifest " + manifest.string() + " lists no images");
  return images;
}

int RunExplain(const ExplainFlags& f) {
  const PipelineOptions options = ToPipelineOptions(f);
  if (f.image.empty() == f.manifest.empty()) {
    throw ConfigError("give exactly one of --image or --manifest");
  }
  // Read inputs before starting a model process.
  std::vector<std::pair<fs::path, Image>> jobs;
  if (!f.image.empty()) {
    jobs.emplace_back(fs::path(f.out), ReadPng(f.image));
  } else {
    int index = 0;
    for (const auto& path : ManifestImages(f.manifest)) {
      const std::string name = std::to_string(index++) + "_" + path.stem().string();
      jobs.emplace_back(fs::path(f.out) / name, ReadPng(path));
    }
  }
  const auto model = OpenModel(f.model);
  for (const auto& [out, image] : jobs) {
    ExplainResult result = ExplainImage(*model, image, options);
    result.record.image = f.image.empty() ? out.filename().string() : f.image;
    WriteExplainOutputs(out, result);
    const Explanation& e = result.record.explanation;
    std::cout << out.string() << ": M=" << e.num_features() << " sampler="
              << SamplerName(e.sampler) << " budget=" << e.budget
              << " caption=\"" << result.record.reference_caption << "\""
              << " residual=" << e.EfficiencyResidual() << "\n";
  }
  return 0;
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("not an integer list: '" + text + "'");
    }
  }
  return out;
}

void WriteText(const fs::path& path, const std::string& text) {
  WriteBinaryFile(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

int RunSamplingError(const ExplainFlags& f, const std::string& budgets, int runs) {
  if (f.image.empty()) throw ConfigError("sampling-error needs --image");
  PipelineOptions options = ToPipelineOptions(f);
  const Image image = ReadPng(f.image);
  const auto model = OpenModel(f.model);
  const FeatureSet features = BuildFeatures(*model, image, options.features);
  auto embedder = MakeEmbedder(*model, options.embedder);
  options.game.embedder = embedder->name();
  SentenceGame game(*model, image, features, options.game, embedder, options.question);

  SamplingErrorOptions experiment;
  for (int b : ParseIntList(budgets)) experiment.budgets.push_back(b);
  experiment.runs = runs;
  experiment.seed = f.seed;
  experiment.threads = f.threads;
  const ErrorReport report = SamplingErrorExperiment(game.AsGame(), features.num_features(),
                                                     experiment);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  fs::create_directories(f.out);
  WriteText(fs::path(f.out) / "error.csv", report.ToCsv());
  WriteText(fs::path(f.out) / "error.json", report.ToJson().dump(2) + "\n");
  std::cout << report.ToCsv();
  return 0;
}

int RunNormalize(const std::string& record_path, double p) {
  const ExplanationRecord record = ExplanationRecord::Load(record_path);
  const NormalizedAttributions n =
      NormalizeByAreas(record.explanation, record.feature_areas, record.image_dims.pixels());
  const nlohmann::json out = {
      {"phi", record.explanation.phi},
      {"phi_normalized", n.explanation.phi},
      {"coverage", n.coverage},
      {"efficiency_preserved", false},
      {"rbo", CompareRankings(record.explanation.phi, n.explanation.phi, p).ToJson()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int RunRbo(const std::string& a, const std::string& b, double p) {
  std::cout.precision(17);
  std::cout << Rbo(ParseIntList(a), ParseIntList(b), p) << "\n";
  return 0;
}

int RunPaintOracle(const std::string& config_path, const std::string& size,
                   const std::string& out) {
  const auto [h, w] = ParseGrid(size);
  WritePng(out, PaintOracleScene(RegionOracleConfig::Load(config_path), {h, w}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley-value explanations for image captioning models"};
  app.require_subcommand(1);

  ExplainFlags explain;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Explain the caption of an image");
  explain_cmd->add_option("--image", explain.image, "Input PNG");
  explain_cmd->add_option("--manifest", explain.manifest, "File listing one PNG per line");
  AddPipelineFlags(explain_cmd, explain);
  explain_cmd->add_option("--sampler", explain.sampler, "exact | priority | montecarlo")
      ->required()
      ->check(CLI::IsMember({"exact", "priority", "montecarlo"}));
  explain_cmd->add_option("--budget", explain.budget, "Proper coalitions to evaluate");
  explain_cmd->add_option("--mc-weighting", explain.weighting, "kernel | uniform")
      ->check(CLI::IsMember({"kernel", "uniform"}));
  explain_cmd->add_option("--render", explain.render, "intensity | flat")
      ->check(CLI::IsMember({"intensity", "flat"}));
  explain_cmd->add_option("--out", explain.out, "Output directory")->required();

  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Post-hoc analyses");
  analyze_cmd->require_subcommand(1);

  std::string rbo_a, rbo_b;
  double rbo_p = kDefaultRboP;
  CLI::App* rbo_cmd = analyze_cmd->add_subcommand("rbo", "Rank-biased overlap of two rankings");
  rbo_cmd->add_option("--a", rbo_a, "Comma-separated ranking")->required();
  rbo_cmd->add_option("--b", rbo_b, "Comma-separated ranking")->required();
  rbo_cmd->add_option("--p", rbo_p, "Persistence");

  std::string record_path;
  double normalize_p = kDefaultRboP;
  CLI::App* normalize_cmd =
      analyze_cmd->add_subcommand("normalize", "Size-normalized attributions of a record");
  normalize_cmd->add_option("--record", record_path, "record.json")->required();
  normalize_cmd->add_option("--p", normalize_p, "RBO persistence");

  ExplainFlags sampling;
  std::string budgets;
  int runs = 10;
  CLI::App* sampling_cmd = analyze_cmd->add_subcommand(
      "sampling-error", "Priority vs Monte Carlo error against exact Kernel SHAP");
  sampling_cmd->add_option("--image", sampling.image, "Input PNG")->required();
  AddPipelineFlags(sampling_cmd, sampling);
  sampling_cmd->add_option("--budgets", budgets,
                           "Comma-separated, decreasing (default 2^(M-1),2^(M-2),2^(M-3))");
  sampling_cmd->add_option("--runs", runs, "Monte Carlo runs per budget");
  sampling_cmd->add_option("--out", sampling.out, "Output directory")->required();

  std::string paint_config, paint_size = "64x64", paint_out;
  CLI::App* paint_cmd =
      app.add_subcommand("paint-oracle", "Render a scene in which every oracle region fires");
  paint_cmd->add_option("--config", paint_config, "Oracle config JSON")->required();
  paint_cmd->add_option("--size", paint_size, "HxW");
  paint_cmd->add_option("--out", paint_out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ExitCodeFor(ErrorKind::kConfig);
  }

  try {
    if (explain_cmd->parsed()) return RunExplain(explain);
    if (rbo_cmd->parsed()) return RunRbo(rbo_a, rbo_b, rbo_p);
    if (normalize_cmd->parsed()) return RunNormalize(record_path, normalize_p);
    if (sampling_cmd->parsed()) return RunSamplingError(sampling, budgets, runs);
    if (paint_cmd->parsed()) return RunPaintOracle(paint_config, paint_size, paint_out);
  } catch (const Error& e) {
    std::cerr << "semshap: " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "semshap: " << e.what() << "\n";
    return ExitCodeFor(ErrorKind::kInput);
  }
  return 0;
}
