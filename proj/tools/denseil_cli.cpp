#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "denseil/checkpoint.hpp"
#include "denseil/config.hpp"
#include "denseil/data.hpp"
#include "denseil/harness.hpp"
#include "denseil/metrics.hpp"
#include "denseil/stats_error.hpp"

namespace fs = std::filesystem;
using namespace denseil;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kIo = 3 };

std::vector<int> parse_values(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

RunConfig config_beside(const fs::path& checkpoint) {
  return RunConfig::load(checkpoint.parent_path() / "config.txt");
}

void write_out(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string schema_help() {
  std::string out = "Config keys (key = value, # comments):\n";
  for (const auto& k : config_schema()) out += "  " + k.key + "  " + k.help + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DenseIL video re-identification on a synthetic corpus"};
  app.footer(schema_help());
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, tracklet, axis, values;
  bool self_match = false;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  gen->add_option("--config", config_path, "run config")->required();
  gen->add_option("--out", out_path, "corpus directory")->required();

  auto* train = app.add_subcommand("train", "train and evaluate one run");
  train->add_option("--config", config_path, "run config")->required();
  train->add_option("--data", data_dir, "corpus directory")->required();
  train->add_option("--out", out_path, "run directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (reads config.txt beside it)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "corpus directory")->required();
  eval->add_option("--out", out_path, "also write the metric CSV here");
  eval->add_flag("--allow-self-match", self_match,
                 "sanity mode: gallery = query set, same-camera matches kept");

  auto* abl = app.add_subcommand("ablate", "train one run per setting along an axis");
  abl->add_option("--config", config_path, "base run config")->required();
  abl->add_option("--axis", axis, "fusion | variant | dense_sources | R | d | P")->required();
  abl->add_option("--data", data_dir, "corpus directory")->required();
  abl->add_option("--out", out_path, "output directory")->required();
  abl->add_option("--values", values, "comma-separated values for R, d or P");

  auto* dump = app.add_subcommand("dump-attn", "write attention maps of one tracklet as CSV");
  dump->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  dump->add_option("--tracklet", tracklet, "tracklet file")->required();
  dump->add_option("--out", out_path, "output CSV")->required();

  auto* flops = app.add_subcommand("flops", "print the decoder multiply-add estimate");
  flops->add_option("--config", config_path, "run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      const auto cfg = RunConfig::load(config_path);
      save_corpus(out_path, generate_dataset(cfg.data));
      std::cout << "wrote corpus to " << out_path << "\n";
    } else if (*train) {
      const auto cfg = RunConfig::load(config_path);
      const auto data = load_corpus(data_dir);
      const auto result = train_run(cfg, data, fs::path(out_path));
      std::cout << metrics_csv(result.report.metrics);
    } else if (*eval) {
      const auto cfg = config_beside(checkpoint);
      const auto data = load_corpus(data_dir);
      Model model = load_model(cfg, checkpoint);
      EvalOptions opts;
      opts.self_match = self_match;
      if (self_match) std::cerr << "note: self-match sanity mode, not a real evaluation\n";
      const auto csv = metrics_csv(evaluate(model, data, opts));
      std::cout << csv;
      if (!out_path.empty()) write_out(out_path, csv);
    } else if (*abl) {
      const auto cfg = RunConfig::load(config_path);
      const auto data = load_corpus(data_dir);
      const auto rows = ablate(cfg, parse_axis(axis), data, parse_values(values), fs::path(out_path));
      std::cout << ablation_csv(rows);
    } else if (*dump) {
      const auto cfg = config_beside(checkpoint);
      Model model = load_model(cfg, checkpoint);
      write_out(out_path, attention_csv(model, read_tracklet(tracklet)));
    } else if (*flops) {
      const auto cfg = RunConfig::load(config_path);
      const auto est = estimate_decoder_flops(cfg.decoder, cfg.train.chunks, cfg.parts,
                                              cfg.encoder.channels);
      std::cout << "component,macs\n"
                << "per_block," << est.per_block << "\n"
                << "blocks," << est.blocks << "\n"
                << "adapters," << est.adapters << "\n"
                << "total," << est.total() << "\n";
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const MissingStatisticsError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
