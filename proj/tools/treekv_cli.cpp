// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: gen-weights, decode, prefill, map, analyze, compare.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treekv/treekv.hpp"

namespace {

using treekv::RunConfig;

// Optional per-field overrides layered over the config file.
struct Overrides {
  std::optional<std::string> config_path;
#define TREEKV_OPT(name) std::optional<decltype(RunConfig::name)> name;
  TREEKV_CONFIG_FIELDS(TREEKV_OPT)
#undef TREEKV_OPT
};

std::string flag_name(std::string field) {
  for (char& c : field) {
    if (c == '_') c = '-';
  }
  return "--" + field;
}

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON run config");
#define TREEKV_FLAG(name) app->add_option(flag_name(#name), o.name, "override config field " #name);
  TREEKV_CONFIG_FIELDS(TREEKV_FLAG)
#undef TREEKV_FLAG
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw treekv::InputError("cannot open '" + path + "'");
  return in;
}

RunConfig resolve(const Overrides& o, const std::optional<std::string>& path) {
  RunConfig c;
  if (path) {
    auto in = open_in(*path);
    c = treekv::load_config(in);
  }
#define TREEKV_APPLY(name) \
  if (o.name) c.name = *o.name;
  TREEKV_CONFIG_FIELDS(TREEKV_APPLY)
#undef TREEKV_APPLY
  return c;
}

// Writes to `path`, or stdout when empty. Output goes through a buffer so a
// failed command never leaves a partial file behind.
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
  std::ostringstream buffer;
  fn(static_cast<std::ostream&>(buffer));
  if (path.empty()) {
    std::cout << buffer.str();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw treekv::InputError("cannot write '" + path + "'");
  out << buffer.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TreeKV cache eviction toolkit"};
  app.require_subcommand(1);

  Overrides gen_o;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-weights", "write a seeded weight file");
  add_config_flags(gen, gen_o);
  gen->add_option("--out", gen_out, "weight file path")->required();

  Overrides dec_o;
  std::string dec_out, dec_weights, dec_tokens;
  auto* dec = app.add_subcommand("decode", "decode with an eviction policy, write a trace");
  add_config_flags(dec, dec_o);
  dec->add_option("--weights", dec_weights, "weight file (default: generated from seed)");
  dec->add_option("--tokens", dec_tokens, "token JSON file (default: seeded stream)");
  dec->add_option("--out", dec_out, "trace path (default: stdout)");

  Overrides pre_o;
  std::string pre_out, pre_prompt;
  auto* pre = app.add_subcommand("prefill", "block-level prompt compression");
  add_config_flags(pre, pre_o);
  pre->add_option("--prompt", pre_prompt, "prompt JSON file (ids, embeddings or observation)");
  pre->add_option("--out", pre_out, "output path (default: stdout)");

  std::string map_trace, map_out;
  auto* map = app.add_subcommand("map", "token distribution map from a trace");
  map->add_option("--trace", map_trace, "trace file")->required();
  map->add_option("--out", map_out, "CSV path (default: stdout)");

  std::vector<std::string> ana_traces;
  std::string ana_out;
  std::optional<std::size_t> ana_levels, ana_exclude;
  auto* ana = app.add_subcommand("analyze", "wavelet magnitude profile of traces");
  ana->add_option("--trace", ana_traces, "trace file(s)")->required();
  ana->add_option("--levels", ana_levels, "decomposition levels (default: trace config)");
  ana->add_option("--exclude", ana_exclude, "positions dropped at each end (default: trace config)");
  ana->add_option("--out", ana_out, "CSV path (default: stdout)");

  Overrides cmp_o;
  std::vector<std::string> cmp_configs;
  std::vector<std::string> cmp_policies;
  std::string cmp_out;
  auto* cmp = app.add_subcommand("compare", "compare policies on one model and stream");
  cmp->add_option("configs", cmp_configs, "config files; the first is the overlap reference");
  add_config_flags(cmp, cmp_o);
  cmp->add_option("--policies", cmp_policies, "policies run over --config")->delimiter(',');
  cmp->add_option("--out", cmp_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(treekv::ExitCode::kConfig);
  }

  try {
    if (*gen) {
      const RunConfig c = resolve(gen_o, gen_o.config_path);
      const auto w = treekv::generate_weights(c.seed, c.dims());
      emit(gen_out, [&](std::ostream& out) { treekv::write_weights(out, w); });
    } else if (*dec) {
      const RunConfig c = resolve(dec_o, dec_o.config_path);
      treekv::validate(c);
      treekv::ModelWeights w;
      if (dec_weights.empty()) {
        w = treekv::weights_for(c);
      } else {
        auto in = open_in(dec_weights);
        w = treekv::read_weights(in);
      }
      std::optional<treekv::TokenStream> tokens;
      if (!dec_tokens.empty()) {
        auto in = open_in(dec_tokens);
        tokens = treekv::load_tokens(in);
      }
      emit(dec_out, [&](std::ostream& out) { treekv::cmd_decode(c, w, tokens, out); });
    } else if (*pre) {
      const RunConfig c = resolve(pre_o, pre_o.config_path);
      std::optional<treekv::Json> prompt;
      if (!pre_prompt.empty()) {
        auto in = open_in(pre_prompt);
        try {
          prompt = treekv::Json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw treekv::InputError(std::string("prompt is not valid JSON: ") + e.what());
        }
      }
      emit(pre_out, [&](std::ostream& out) { treekv::cmd_prefill(c, prompt, out); });
    } else if (*map) {
      auto in = open_in(map_trace);
      emit(map_out, [&](std::ostream& out) { treekv::cmd_distribution_map(in, out); });
    } else if (*ana) {
      std::vector<std::unique_ptr<std::ifstream>> files;
      std::vector<std::istream*> streams;
      for (const auto& path : ana_traces) {
        files.push_back(std::make_unique<std::ifstream>(open_in(path)));
        streams.push_back(files.back().get());
      }
      std::size_t levels = 0;
      std::size_t exclude = 0;
      if (!ana_levels || !ana_exclude) {
        auto in = open_in(ana_traces.front());
        const auto t = treekv::read_trace(in);
        levels = t.config.levels;
        exclude = t.config.exclude;
      }
      if (ana_levels) levels = *ana_levels;
      if (ana_exclude) exclude = *ana_exclude;
      emit(ana_out, [&](std::ostream& out) { treekv::cmd_analyze(streams, levels, exclude, out); });
    } else if (*cmp) {
      std::vector<RunConfig> configs;
      for (const auto& path : cmp_configs) configs.push_back(resolve(cmp_o, path));
      if (!cmp_policies.empty()) {
        if (!configs.empty()) {
          throw treekv::ConfigError("use either config files or --policies, not both");
        }
        const RunConfig base = resolve(cmp_o, cmp_o.config_path);
        for (const auto& p : cmp_policies) {
          RunConfig c = base;
          c.policy = p;
          configs.push_back(c);
        }
      }
      emit(cmp_out, [&](std::ostream& out) { treekv::cmd_compare(configs, out); });
    }
  } catch (const treekv::Error& e) {
    std::cerr << "treekv: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "treekv: internal error: " << e.what() << '\n';
    return static_cast<int>(treekv::ExitCode::kInternal);
  }
  return 0;
}
