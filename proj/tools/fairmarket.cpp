// fairmarket: command-line front end for the quality-priced data market.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fairmarket/error.hpp"
#include "fairmarket/simharness.hpp"

using namespace fairmarket;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIOFailure, "cannot write " + path);
  out << text;
}

MarketSetup setup_from(const std::string& config, double scale, std::uint64_t seed) {
  if (config.empty()) return desk_setup(scale, seed);
  const auto c = load_market_config(config);
  return materialize(c, std::filesystem::path(config).parent_path());
}

json profile_json(const QualityProfile& p) {
  return {{"K", p.k},
          {"violationRates", p.violationRates},
          {"nAc", p.nAc},
          {"nMis", p.nMis},
          {"nExp", p.nExp},
          {"nVio", p.nVio},
          {"rows", p.rows},
          {"cellTotal", p.cellTotal},
          {"timestampAttrs", p.timestampAttrCount},
          {"coveredNecessary", p.coveredNecessary}};
}

void print_guide(const CleaningCostModel& model) {
  std::printf("Weight ranges and the cleaning effort they assume\n\n");
  for (auto a : kAspects) {
    std::printf("%s\n", to_string(a));
    for (const auto& l : model.levels(a))
      std::printf("  w in [%.2f, %.2f%c  cost %-5.2g %s\n", l.lo, l.hi, l.hi == 1.0 ? ']' : ')', l.cost,
                  l.method.c_str());
  }
  std::printf("\nPut more weight on an aspect when you cannot afford to clean it yourself.\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality-driven data market engine and simulator"};
  app.require_subcommand(1);

  std::string config;
  auto* assess = app.add_subcommand("assess", "Score every dataset of a market config");
  assess->add_option("config", config, "Market config JSON")->required()->check(CLI::ExistingFile);

  std::string user = "buyer", query, weights = "0.25,0.25,0.25,0.25";
  auto* quote = app.add_subcommand("quote", "Request a quote over the protocol");
  quote->add_option("config", config, "Market config JSON")->required()->check(CLI::ExistingFile);
  quote->add_option("--user", user, "Buyer name");
  quote->add_option("--query", query, "relation:attr<op>literal,...[|col,...]")->required();
  quote->add_option("--weights", weights, "w1,w2,w3,w4 (accuracy, completeness, timeliness, consistency)");

  std::string transcriptOut;
  auto* demo = app.add_subcommand("demo", "Replay the Alice/Bob walkthrough on the toy group");
  demo->add_option("--transcript", transcriptOut, "Write the message transcript (JSON lines)");

  std::string kind, out, histOut;
  std::size_t trials = 0, steps = 10, cells = 0, replicas = 2000;
  std::uint64_t seed = 7;
  double scale = 1.0;
  bool leak = false;
  auto* exp = app.add_subcommand("exp", "Run an experiment");
  exp->add_option("kind", kind, "timing | distribution | mistakes | cheat | threshold")
      ->required()
      ->check(CLI::IsMember({"timing", "distribution", "mistakes", "cheat", "threshold"}));
  exp->add_option("--config", config, "Market config JSON (default: generated desk datasets)");
  exp->add_option("--scale", scale, "Row scale for generated desk datasets");
  exp->add_option("--trials", trials, "Trials (distribution 200, cheat 500)");
  exp->add_option("--seed", seed, "Experiment seed");
  exp->add_option("--steps", steps, "Mistakes: corruption rounds");
  exp->add_option("--cells", cells, "Mistakes: cells per round (default 0.1% of cells)");
  exp->add_option("--replicas", replicas, "Threshold: bootstrap replicas");
  exp->add_flag("--leak", leak, "Cheat: leak plaintext prices to the adversary");
  exp->add_option("--out", out, "Write the report JSON here");
  exp->add_option("--histogram-csv", histOut, "Distribution: write histogram bins as CSV");
  exp->add_option("--transcript", transcriptOut, "Write the message transcript (JSON lines)");

  auto* guide = app.add_subcommand("guide", "Print weight-range advice");
  guide->add_option("config", config, "Market config JSON (default cost model otherwise)");

  std::string dir;
  auto* gen = app.add_subcommand("gen-desk", "Write the generated desk datasets and a config");
  gen->add_option("dir", dir, "Output directory")->required();
  gen->add_option("--scale", scale, "Row scale");
  gen->add_option("--seed", seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*assess) {
      const auto setup = setup_from(config, scale, seed);
      const MarketManager mms(setup);
      json j{{"standard", mms.params().standard}, {"datasets", json::array()}};
      for (std::size_t i = 0; i < setup.datasets.size(); ++i)
        j["datasets"].push_back({{"name", setup.datasets[i].relation.name()}, {"profile", profile_json(mms.profiles()[i])}});
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*quote) {
      Marketplace market(setup_from(config, scale, seed));
      auto& b = market.add_buyer(user);
      const auto q = market.request_quote(b, query, WeightVector::parse(weights));
      market.decline(b, q);
      json j{{"user", user},
             {"query", query},
             {"priceRange", {{"lo", q.range.lo}, {"hi", q.range.hi}}},
             {"priceCipher", q.priceCipher.hex()}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*demo) {
      const auto r = run_protocol_demo(demo_setup());
      for (const auto& c : r.checks)
        std::printf("%-4s %-36s expected %-10s got %s\n", c.pass ? "ok" : "FAIL", c.name.c_str(), c.expected.c_str(),
                    c.actual.c_str());
      std::printf("%-4s transcript audit: %zu messages, %zu leaks, %zu/%zu records verified\n",
                  r.audit.clean() ? "ok" : "FAIL", r.audit.messages, r.audit.leaks, r.audit.verifyPassed,
                  r.audit.records);
      if (!transcriptOut.empty()) write_file(transcriptOut, r.transcript);
      return r.ok() ? 0 : 1;
    }
    if (*exp) {
      const auto setup = setup_from(config, scale, seed);
      if (kind == "threshold") {
        const std::size_t n = trials ? trials : 500;
        const double t = cheat_null_threshold(setup, n, replicas, 0.05, seed);
        json j{{"trials", n}, {"replicas", replicas}, {"alpha", 0.05}, {"seed", seed}, {"scale", scale},
               {"threshold", t}};
        if (!out.empty()) write_file(out, j.dump(2) + "\n");
        std::cout << j.dump(2) << '\n';
        return 0;
      }
      ExperimentReport r;
      bool ok = true;
      if (kind == "timing") {
        r = run_timing(setup);
      } else if (kind == "distribution") {
        r = run_distribution(setup, trials ? trials : 200, seed);
      } else if (kind == "mistakes") {
        std::size_t perStep = cells;
        if (perStep == 0) {
          std::size_t total = 0;
          for (const auto& d : setup.datasets) total += d.relation.cell_total();
          perStep = std::max<std::size_t>(4, total / setup.datasets.size() / 1000);
        }
        r = run_mistakes(setup, steps, perStep, seed);
        for (const auto& m : r.mistakes) ok = ok && m.nonIncreasing;
      } else {
        CheatOptions opt;
        opt.leak = leak;
        r = run_cheat(setup, trials ? trials : 500, seed, opt);
      }
      if (r.audit) ok = ok && r.audit->clean();
      const auto j = to_json(r);
      if (!out.empty()) write_file(out, j.dump(2) + "\n");
      if (!histOut.empty()) write_file(histOut, histogram_csv(r));
      if (!transcriptOut.empty()) write_file(transcriptOut, r.transcript);
      if (out.empty()) std::cout << j.dump(2) << '\n';
      return ok ? 0 : 1;
    }
    if (*guide) {
      print_guide(config.empty() ? CleaningCostModel::standard() : load_market_config(config).costModel);
      return 0;
    }
    if (*gen) {
      write_market(desk_setup(scale, seed), dir, "test");
      std::printf("wrote %s/config.json\n", dir.c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
