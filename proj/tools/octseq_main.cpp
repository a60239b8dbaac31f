#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "octseq/commands.hpp"

namespace {

using CommandFn = int (*)(const octseq::cli::RunConfig&);

struct Entry {
  const char* name;
  const char* help;
  CommandFn fn;
};

constexpr Entry kEntries[] = {
    {"synth", "Generate a synthetic labeled dataset and manifest",
     octseq::cli::cmd_synth},
    {"ingest", "Validate every volume listed in the manifest",
     octseq::cli::cmd_ingest},
    {"extract", "Run (and cache) per-slice feature extraction",
     octseq::cli::cmd_extract},
    {"train", "Train the sequence head on fold 0 of the subject split",
     octseq::cli::cmd_train},
    {"cv", "Subject-level k-fold cross-validation of the sequence head",
     octseq::cli::cmd_cv},
    {"sweep", "Grid search over head sizes, dropout, or loss settings",
     octseq::cli::cmd_sweep},
    {"ablate", "Alternative heads and baselines: lstm, resnet, svm",
     octseq::cli::cmd_ablate},
    {"explain", "Attention rollout heatmaps and embedding export",
     octseq::cli::cmd_explain},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric scan classification with a recurrent slice-"
               "sequence head"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = -1;
  std::string which;
  std::string grid;

  std::map<std::string, CommandFn> dispatch;
  for (const Entry& e : kEntries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", config_path, "JSON configuration file")
        ->required();
    sub->add_option("--set", overrides,
                    "Override a configuration key (dotted.path=value); "
                    "repeatable");
    sub->add_option("--jobs", jobs,
                    "Worker threads for feature extraction")
        ->check(CLI::Range(1, 512));
    if (std::string(e.name) == "ablate")
      sub->add_option("--which", which,
                      "Ablation to run: lstm, resnet, or svm");
    if (std::string(e.name) == "sweep")
      sub->add_option("--grid", grid,
                      "Grid to sweep: gru_sizes, dropout, or focal");
    dispatch[e.name] = e.fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    octseq::cli::RunConfig cfg = octseq::cli::load_config(config_path,
                                                          overrides);
    if (jobs > 0) cfg.jobs = jobs;
    if (!which.empty()) cfg.ablation = which;
    if (!grid.empty()) cfg.sweep.grid = grid;
    return dispatch.at(app.get_subcommands().front()->get_name())(cfg);
  } catch (const octseq::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const octseq::ExternalDependencyError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const octseq::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
