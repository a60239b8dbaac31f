#pragma once

#include "octseq/run_config.hpp"

namespace octseq::cli {

// Each command writes its artifacts plus a config echo under
// out_dir/<run-id>/ and returns 0 on success; error exit codes are mapped
// from the exception taxonomy by the binary's entry point.
int cmd_ingest(const RunConfig& cfg);
int cmd_extract(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_cv(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_explain(const RunConfig& cfg);
int cmd_synth(const RunConfig& cfg);

}  // namespace octseq::cli
