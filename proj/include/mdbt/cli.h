#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mdbt/eval.h"

namespace mdbt {

// Subcommands: synth, train-shared, specialize, train-ensemble, eval, curve.
// Returns 0 on success, 1 for invalid input or configuration and 2 for
// numeric failures during training.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

// Data directories hold <domain>.ontology.json and <domain>.{train,dev,test}.json.
std::filesystem::path ontology_path(const std::filesystem::path& dir, const std::string& domain);
std::filesystem::path split_path(const std::filesystem::path& dir, const std::string& domain, const std::string& split);
DomainSplit load_domain(const std::filesystem::path& dir, const std::string& domain);

}  // namespace mdbt
