#pragma once

#include <filesystem>

#include "zsdgen/models.hpp"

namespace zsdgen {

// Model checkpoints: a text header of `key value` lines ending with
// `params N`, followed by N little-endian IEEE-754 doubles. Blocks are
// written in each model's tensors() order; the semantic classifier appends
// its attached semantics matrix (d x K, row-major) after w_fc and b_fc.
//
//   zsdgen-checkpoint 1
//   kind generator
//   sem_dim 8
//   ...
//   params 3168
//   <binary payload>

void save_generator(const GeneratorParams& g, const std::filesystem::path& path);
GeneratorParams load_generator(const std::filesystem::path& path);

void save_critic(const CriticParams& c, const std::filesystem::path& path);
CriticParams load_critic(const std::filesystem::path& path);

void save_classifier_head(const ClassifierHead& h, const std::filesystem::path& path);
ClassifierHead load_classifier_head(const std::filesystem::path& path);

void save_semantic_classifier(const SemanticClassifier& sc, const std::filesystem::path& path);
SemanticClassifier load_semantic_classifier(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace zsdgen
