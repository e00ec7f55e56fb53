#pragma once

#include "lf/baselines.hpp"
#include "lf/net.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lf {

// LFTC container layout:
//   bytes 0-3  magic "LFTC"
//   byte  4    version (1)
//   bytes 5-8  manifest byte length, little-endian u32
//   manifest   JSON: {"entries": [...], "loss": "..."}
//   payload    packed little-endian IEEE-754 tensors, row-major
// Entries are canonically sorted by (layer_index, role, name) with role order
// weight < bias < mask < codebook; byte offsets are relative to the payload.

enum class TensorRole { weight, bias, mask, codebook };

std::string role_name(TensorRole r);
TensorRole role_from_name(const std::string& name);

struct TensorEntry {
    std::string name;
    std::string dtype = "f64"; // f64 | f32
    std::vector<std::size_t> shape;
    TensorRole role = TensorRole::weight;
    int layer_index = 0;
    std::string activation; // empty for non-weight entries
    std::vector<double> values;

    std::size_t element_count() const;
};

struct TensorContainer {
    std::string loss = "mse";
    std::vector<TensorEntry> entries;
};

void save_container(const TensorContainer& c, const std::string& path);
TensorContainer load_container(const std::string& path);

TensorContainer container_from_model(const NetworkModel& model);
NetworkModel model_from_container(const TensorContainer& c);

void save_model(const NetworkModel& model, const std::string& path);
NetworkModel load_model(const std::string& path);

/// Attach auxiliary tensors produced by the baseline compressors.
void append_mask(TensorContainer& c, const PruneMask& mask);
void append_codebook(TensorContainer& c, const Codebook& codebook);

/// Write via a temp file + rename so failed runs leave no partial output.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

} // namespace lf
