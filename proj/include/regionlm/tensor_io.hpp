#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "regionlm/tensor.hpp"

namespace regionlm {

// Flat binary tensor container, used for golden files and weight dumps.
//
// Tensor blob:   magic "RLTENSR1" (8 bytes), rank as u64 LE, dims as u64 LE,
//                data as f64 LE, row-major.
// Weight bundle: magic "RLWEGHT1" (8 bytes), section count as u64 LE, then
//                per section: name length u64 LE, name bytes, tensor blob.
// Sections are written in lexicographic name order so bundles are
// byte-stable.

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

using WeightMap = std::map<std::string, Tensor>;

void save_weights(const std::string& path, const WeightMap& weights);
WeightMap load_weights(const std::string& path);

}  // namespace regionlm
