#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "safesig/types.hpp"

namespace safesig {

// Line-oriented dataset file, one flat JSON record per line:
//   {"id": "a1", "kind": "prompt", "ids": [0,3], "tokens": ["hi","there"],
//    "label": 0, "split": "train"}
// `kind` selects the payload group: prompt/text records carry ids (token
// texts optional), feature records carry a numeric array.
LabeledDataset load_dataset(const std::filesystem::path& path,
                            std::optional<PayloadKind> expected_kind = std::nullopt);

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

// Stratified split by label. Per-stratum largest-remainder allocation keeps
// label proportions within one sample of the requested fractions; the
// shuffle is a pure function of the seed.
std::array<LabeledDataset, 3> split_dataset(const LabeledDataset& ds,
                                            const std::array<double, 3>& fractions,
                                            std::uint64_t seed);

}  // namespace safesig
