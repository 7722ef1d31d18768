#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpl {

// Raw classifier outputs, one row per example. Stored as binary32 to match
// the on-disk container exactly, so save followed by load reproduces the
// matrix bit for bit. All score arithmetic happens downstream in double.
struct LogitMatrix {
  std::size_t n = 0;  // examples
  std::size_t k = 0;  // classes, >= 2
  std::vector<float> values;  // row-major, n * k entries, all finite

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * k, k};
  }
  // Throws std::invalid_argument when shape or finiteness is violated.
  void validate() const;

  bool operator==(const LogitMatrix&) const = default;
};

// Softmax outputs, one probability vector per row. Rows are nonnegative and
// sum to 1 up to roundoff.
struct ProbabilityMatrix {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> values;  // row-major

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * k, k};
  }
  void validate() const;
};

// Logits paired with integer labels in [0, k).
struct LabeledDataset {
  LogitMatrix logits;
  std::vector<std::uint32_t> labels;

  std::size_t n() const { return logits.n; }
  std::size_t k() const { return logits.k; }
  void validate() const;

  bool operator==(const LabeledDataset&) const = default;
};

struct SplitResult {
  LabeledDataset part_a;
  LabeledDataset part_b;
};

// Text import: one example per line, k logit columns then an integer label
// column. An optional single header line is skipped when its first field is
// not numeric. Parsing is locale-independent; errors report 1-based line
// numbers. Throws ParseError on malformed content, IoError when the file
// cannot be read.
LabeledDataset load_csv(const std::filesystem::path& path);

// Binary container ("CPL1"): 4-byte magic, u32 format version, u64 n,
// u32 k, n*k binary32 logits row-major, n u32 labels; all integers and
// floats little-endian. Round-trips any valid dataset exactly.
std::vector<std::uint8_t> encode_binary(const LabeledDataset& dataset);
LabeledDataset decode_binary(std::span<const std::uint8_t> bytes);
void save_binary(const LabeledDataset& dataset,
                 const std::filesystem::path& path);
LabeledDataset load_binary(const std::filesystem::path& path);

// Loads either container: binary when the magic matches, CSV otherwise.
LabeledDataset load_dataset(const std::filesystem::path& path);

// Row-wise softmax of logits / temperature, computed in double with the
// row max subtracted before exponentiation so large logits cannot
// overflow. temperature must be positive and finite.
ProbabilityMatrix softmax(const LogitMatrix& logits, double temperature);

// Deterministic two-way split: a seeded shuffle of row indices, with the
// first round(fraction_a * n) rows (clamped so both parts are non-empty)
// becoming part_a. fraction_a must lie in (0, 1) and n must be >= 2.
// The same seed always yields the same partition.
SplitResult split_dataset(const LabeledDataset& dataset, double fraction_a,
                          std::uint64_t seed);

}  // namespace cpl
