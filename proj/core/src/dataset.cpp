#include "cpl/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cpl/errors.hpp"
#include "cpl/parallel.hpp"
#include "cpl/rng.hpp"

namespace cpl {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'L', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4;

std::string format_path(const std::filesystem::path& path) {
  return path.string();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + format_path(path) + "' for reading");
  }
  std::vector<std::uint8_t> bytes;
  in.seekg(0, std::ios::end);
  const std::streampos end = in.tellg();
  if (end < 0) {
    throw IoError("cannot determine size of '" + format_path(path) + "'");
  }
  bytes.resize(static_cast<std::size_t>(end));
  in.seekg(0, std::ios::beg);
  if (!bytes.empty() &&
      !in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("failed reading '" + format_path(path) + "'");
  }
  return bytes;
}

// --- little-endian primitives ---------------------------------------------

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

// --- CSV parsing -----------------------------------------------------------

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

bool parse_double_field(std::string_view field, double& out) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_label_field(std::string_view field, long long& out) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), last, out);
  return ec == std::errc() && ptr == last;
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

LabeledDataset parse_csv(std::string_view content, const std::string& origin) {
  LabeledDataset dataset;
  std::vector<std::string_view> fields;
  std::size_t line_number = 0;
  std::size_t columns = 0;
  bool saw_data_or_header = false;

  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t eol = content.find('\n', pos);
    std::string_view line = content.substr(
        pos, eol == std::string_view::npos ? content.size() - pos
                                           : eol - pos);
    pos = eol == std::string_view::npos ? content.size() + 1 : eol + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    split_fields(line, fields);

    if (!saw_data_or_header) {
      saw_data_or_header = true;
      double probe = 0.0;
      if (!parse_double_field(fields[0], probe)) {
        continue;  // header line
      }
    }

    if (dataset.logits.n == 0 && columns == 0) {
      columns = fields.size();
      if (columns < 3) {
        throw ParseError(origin + ": line " + std::to_string(line_number) +
                         ": need at least 2 logit columns and a label, found " +
                         std::to_string(columns) + " fields");
      }
      dataset.logits.k = columns - 1;
    } else if (fields.size() != columns) {
      throw ParseError(origin + ": line " + std::to_string(line_number) +
                       ": expected " + std::to_string(columns) +
                       " fields, found " + std::to_string(fields.size()));
    }

    for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
      double value = 0.0;
      if (!parse_double_field(fields[j], value)) {
        throw ParseError(origin + ": line " + std::to_string(line_number) +
                         ": column " + std::to_string(j + 1) +
                         ": cannot parse '" + std::string(trim(fields[j])) +
                         "' as a number");
      }
      if (!std::isfinite(value)) {
        throw ParseError(origin + ": line " + std::to_string(line_number) +
                         ": column " + std::to_string(j + 1) +
                         ": logit must be finite");
      }
      dataset.logits.values.push_back(static_cast<float>(value));
    }

    long long label = 0;
    if (!parse_label_field(fields.back(), label)) {
      throw ParseError(origin + ": line " + std::to_string(line_number) +
                       ": cannot parse label '" +
                       std::string(trim(fields.back())) + "' as an integer");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= dataset.logits.k) {
      throw ParseError(origin + ": line " + std::to_string(line_number) +
                       ": label " + std::to_string(label) +
                       " out of range [0, " +
                       std::to_string(dataset.logits.k) + ")");
    }
    dataset.labels.push_back(static_cast<std::uint32_t>(label));
    ++dataset.logits.n;
  }

  if (dataset.logits.n == 0) {
    throw ParseError(origin + ": no data rows");
  }
  return dataset;
}

LabeledDataset gather_rows(const LabeledDataset& dataset,
                           std::span<const std::uint64_t> indices) {
  LabeledDataset out;
  out.logits.n = indices.size();
  out.logits.k = dataset.k();
  out.logits.values.resize(indices.size() * dataset.k());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = dataset.logits.row(indices[i]);
    std::copy(src.begin(), src.end(),
              out.logits.values.begin() + i * dataset.k());
    out.labels[i] = dataset.labels[indices[i]];
  }
  return out;
}

}  // namespace

void LogitMatrix::validate() const {
  if (n == 0) throw std::invalid_argument("logit matrix has no rows");
  if (k < 2) {
    throw std::invalid_argument("logit matrix needs at least 2 classes, got " +
                                std::to_string(k));
  }
  if (values.size() != n * k) {
    throw std::invalid_argument(
        "logit matrix shape mismatch: " + std::to_string(n) + "x" +
        std::to_string(k) + " declared, " + std::to_string(values.size()) +
        " entries stored");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("logit entry at row " +
                                  std::to_string(i / k) + ", column " +
                                  std::to_string(i % k) + " is not finite");
    }
  }
}

void ProbabilityMatrix::validate() const {
  if (n == 0) throw std::invalid_argument("probability matrix has no rows");
  if (k < 2) {
    throw std::invalid_argument(
        "probability matrix needs at least 2 classes, got " +
        std::to_string(k));
  }
  if (values.size() != n * k) {
    throw std::invalid_argument("probability matrix shape mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double p : row(i)) {
      if (!(p >= 0.0) || !(p <= 1.0)) {
        throw std::invalid_argument("probability entry out of [0, 1] at row " +
                                    std::to_string(i));
      }
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("probability row " + std::to_string(i) +
                                  " sums to " + std::to_string(sum) +
                                  ", expected 1");
    }
  }
}

void LabeledDataset::validate() const {
  logits.validate();
  if (labels.size() != logits.n) {
    throw std::invalid_argument("dataset has " + std::to_string(logits.n) +
                                " rows but " + std::to_string(labels.size()) +
                                " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.k) {
      throw std::invalid_argument(
          "label " + std::to_string(labels[i]) + " at row " +
          std::to_string(i) + " out of range [0, " + std::to_string(logits.k) +
          ")");
    }
  }
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string_view content(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size());
  return parse_csv(content, format_path(path));
}

std::vector<std::uint8_t> encode_binary(const LabeledDataset& dataset) {
  dataset.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + dataset.logits.values.size() * 4 +
              dataset.labels.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kFormatVersion);
  put_u64(out, dataset.n());
  put_u32(out, static_cast<std::uint32_t>(dataset.k()));
  for (float v : dataset.logits.values) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  for (std::uint32_t label : dataset.labels) {
    put_u32(out, label);
  }
  return out;
}

LabeledDataset decode_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw ParseError("binary dataset truncated: " +
                     std::to_string(bytes.size()) +
                     " bytes is too short for the magic");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("bad magic: not a CPL1 dataset");
  }
  if (bytes.size() < kHeaderBytes) {
    throw ParseError("binary dataset truncated: header needs " +
                     std::to_string(kHeaderBytes) + " bytes, found " +
                     std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFormatVersion) {
    throw ParseError("unsupported dataset format version " +
                     std::to_string(version) + ", expected " +
                     std::to_string(kFormatVersion));
  }
  const std::uint64_t n = get_u64(bytes.data() + 8);
  const std::uint32_t k = get_u32(bytes.data() + 16);
  if (n == 0) throw ParseError("binary dataset declares zero rows");
  if (k < 2) {
    throw ParseError("binary dataset declares " + std::to_string(k) +
                     " classes, need at least 2");
  }

  const unsigned __int128 expected =
      static_cast<unsigned __int128>(kHeaderBytes) +
      static_cast<unsigned __int128>(n) * (4ull * k + 4ull);
  if (static_cast<unsigned __int128>(bytes.size()) < expected) {
    throw ParseError("binary dataset truncated: payload for " +
                     std::to_string(n) + "x" + std::to_string(k) +
                     " needs more bytes than the " +
                     std::to_string(bytes.size()) + " present");
  }
  if (static_cast<unsigned __int128>(bytes.size()) > expected) {
    throw ParseError("binary dataset has trailing bytes after the payload");
  }

  LabeledDataset dataset;
  dataset.logits.n = static_cast<std::size_t>(n);
  dataset.logits.k = k;
  dataset.logits.values.resize(dataset.logits.n * dataset.logits.k);
  dataset.labels.resize(dataset.logits.n);

  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < dataset.logits.values.size(); ++i, p += 4) {
    const float value = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(value)) {
      throw ParseError("binary dataset logit at row " +
                       std::to_string(i / dataset.logits.k) + ", column " +
                       std::to_string(i % dataset.logits.k) +
                       " is not finite");
    }
    dataset.logits.values[i] = value;
  }
  for (std::size_t i = 0; i < dataset.labels.size(); ++i, p += 4) {
    const std::uint32_t label = get_u32(p);
    if (label >= dataset.logits.k) {
      throw ParseError("binary dataset label " + std::to_string(label) +
                       " at row " + std::to_string(i) + " out of range [0, " +
                       std::to_string(dataset.logits.k) + ")");
    }
    dataset.labels[i] = label;
  }
  return dataset;
}

void save_binary(const LabeledDataset& dataset,
                 const std::filesystem::path& path) {
  const auto bytes = encode_binary(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + format_path(path) + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw IoError("failed writing '" + format_path(path) + "'");
  }
}

LabeledDataset load_binary(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_binary(bytes);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) {
    return decode_binary(bytes);
  }
  const std::string_view content(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size());
  return parse_csv(content, format_path(path));
}

ProbabilityMatrix softmax(const LogitMatrix& logits, double temperature) {
  logits.validate();
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw std::invalid_argument("temperature must be positive and finite");
  }
  ProbabilityMatrix probs;
  probs.n = logits.n;
  probs.k = logits.k;
  probs.values.resize(logits.n * logits.k);

  par::parallel_for(0, logits.n, [&](std::size_t i) {
    const auto row = logits.row(i);
    double row_max = row[0];
    for (float v : row) row_max = std::max(row_max, static_cast<double>(v));
    double* dst = probs.values.data() + i * logits.k;
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.k; ++j) {
      const double e =
          std::exp((static_cast<double>(row[j]) - row_max) / temperature);
      dst[j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < logits.k; ++j) dst[j] /= sum;
  });
  return probs;
}

SplitResult split_dataset(const LabeledDataset& dataset, double fraction_a,
                          std::uint64_t seed) {
  dataset.validate();
  if (dataset.n() < 2) {
    throw std::invalid_argument("cannot split a dataset with fewer than 2 rows");
  }
  if (!(fraction_a > 0.0) || !(fraction_a < 1.0)) {
    throw std::invalid_argument("split fraction must lie strictly in (0, 1)");
  }

  const std::size_t n = dataset.n();
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), std::uint64_t{0});

  const rng::CounterRng shuffle(seed, rng::Stream::kSplit);
  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::uint64_t j = shuffle.below(i, i + 1);
    std::swap(order[i], order[j]);
  }

  const double target = fraction_a * static_cast<double>(n);
  auto size_a = static_cast<std::size_t>(std::floor(target + 0.5));
  size_a = std::clamp<std::size_t>(size_a, 1, n - 1);

  SplitResult result;
  result.part_a = gather_rows(
      dataset, std::span<const std::uint64_t>(order.data(), size_a));
  result.part_b = gather_rows(
      dataset,
      std::span<const std::uint64_t>(order.data() + size_a, n - size_a));
  return result;
}

}  // namespace cpl
