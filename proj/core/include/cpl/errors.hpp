#pragma once

#include <stdexcept>
#include <string>

namespace cpl {

// Malformed input content: bad CSV fields, corrupt binary containers,
// unparseable JSON records. Messages carry enough context (line numbers,
// offending values) to locate the problem in the input.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Operating-system level I/O failure: file missing at read time, short
// write, unwritable destination.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cpl
