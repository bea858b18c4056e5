#pragma once

#include <stdexcept>
#include <string>

namespace solarlab {

// Error taxonomy. The CLI maps these to exit codes: ConfigError,
// ValidationError and ParseError exit 2, IoError and anything else
// runtime-ish exits 3, usage problems exit 1 before we get here.

// filesystem problems: missing file, unwritable path, truncated stream
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// structurally bad input: wrong header, malformed row, bad magic
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// well-formed input with unacceptable content: negative price, bad range
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// bad knob settings: dimension mismatch, fraction out of (0,1)
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse by the caller: step after done, backward without forward.
// Derives from logic_error on purpose, these are bugs, not bad data.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace solarlab
